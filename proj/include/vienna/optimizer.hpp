#pragma once

#include "vienna/tensor.hpp"

#include <string>
#include <vector>

namespace vienna {

/// A parameter together with its dotted manifest path.
struct NamedParam {
  std::string path;
  Parameter* param = nullptr;
};

/// Thrown when a gradient or loss stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamWConfig {
  Scalar learning_rate = 2.5e-4;
  Scalar weight_decay = 1e-2;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar epsilon = 1e-8;
};

/// Moment buffers for decoupled-weight-decay Adam, keyed by parameter order.
struct OptimizerState {
  AdamWConfig config;
  long step_count = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

/// One AdamW update from the gradients currently held in each Parameter.
/// Weight decay shrinks the parameter before the bias-corrected Adam step.
void optimizer_step(std::span<const NamedParam> params, OptimizerState& state);

}  // namespace vienna
