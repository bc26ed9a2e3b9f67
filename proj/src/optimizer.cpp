#include "vienna/optimizer.hpp"

#include <cmath>

namespace vienna {

void optimizer_step(std::span<const NamedParam> params, OptimizerState& state) {
  for (const NamedParam& np : params) {
    if (!np.param->grad.allFinite()) throw DivergenceError("non-finite gradient in parameter '" + np.path + "'");
  }
  if (state.first_moment.empty()) {
    for (const NamedParam& np : params) {
      state.first_moment.push_back(Matrix::Zero(np.param->value.rows(), np.param->value.cols()));
      state.second_moment.push_back(Matrix::Zero(np.param->value.rows(), np.param->value.cols()));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("optimizer state tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }

  const AdamWConfig& c = state.config;
  ++state.step_count;
  const Scalar bc1 = 1.0 - std::pow(c.beta1, static_cast<Scalar>(state.step_count));
  const Scalar bc2 = 1.0 - std::pow(c.beta2, static_cast<Scalar>(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i].param;
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    if (m.rows() != p.value.rows() || m.cols() != p.value.cols()) {
      throw DimensionError("optimizer moments " + shape_str(m) + " do not match '" + params[i].path + "' " +
                           shape_str(p.value));
    }
    p.value *= (1.0 - c.learning_rate * c.weight_decay);
    m = c.beta1 * m + (1.0 - c.beta1) * p.grad;
    v = c.beta2 * v + (1.0 - c.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= c.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.epsilon);
  }
}

}  // namespace vienna
