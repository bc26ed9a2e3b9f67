#pragma once

// Attention, transformer blocks, masks, pooling and sinusoidal codes.

#include "vienna/optimizer.hpp"
#include "vienna/tensor.hpp"

#include <random>
#include <string>
#include <vector>

namespace vienna {

using Rng = std::mt19937_64;
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Raised when a caller breaks an operation's precondition.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Logit offset used for disallowed positions; finite so softmax stays finite.
inline constexpr Scalar kMaskedLogit = -1e9;

Matrix randn(Eigen::Index rows, Eigen::Index cols, Scalar stddev, Rng& rng);

/// Affine map x * weight + bias, weight [in x out], bias [1 x out].
struct Linear {
  Parameter weight;
  Parameter bias;
};
Linear make_linear(int in, int out, Rng& rng);
Var apply(Tape& tape, Linear& lin, Var x);

struct AttentionParams {
  Parameter wq, wk, wv, wo;
  int heads = 1;

  int width() const { return static_cast<int>(wq.value.rows()); }
};
AttentionParams make_attention(int d, int heads, Rng& rng);

struct BlockParams {
  AttentionParams attn;
  Parameter ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  Linear fc1, fc2;
};
BlockParams make_block(int d, int heads, Rng& rng);

void collect(std::vector<NamedParam>& out, const std::string& prefix, Linear& p);
void collect(std::vector<NamedParam>& out, const std::string& prefix, AttentionParams& p);
void collect(std::vector<NamedParam>& out, const std::string& prefix, BlockParams& p);

/// Additive softmax bias for a boolean allow-mask; every row must allow
/// at least one position.
Matrix mask_bias(const BoolMatrix& allow);

/// Multi-head scaled dot-product attention of queries x [n x d] over
/// context y [m x d], followed by the output projection.
Var attend(Tape& tape, Var x, Var y, AttentionParams& params, const BoolMatrix* mask = nullptr);
/// Row-wise attention weights of each head (for inspection).
std::vector<Matrix> attention_weights(Tape& tape, Var x, Var y, AttentionParams& params,
                                      const BoolMatrix* mask = nullptr);

/// Pre-norm cross-attention block: x' = x + MHA(LN(x), y); z = x' + MLP(LN(x')).
Var block(Tape& tape, Var x, Var y, BlockParams& params, const BoolMatrix* mask = nullptr);
/// Self-attention block (y == x after normalization).
Var block(Tape& tape, Var x, BlockParams& params, const BoolMatrix* mask = nullptr);

/// Row of a causal self-attention block at the last position of `x`, with
/// every earlier row as context.
Var block_last(Tape& tape, Var x, BlockParams& params);

/// `blocks` diagonal blocks of rows_per x cols_per allowed entries.
BoolMatrix block_diagonal(Eigen::Index blocks, Eigen::Index rows_per, Eigen::Index cols_per);

/// Position i may attend to j iff j <= i.
BoolMatrix causal_mask(int t);

Var avg_pool(Var x);

/// Sinusoidal code for epoch t >= 1 (position t - 1), width d.
RowVector epoch_embed(int t, int d);
/// Sinusoidal code of a sub-view bearing in radians.
RowVector orientation_embed(Scalar angle, int d);

}  // namespace vienna
