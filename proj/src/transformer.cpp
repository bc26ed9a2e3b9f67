#include "vienna/transformer.hpp"

#include <cmath>

namespace vienna {

Matrix randn(Eigen::Index rows, Eigen::Index cols, Scalar stddev, Rng& rng) {
  std::normal_distribution<Scalar> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Linear make_linear(int in, int out, Rng& rng) {
  return Linear{Parameter(randn(in, out, 1.0 / std::sqrt(static_cast<Scalar>(in)), rng)),
                Parameter(Matrix::Zero(1, out))};
}

Var apply(Tape& tape, Linear& lin, Var x) {
  return add_row(matmul(x, tape.param(lin.weight)), tape.param(lin.bias));
}

AttentionParams make_attention(int d, int heads, Rng& rng) {
  if (heads < 1 || d % heads != 0) {
    throw ContractError("attention width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
                        " heads");
  }
  const Scalar s = 1.0 / std::sqrt(static_cast<Scalar>(d));
  AttentionParams p;
  p.wq = Parameter(randn(d, d, s, rng));
  p.wk = Parameter(randn(d, d, s, rng));
  p.wv = Parameter(randn(d, d, s, rng));
  p.wo = Parameter(randn(d, d, s, rng));
  p.heads = heads;
  return p;
}

BlockParams make_block(int d, int heads, Rng& rng) {
  BlockParams b;
  b.attn = make_attention(d, heads, rng);
  b.ln1_gain = Parameter(Matrix::Ones(1, d));
  b.ln1_bias = Parameter(Matrix::Zero(1, d));
  b.ln2_gain = Parameter(Matrix::Ones(1, d));
  b.ln2_bias = Parameter(Matrix::Zero(1, d));
  b.fc1 = make_linear(d, 4 * d, rng);
  b.fc2 = make_linear(4 * d, d, rng);
  return b;
}

void collect(std::vector<NamedParam>& out, const std::string& prefix, Linear& p) {
  out.push_back({prefix + ".weight", &p.weight});
  out.push_back({prefix + ".bias", &p.bias});
}

void collect(std::vector<NamedParam>& out, const std::string& prefix, AttentionParams& p) {
  out.push_back({prefix + ".wq", &p.wq});
  out.push_back({prefix + ".wk", &p.wk});
  out.push_back({prefix + ".wv", &p.wv});
  out.push_back({prefix + ".wo", &p.wo});
}

void collect(std::vector<NamedParam>& out, const std::string& prefix, BlockParams& p) {
  collect(out, prefix + ".attn", p.attn);
  out.push_back({prefix + ".ln1.gain", &p.ln1_gain});
  out.push_back({prefix + ".ln1.bias", &p.ln1_bias});
  out.push_back({prefix + ".ln2.gain", &p.ln2_gain});
  out.push_back({prefix + ".ln2.bias", &p.ln2_bias});
  collect(out, prefix + ".fc1", p.fc1);
  collect(out, prefix + ".fc2", p.fc2);
}

Matrix mask_bias(const BoolMatrix& allow) {
  Matrix bias(allow.rows(), allow.cols());
  for (Eigen::Index r = 0; r < allow.rows(); ++r) {
    if (!allow.row(r).any()) throw ContractError("attention mask row " + std::to_string(r) + " is fully masked");
    for (Eigen::Index c = 0; c < allow.cols(); ++c) bias(r, c) = allow(r, c) ? 0.0 : kMaskedLogit;
  }
  return bias;
}

namespace {

struct Projected {
  Var q, k, v;
  int heads;
  int head_dim;
};

Projected project(Tape& tape, Var x, Var y, AttentionParams& p) {
  const Eigen::Index d = p.wq.value.rows();
  if (x.cols() != d || y.cols() != d) {
    throw DimensionError("attend: width " + std::to_string(d) + " expected, got x " + shape_str(x.value()) + ", y " +
                         shape_str(y.value()));
  }
  return {matmul(x, tape.param(p.wq)), matmul(y, tape.param(p.wk)), matmul(y, tape.param(p.wv)), p.heads,
          static_cast<int>(d) / p.heads};
}

Var head_weights(Var q, Var k, int h, int dh, const Matrix* bias) {
  Var qh = q.cols() == dh ? q : slice_cols(q, h * dh, dh);
  Var kh = k.cols() == dh ? k : slice_cols(k, h * dh, dh);
  Var logits = scale(matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<Scalar>(dh)));
  return softmax_rows(logits, bias);
}

}  // namespace

Var attend(Tape& tape, Var x, Var y, AttentionParams& params, const BoolMatrix* mask) {
  Projected pr = project(tape, x, y, params);
  Matrix bias;
  if (mask) {
    if (mask->rows() != x.rows() || mask->cols() != y.rows()) {
      throw DimensionError("attend: mask is [" + std::to_string(mask->rows()) + "x" + std::to_string(mask->cols()) +
                           "] for " + shape_str(x.value()) + " over " + shape_str(y.value()));
    }
    bias = mask_bias(*mask);
  }
  const Matrix* b = mask ? &bias : nullptr;
  Var heads_out;
  if (pr.heads == 1) {
    heads_out = matmul(head_weights(pr.q, pr.k, 0, pr.head_dim, b), pr.v);
  } else {
    std::vector<Var> outs;
    outs.reserve(static_cast<std::size_t>(pr.heads));
    for (int h = 0; h < pr.heads; ++h) {
      Var w = head_weights(pr.q, pr.k, h, pr.head_dim, b);
      outs.push_back(matmul(w, slice_cols(pr.v, h * pr.head_dim, pr.head_dim)));
    }
    heads_out = concat_cols(outs);
  }
  return matmul(heads_out, tape.param(params.wo));
}

std::vector<Matrix> attention_weights(Tape& tape, Var x, Var y, AttentionParams& params, const BoolMatrix* mask) {
  Projected pr = project(tape, x, y, params);
  Matrix bias;
  if (mask) bias = mask_bias(*mask);
  std::vector<Matrix> out;
  for (int h = 0; h < pr.heads; ++h) out.push_back(head_weights(pr.q, pr.k, h, pr.head_dim, mask ? &bias : nullptr).value());
  return out;
}

namespace {

Var mlp_residual(Tape& tape, Var x1, BlockParams& p) {
  Var h = layer_norm(x1, tape.param(p.ln2_gain), tape.param(p.ln2_bias));
  h = apply(tape, p.fc2, gelu(apply(tape, p.fc1, h)));
  return add(x1, h);
}

}  // namespace

Var block(Tape& tape, Var x, Var y, BlockParams& p, const BoolMatrix* mask) {
  Var xn = layer_norm(x, tape.param(p.ln1_gain), tape.param(p.ln1_bias));
  Var x1 = add(x, attend(tape, xn, y, p.attn, mask));
  return mlp_residual(tape, x1, p);
}

Var block(Tape& tape, Var x, BlockParams& p, const BoolMatrix* mask) {
  Var xn = layer_norm(x, tape.param(p.ln1_gain), tape.param(p.ln1_bias));
  Var x1 = add(x, attend(tape, xn, xn, p.attn, mask));
  return mlp_residual(tape, x1, p);
}

Var block_last(Tape& tape, Var x, BlockParams& p) {
  Var xn = layer_norm(x, tape.param(p.ln1_gain), tape.param(p.ln1_bias));
  const Eigen::Index last = x.rows() - 1;
  Var x1 = add(slice_rows(x, last, 1), attend(tape, slice_rows(xn, last, 1), xn, p.attn));
  return mlp_residual(tape, x1, p);
}

BoolMatrix block_diagonal(Eigen::Index blocks, Eigen::Index rows_per, Eigen::Index cols_per) {
  BoolMatrix m = BoolMatrix::Constant(blocks * rows_per, blocks * cols_per, false);
  for (Eigen::Index b = 0; b < blocks; ++b) m.block(b * rows_per, b * cols_per, rows_per, cols_per).setConstant(true);
  return m;
}

BoolMatrix causal_mask(int t) {
  if (t < 1) throw ContractError("causal_mask: length must be >= 1");
  BoolMatrix m(t, t);
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < t; ++j) m(i, j) = j <= i;
  return m;
}

Var avg_pool(Var x) {
  if (x.rows() < 1) throw ContractError("avg_pool: empty sequence");
  return mean_rows(x);
}

RowVector epoch_embed(int t, int d) {
  if (t < 1) throw ContractError("epoch_embed: epochs start at 1");
  const Scalar pos = static_cast<Scalar>(t - 1);
  RowVector e(d);
  for (int i = 0; i < d; ++i) {
    const Scalar freq = std::pow(10000.0, -static_cast<Scalar>(2 * (i / 2)) / static_cast<Scalar>(d));
    e(i) = (i % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
  }
  return e;
}

RowVector orientation_embed(Scalar angle, int d) {
  RowVector e(d);
  for (int i = 0; i < d; ++i) {
    const Scalar harmonic = static_cast<Scalar>((i / 2) % 6 + 1);
    e(i) = (i % 2 == 0) ? std::sin(harmonic * angle) : std::cos(harmonic * angle);
  }
  return e;
}

}  // namespace vienna
