#include "vienna/model.hpp"

namespace vienna {

namespace {

// Raw depth is in meters and audio amplitudes are small; bring both near unit scale.
constexpr Scalar kDepthScale = 0.25;
constexpr Scalar kAudioScale = 4.0;

Matrix orientation_rows(Eigen::Index rows, int d) {
  Matrix m(rows, d);
  for (Eigen::Index r = 0; r < rows; ++r) m.row(r) = orientation_embed(static_cast<Scalar>(r % kSubViews) * kSubViewArc, d);
  return m;
}

}  // namespace

RawObservations stack_observations(std::span<const Panorama> panoramas) {
  if (panoramas.empty()) throw ContractError("stack_observations: no panoramas");
  const auto n = static_cast<Eigen::Index>(panoramas.size());
  const Panorama& first = panoramas.front();
  RawObservations out{Matrix(n * kSubViews, first.rgb.cols()), Matrix(n * kSubViews, first.depth.cols()),
                      Matrix(n * kSubViews, first.audio.cols())};
  for (Eigen::Index t = 0; t < n; ++t) {
    const Panorama& p = panoramas[static_cast<std::size_t>(t)];
    if (p.rgb.rows() != kSubViews || p.rgb.cols() != out.rgb.cols() || p.depth.cols() != out.depth.cols() ||
        p.audio.cols() != out.audio.cols())
      throw DimensionError("stack_observations: inconsistent panorama shapes");
    out.rgb.middleRows(t * kSubViews, kSubViews) = p.rgb;
    out.depth.middleRows(t * kSubViews, kSubViews) = p.depth * kDepthScale;
    out.audio.middleRows(t * kSubViews, kSubViews) = p.audio * kAudioScale;
  }
  return out;
}

Var encode(Tape& tape, Encoder& enc, Var raw) { return apply(tape, enc.l2, gelu(apply(tape, enc.l1, raw))); }

ModalFeatures encode_modalities(Tape& tape, ModelParams& p, Var rgb, Var depth, Var audio) {
  const Eigen::Index rows = rgb.rows();
  if (rows == 0 || rows % kSubViews != 0 || depth.rows() != rows || audio.rows() != rows)
    throw DimensionError("encode_modalities: expected 12T rows in every modality");
  const int d = p.config.d;
  const Var orient = tape.constant(orientation_rows(rows, d));
  auto one = [&](bool on, Encoder& enc, Var raw) {
    if (!on) return tape.constant(Matrix::Zero(rows, d));
    return add(encode(tape, enc, raw), orient);
  };
  const ModalityMask& m = p.config.modalities;
  return ModalFeatures{one(m.rgb, p.f_img, rgb), one(m.depth, p.f_dep, depth), one(m.audio, p.f_aud, audio)};
}

FusedSenses target_guided_fuse(Tape& tape, ModelParams& p, Var g, const ModalFeatures& feats) {
  const Eigen::Index t = g.rows();
  if (feats.v.rows() != t * kSubViews) throw DimensionError("target_guided_fuse: goal rows must match epochs");
  if (t == 1) return FusedSenses{attend(tape, g, feats.v, p.fuse_v), attend(tape, g, feats.d, p.fuse_d), attend(tape, g, feats.a, p.fuse_a)};
  const BoolMatrix mask = block_diagonal(t, 1, kSubViews);
  return FusedSenses{attend(tape, g, feats.v, p.fuse_v, &mask), attend(tape, g, feats.d, p.fuse_d, &mask),
                     attend(tape, g, feats.a, p.fuse_a, &mask)};
}

Var msi(Tape& tape, ModelParams& p, const FusedSenses& fused) {
  const Eigen::Index t = fused.v.rows();
  const std::array<Var, 3> parts{fused.v, fused.d, fused.h};
  Var x = concat_rows(parts);
  if (t > 1) {
    std::vector<int> order(static_cast<std::size_t>(3 * t));
    for (Eigen::Index s = 0; s < t; ++s)
      for (int m = 0; m < 3; ++m) order[static_cast<std::size_t>(3 * s + m)] = static_cast<int>(m * t + s);
    x = gather_rows(x, order);
  }
  const BoolMatrix mask = block_diagonal(t, 3, 3);
  for (BlockParams& b : p.msi) x = block(tape, x, b, t > 1 ? &mask : nullptr);
  return x;
}

Var action_embeddings(Tape& tape, ModelParams& p, std::span<const int> prev_actions) {
  if (prev_actions.empty()) throw ContractError("action_embeddings: no actions");
  std::vector<int> rows;
  rows.reserve(prev_actions.size());
  for (int a : prev_actions) {
    if (a < -1 || a >= kNumActions) throw ContractError("action_embeddings: action out of range");
    rows.push_back(a < 0 ? kNumActions : a);
  }
  const std::array<Var, 2> table{tape.param(p.action_table), tape.param(p.start_action)};
  return gather_rows(concat_rows(table), rows);
}

Var make_token(Tape& tape, ModelParams& p, Var o, Var a_prev) {
  const Eigen::Index t = a_prev.rows();
  if (o.rows() != 3 * t) throw DimensionError("make_token: expected 3 MSI rows per epoch");
  const std::array<Var, 2> parts{reshape(o, t, 3 * o.cols()), a_prev};
  return matmul(concat_cols(parts), tape.param(p.w_e));
}

Var encode_history(Tape& tape, ModelParams& p, Var tokens) {
  const auto t = static_cast<int>(tokens.rows());
  if (t < 1) throw ContractError("encode_history: empty history");
  if (t > p.config.max_epochs) throw ContractError("encode_history: history exceeds the epoch limit");
  Matrix mu(t, p.config.d);
  for (int i = 0; i < t; ++i) mu.row(i) = epoch_embed(i + 1, p.config.d);
  Var x = add(tokens, tape.constant(std::move(mu)));
  const BoolMatrix mask = causal_mask(t);
  for (BlockParams& b : p.history) x = block(tape, x, b, &mask);
  return x;
}

RowVector HistoryCache::push(ModelParams& p, const RowVector& token) {
  const int t = length() + 1;
  if (t > p.config.max_epochs) throw ContractError("history exceeds the epoch limit");
  layer_inputs_.resize(p.history.size());
  Tape tape(false);
  RowVector x = token + epoch_embed(t, p.config.d);
  for (std::size_t l = 0; l < p.history.size(); ++l) {
    Matrix& ctx = layer_inputs_[l];
    ctx.conservativeResize(t, x.cols());
    ctx.row(t - 1) = x;
    x = block_last(tape, tape.constant(ctx), p.history[l]).value();
  }
  encoded_.conservativeResize(t, x.cols());
  encoded_.row(t - 1) = x;
  return x;
}

void HistoryCache::reset(ModelParams& p, const Matrix& tokens) {
  const auto t = static_cast<int>(tokens.rows());
  if (t > p.config.max_epochs) throw ContractError("history exceeds the epoch limit");
  layer_inputs_.assign(p.history.size(), Matrix());
  encoded_.resize(0, tokens.cols());
  if (t == 0) return;
  Tape tape(false);
  Matrix x = tokens;
  for (int i = 0; i < t; ++i) x.row(i) += epoch_embed(i + 1, p.config.d);
  const BoolMatrix mask = causal_mask(t);
  for (std::size_t l = 0; l < p.history.size(); ++l) {
    layer_inputs_[l] = x;
    x = block(tape, tape.constant(x), p.history[l], &mask).value();
  }
  encoded_ = std::move(x);
}

}  // namespace vienna
