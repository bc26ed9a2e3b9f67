#include "vienna/model.hpp"

#include <cmath>

namespace vienna {

namespace {

// Adaptive average pooling of 12 sub-view rows down (or up) to n rows.
Matrix pool_matrix(int n, int in) {
  Matrix m = Matrix::Zero(n, in);
  for (int i = 0; i < n; ++i) {
    const int lo = (i * in) / n;
    const int hi = std::max(lo + 1, ((i + 1) * in + n - 1) / n);
    for (int j = lo; j < hi; ++j) m(i, j) = 1.0 / (hi - lo);
  }
  return m;
}

}  // namespace

TargetInput target_input(const Episode& episode) {
  TargetInput in;
  in.task = episode.task;
  if (static_cast<int>(episode.target.index()) != static_cast<int>(episode.task))
    throw ContractError("target_input: target payload does not match the task");
  switch (episode.task) {
    case TaskKind::ImageGoal: in.goal_rgb = std::get<GoalView>(episode.target).rgb; break;
    case TaskKind::AudioGoal: break;
    case TaskKind::ObjectGoal: in.category = std::get<ClassTag>(episode.target).category; break;
    case TaskKind::VisionLanguage: in.tokens = std::get<Instruction>(episode.target).tokens; break;
  }
  return in;
}

Var tile_rows(Var x, int rows) {
  const auto n = static_cast<int>(x.rows());
  if (n < 1 || rows < n) throw ContractError("tile_rows: need 1 <= rows(x) <= target rows");
  std::vector<int> idx(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) idx[static_cast<std::size_t>(r)] = r % n;
  return gather_rows(x, idx);
}

Var lstm(Tape& tape, Lstm& cell, Var x, bool reverse) {
  const auto len = static_cast<int>(x.rows());
  const auto h = static_cast<Eigen::Index>(cell.wh.value.rows());
  const Var wh = tape.param(cell.wh);
  const Var xw = add_row(matmul(x, tape.param(cell.wx)), tape.param(cell.b));
  Var hs = tape.constant(Matrix::Zero(1, h));
  Var cs = tape.constant(Matrix::Zero(1, h));
  std::vector<Var> out(static_cast<std::size_t>(len));
  for (int i = 0; i < len; ++i) {
    const int s = reverse ? len - 1 - i : i;
    const Var gates = add(slice_rows(xw, s, 1), matmul(hs, wh));
    const Var in = sigmoid(slice_cols(gates, 0, h));
    const Var forget = sigmoid(slice_cols(gates, h, h));
    const Var g = tanh(slice_cols(gates, 2 * h, h));
    const Var o = sigmoid(slice_cols(gates, 3 * h, h));
    cs = add(mul(forget, cs), mul(in, g));
    hs = mul(o, tanh(cs));
    out[static_cast<std::size_t>(s)] = hs;
  }
  return concat_rows(out);
}

Var pooled_goal(Var g_aug) { return mean_rows(g_aug); }

TargetBlocks embed_target(Tape& tape, ModelParams& p, const TargetInput& target, std::optional<Var> audio_feats) {
  const ModelConfig& c = p.config;
  const int d = c.d;
  auto zeros = [&](int rows) { return tape.constant(Matrix::Zero(rows, d)); };
  TargetBlocks b{zeros(c.n_image), zeros(c.n_audio()), zeros(1), zeros(c.n_lang)};
  switch (target.task) {
    case TaskKind::ImageGoal: {
      if (target.goal_rgb.rows() != kSubViews || target.goal_rgb.cols() != c.feat_v)
        throw DimensionError("embed_target: goal image must be 12 x F_v");
      const Var pooled = tape.constant(pool_matrix(c.n_image, kSubViews) * target.goal_rgb);
      b.image = encode(tape, p.f_img, pooled);
      break;
    }
    case TaskKind::AudioGoal:
      if (!audio_feats) throw ContractError("embed_target: AudioGoal needs this epoch's audio features");
      if (audio_feats->rows() != kSubViews) throw DimensionError("embed_target: audio features must be 12 x d");
      b.audio = *audio_feats;
      break;
    case TaskKind::ObjectGoal: {
      if (target.category < 0 || target.category >= c.categories) throw ContractError("embed_target: unknown category");
      const int row[1] = {target.category};
      b.tag = gather_rows(tape.param(p.class_table), row);
      break;
    }
    case TaskKind::VisionLanguage: {
      const auto len = static_cast<int>(target.tokens.size());
      if (len < 1) throw ContractError("embed_target: empty instruction");
      if (len > c.n_lang) throw ContractError("embed_target: instruction longer than N_L");
      for (int t : target.tokens)
        if (t < 0 || t >= vocab::kSize) throw ContractError("embed_target: token out of vocabulary");
      const Var words = gather_rows(tape.param(p.word_table), target.tokens);
      const std::array<Var, 2> dirs{lstm(tape, p.lstm_fwd, words, false), lstm(tape, p.lstm_bwd, words, true)};
      b.language = concat_cols(dirs);
      break;
    }
  }
  return b;
}

Var build_augmented(Tape& tape, ModelParams& p, const TargetBlocks& blocks) {
  const int n = p.config.n_goal();
  const std::array<Var, kNumTasks> in{blocks.image, blocks.audio, blocks.tag, blocks.language};
  std::array<Var, kNumTasks> out;
  for (std::size_t k = 0; k < in.size(); ++k) out[k] = add_row(tile_rows(in[k], n), tape.param(p.task_embed[k]));
  return concat_rows(out);
}

Var parse_goals(Tape& tape, ModelParams& p, Var pooled_history, Var g_aug, const BoolMatrix* mask,
                std::vector<Matrix>* weights) {
  const auto t = static_cast<int>(pooled_history.rows());
  const auto heads = static_cast<int>(p.goal_heads.size());
  const double inv = 1.0 / std::sqrt(static_cast<double>(p.config.d));
  Matrix bias;
  if (mask) {
    if (mask->rows() != t || mask->cols() != g_aug.rows()) throw DimensionError("parse_goals: mask shape");
    bias = mask_bias(*mask);
  }
  std::vector<Var> per_head;
  per_head.reserve(static_cast<std::size_t>(heads));
  for (GoalHead& h : p.goal_heads) {
    const Var q = matmul(pooled_history, tape.param(h.wq));
    const Var k = matmul(g_aug, tape.param(h.wk));
    const Var v = matmul(g_aug, tape.param(h.wv));
    const Var w = softmax_rows(scale(matmul_nt(q, k), inv), mask ? &bias : nullptr);
    if (weights) weights->push_back(w.value());
    per_head.push_back(matmul(w, v));
  }
  Var q = concat_rows(per_head);
  if (t > 1 && heads > 1) {
    std::vector<int> order(static_cast<std::size_t>(t * heads));
    for (int s = 0; s < t; ++s)
      for (int h = 0; h < heads; ++h) order[static_cast<std::size_t>(s * heads + h)] = h * t + s;
    q = gather_rows(q, order);
  }
  return q;
}

}  // namespace vienna
