#include "vienna/model.hpp"
#include "vienna/optimizer.hpp"

#include <cmath>

namespace vienna {

Var plan(Tape& tape, ModelParams& p, Var queries, Var history, TaskKind task, const BoolMatrix* mask) {
  const auto k = static_cast<std::size_t>(task);
  if (!p.value_head[k]) throw ContractError(std::string("plan: task not instantiated: ") + task_name(task));
  Var x = queries;
  for (BlockParams& b : p.planner_shared) x = block(tape, x, history, b, mask);
  for (BlockParams& b : p.planner_private[k]) x = block(tape, x, history, b, mask);
  return x;
}

HeadOutput action_head(Tape& tape, ModelParams& p, Var c, Var v, Var d, Var a, TaskKind task) {
  const auto k = static_cast<std::size_t>(task);
  if (!p.value_head[k]) throw ContractError(std::string("action_head: task not instantiated: ") + task_name(task));
  const Eigen::Index rows = v.rows();
  if (rows == 0 || rows % kSubViews != 0 || d.rows() != rows || a.rows() != rows)
    throw DimensionError("action_head: sub-view embeddings must have 12T rows");
  const Eigen::Index t = rows / kSubViews;
  if (c.rows() % t != 0) throw DimensionError("action_head: goal-query rows must be a multiple of T");
  const Eigen::Index n = c.rows() / t;

  Var c_bar;
  if (t == 1) {
    c_bar = mean_rows(c);
  } else {
    Matrix avg = Matrix::Zero(t, c.rows());
    for (Eigen::Index s = 0; s < t; ++s) avg.block(s, s * n, 1, n).setConstant(1.0 / static_cast<double>(n));
    c_bar = matmul(tape.constant(std::move(avg)), c);
  }
  const Var b_bar = scale(add(add(v, d), a), 1.0 / 3.0);
  Var z = matmul(c_bar, tape.param(p.w_p));
  if (t > 1) {
    std::vector<int> rep(static_cast<std::size_t>(rows));
    for (Eigen::Index r = 0; r < rows; ++r) rep[static_cast<std::size_t>(r)] = static_cast<int>(r / kSubViews);
    z = gather_rows(z, rep);
  }
  const Var ones = tape.constant(Matrix::Ones(v.cols(), 1));
  // With T = 1 the single z row broadcasts over the 12 sub-views via mul_row.
  const Var scores = t == 1 ? matmul(mul_row(b_bar, z), ones) : matmul(mul(z, b_bar), ones);
  const std::array<Var, 2> parts{reshape(scores, t, kSubViews), tape.constant(Matrix::Zero(t, 1))};
  const Var logits = concat_cols(parts);
  if (!logits.value().allFinite()) throw DivergenceError("action_head: non-finite logits");
  return HeadOutput{logits, apply(tape, *p.value_head[k], c_bar)};
}

int act_greedy(const RowVector& probs) {
  if (probs.size() != kNumActions || !probs.allFinite() || std::abs(probs.sum() - 1.0) > 1e-6)
    throw ContractError("act_greedy: not a distribution over the 13 actions");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < probs.size(); ++i)
    if (probs(i) > probs(best)) best = i;
  return static_cast<int>(best);
}

}  // namespace vienna
