#include "vienna/model.hpp"

namespace vienna {

namespace {

struct EpisodeGoals {
  Var pooled;  // g_t per epoch, T x d
  Var keys;    // G, or the stacked G_t of epochs >= begin for live audio targets
};

EpisodeGoals episode_goals(Tape& tape, ModelParams& p, const TargetInput& target, const ModalFeatures& feats, int begin) {
  const auto t = static_cast<int>(feats.a.rows() / kSubViews);
  if (target.task != TaskKind::AudioGoal) {
    const Var g_aug = build_augmented(tape, p, embed_target(tape, p, target, std::nullopt));
    return {gather_rows(pooled_goal(g_aug), std::vector<int>(static_cast<std::size_t>(t), 0)), g_aug};
  }
  std::vector<Var> pooled, stacked;
  for (int s = 0; s < t; ++s) {
    const Var g_aug = build_augmented(tape, p, embed_target(tape, p, target, slice_rows(feats.a, s * kSubViews, kSubViews)));
    pooled.push_back(pooled_goal(g_aug));
    if (s >= begin) stacked.push_back(g_aug);
  }
  return {concat_rows(pooled), concat_rows(stacked)};
}

}  // namespace

PolicyOutput forward_episode(Tape& tape, ModelParams& p, const TargetInput& target, const RawObservations& obs,
                             std::span<const int> prev_actions, int begin) {
  const auto t = static_cast<int>(prev_actions.size());
  if (t < 1 || obs.rgb.rows() != static_cast<Eigen::Index>(t) * kSubViews)
    throw DimensionError("forward_episode: observations must hold 12 rows per action");
  if (begin < 0 || begin >= t) throw ContractError("forward_episode: begin out of range");
  const int out = t - begin;

  const ModalFeatures feats = encode_modalities(tape, p, tape.constant(obs.rgb), tape.constant(obs.depth), tape.constant(obs.audio));
  const bool live_audio = target.task == TaskKind::AudioGoal;
  const EpisodeGoals goals = episode_goals(tape, p, target, feats, begin);
  Var g_keys = goals.keys;
  std::optional<BoolMatrix> key_mask;
  if (live_audio && out > 1) key_mask = block_diagonal(out, 1, g_keys.rows() / out);

  const FusedSenses fused = target_guided_fuse(tape, p, goals.pooled, feats);
  const Var tokens = make_token(tape, p, msi(tape, p, fused), action_embeddings(tape, p, prev_actions));
  const Var history = encode_history(tape, p, tokens);

  // Running mean of the encoded history up to each output epoch.
  Matrix avg = Matrix::Zero(out, t);
  for (int i = 0; i < out; ++i) avg.row(i).head(begin + i + 1).setConstant(1.0 / (begin + i + 1));
  const Var pooled = matmul(tape.constant(std::move(avg)), history);

  PolicyOutput result;
  const Var queries = parse_goals(tape, p, pooled, g_keys, key_mask ? &*key_mask : nullptr,
                                  live_audio ? nullptr : &result.parse_weights);
  const int heads = static_cast<int>(p.goal_heads.size());
  std::optional<BoolMatrix> plan_mask;
  {
    BoolMatrix m = BoolMatrix::Constant(static_cast<Eigen::Index>(out) * heads, t, false);
    for (int i = 0; i < out; ++i) m.block(static_cast<Eigen::Index>(i) * heads, 0, heads, begin + i + 1).setConstant(true);
    if (!m.all()) plan_mask = std::move(m);
  }
  const Var c = plan(tape, p, queries, history, target.task, plan_mask ? &*plan_mask : nullptr);
  const Eigen::Index r0 = static_cast<Eigen::Index>(begin) * kSubViews, rn = static_cast<Eigen::Index>(out) * kSubViews;
  const HeadOutput head = action_head(tape, p, c, slice_rows(feats.v, r0, rn), slice_rows(feats.d, r0, rn),
                                      slice_rows(feats.a, r0, rn), target.task);
  result.logits = head.logits;
  result.value = head.value;
  return result;
}

PolicyRunner::PolicyRunner(ModelParams& params, TargetInput target) : params_(&params), target_(std::move(target)) {
  if (!params.value_head[static_cast<std::size_t>(target_.task)])
    throw ContractError(std::string("policy: task not instantiated: ") + task_name(target_.task));
  if (target_.task != TaskKind::AudioGoal) {
    Tape tape(false);
    static_goal_ = build_augmented(tape, params, embed_target(tape, params, target_, std::nullopt)).value();
  }
  history_sum_ = RowVector::Zero(params.config.d);
}

void PolicyRunner::rebuild(std::span<const Panorama> panoramas, std::span<const int> prev_actions) {
  if (panoramas.size() != prev_actions.size()) throw ContractError("rebuild: one previous action per panorama");
  ModelParams& p = *params_;
  Tape tape(false);
  if (target_.task != TaskKind::AudioGoal)
    static_goal_ = build_augmented(tape, p, embed_target(tape, p, target_, std::nullopt)).value();
  history_sum_ = RowVector::Zero(p.config.d);
  if (panoramas.empty()) {
    history_.reset(p, Matrix(0, p.config.d));
    return;
  }
  const RawObservations raw = stack_observations(panoramas);
  const ModalFeatures feats = encode_modalities(tape, p, tape.constant(raw.rgb), tape.constant(raw.depth), tape.constant(raw.audio));
  const int last = static_cast<int>(panoramas.size()) - 1;
  const EpisodeGoals goals = episode_goals(tape, p, target_, feats, last);
  const FusedSenses fused = target_guided_fuse(tape, p, goals.pooled, feats);
  const Var tokens = make_token(tape, p, msi(tape, p, fused), action_embeddings(tape, p, prev_actions));
  history_.reset(p, tokens.value());
  history_sum_ = history_.encoded().colwise().sum();
}

PolicyRunner::Step PolicyRunner::step(const Panorama& panorama, int prev_action) {
  ModelParams& p = *params_;
  Tape tape(false);
  const RawObservations raw = stack_observations(std::span<const Panorama>(&panorama, 1));
  const ModalFeatures feats = encode_modalities(tape, p, tape.constant(raw.rgb), tape.constant(raw.depth), tape.constant(raw.audio));
  const Var g_aug = static_goal_ ? tape.constant(*static_goal_)
                                 : build_augmented(tape, p, embed_target(tape, p, target_, feats.a));
  const FusedSenses fused = target_guided_fuse(tape, p, pooled_goal(g_aug), feats);
  const int prev[1] = {prev_action};
  const Var token = make_token(tape, p, msi(tape, p, fused), action_embeddings(tape, p, prev));
  history_sum_ += history_.push(p, token.value());
  const Var pooled = tape.constant(history_sum_ / static_cast<double>(history_.length()));

  std::vector<Matrix> weights;
  const Var queries = parse_goals(tape, p, pooled, g_aug, nullptr, &weights);
  const Var c = plan(tape, p, queries, tape.constant(history_.encoded()), target_.task);
  const HeadOutput head = action_head(tape, p, c, feats.v, feats.d, feats.a, target_.task);

  Step s;
  s.dist.logits = head.logits.value().row(0);
  s.dist.probs = softmax(s.dist.logits);
  s.dist.value = head.value.value()(0, 0);
  for (const Matrix& w : weights) s.parse_weights.emplace_back(w.row(0));
  return s;
}

}  // namespace vienna
