#include "vienna/trainer.hpp"

namespace vienna {

Episode eval_episode(const TaskSuite& suite, Split split, TaskKind task, int index, std::uint64_t seed) {
  const std::uint64_t salt = (static_cast<std::uint64_t>(split) * 8 + static_cast<std::uint64_t>(task)) * 100003 +
                             static_cast<std::uint64_t>(index);
  Rng rng(derive_seed(seed, salt));
  return suite.sample_episode(split, task, rng, index);
}

std::vector<EvalRecord> evaluate_with(const ActionPolicy& policy, const TaskSuite& suite, Split split,
                                      std::span<const TaskKind> tasks, const EvalConfig& config) {
  if (config.episodes_per_task < 1) throw ContractError("evaluation needs at least one episode per task");
  std::vector<EvalRecord> records;
  for (TaskKind task : tasks) {
    for (int i = 0; i < config.episodes_per_task; ++i) {
      const EpisodeContext ctx = suite.context(eval_episode(suite, split, task, i, config.seed));
      Trajectory traj;
      traj.poses.push_back(ctx.episode.start);
      int prev = -1;
      for (int epoch = 0; epoch < ctx.episode.max_epochs; ++epoch) {
        const AgentPose& pose = traj.poses.back();
        const int a = policy(ctx, pose, ctx.observe(pose), prev, epoch);
        if (a < 0 || a >= kNumActions) throw ContractError("policy returned an invalid action");
        traj.actions.push_back(a);
        traj.poses.push_back(a == kStopAction ? pose : step(*ctx.world, pose, a).pose);
        prev = a;
        if (a == kStopAction) break;
      }
      EvalRecord rec = score_episode(ctx, traj);
      rec.split = split;
      records.push_back(rec);
    }
  }
  return records;
}

std::vector<EvalRecord> evaluate(ModelParams& params, const TaskSuite& suite, Split split, std::span<const TaskKind> tasks,
                                 const EvalConfig& config) {
  // one runner per episode, recreated when the episode changes (epoch 0)
  std::unique_ptr<PolicyRunner> runner;
  ActionPolicy greedy = [&](const EpisodeContext& ctx, const AgentPose&, const Panorama& pano, int prev, int epoch) {
    if (epoch == 0) runner = std::make_unique<PolicyRunner>(params, target_input(ctx.episode));
    return act_greedy(runner->step(pano, prev).dist.probs);
  };
  return evaluate_with(greedy, suite, split, tasks, config);
}

ActionPolicy random_policy(std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(seed);
  return [rng](const EpisodeContext&, const AgentPose&, const Panorama&, int, int) {
    return std::uniform_int_distribution<int>(0, kNumActions - 1)(*rng);
  };
}

ActionPolicy oracle_policy() {
  return [](const EpisodeContext& ctx, const AgentPose& pose, const Panorama&, int, int) { return oracle_action(ctx, pose); };
}

std::vector<ReplayStep> replay_episode(ModelParams& params, const EpisodeContext& ctx, const RewardConfig& reward,
                                       std::span<const int> forced_actions) {
  PolicyRunner runner(params, target_input(ctx.episode));
  ExploreState explore;
  std::vector<ReplayStep> out;
  AgentPose pose = ctx.episode.start;
  int prev = -1;
  const int limit = forced_actions.empty() ? ctx.episode.max_epochs
                                           : std::min<int>(ctx.episode.max_epochs, static_cast<int>(forced_actions.size()));
  for (int epoch = 0; epoch < limit; ++epoch) {
    PolicyRunner::Step st = runner.step(ctx.observe(pose), prev);
    const int a = forced_actions.empty() ? act_greedy(st.dist.probs) : forced_actions[epoch];
    if (a < 0 || a >= kNumActions) throw ContractError("replay: invalid action " + std::to_string(a));
    const double before = ctx.goal_distance(pose.position);
    const AgentPose next = a == kStopAction ? pose : step(*ctx.world, pose, a).pose;
    const bool success = a == kStopAction && before < ctx.success_radius;
    ReplayStep r;
    r.epoch = epoch;
    r.pose = pose;
    r.action = a;
    r.reward = reward_terms(Transition{before, ctx.goal_distance(next.position), epoch, success, next.position}, explore, reward);
    r.probs = st.dist.probs;
    r.parse_weights = std::move(st.parse_weights);
    out.push_back(std::move(r));
    pose = next;
    prev = a;
    if (a == kStopAction) break;
  }
  return out;
}

}  // namespace vienna
