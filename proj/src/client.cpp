#include "vienna/trainer.hpp"

#include <cmath>

namespace vienna {

namespace {

int sample_action(const RowVector& probs, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs(i);
    if (u < acc) return static_cast<int>(i);
  }
  // rounding left a sliver above the total: last action with mass
  for (Eigen::Index i = probs.size(); i-- > 0;)
    if (probs(i) > 0.0) return static_cast<int>(i);
  throw DivergenceError("policy produced an all-zero distribution");
}

double log_prob(const RowVector& logits, int action) {
  const double m = logits.maxCoeff();
  return logits(action) - (m + std::log((logits.array() - m).exp().sum()));
}

}  // namespace

Client::Client(int id, const TaskSuite& suite, const ModelConfig& model, const RewardConfig& reward, const PPOConfig& ppo,
               std::uint64_t seed)
    : id_(id), suite_(&suite), reward_(reward), ppo_(ppo), params_(make_model(model, 0)) {
  ppo_.validate();
  reward_.validate();
  if (suite.config().max_epochs > model.max_epochs)
    throw ContractError("client: episode limit exceeds the model's epoch capacity");
  for (TaskKind t : model.tasks) {
    Agent a;
    a.task = t;
    a.rng.seed(derive_seed(seed, 1000 + static_cast<std::uint64_t>(t)));
    agents_.push_back(std::move(a));
  }
}

void Client::apply(const WeightSync& sync) {
  if (weights_digest(sync.weights) != sync.digest) throw FormatError("client: weight sync digest mismatch");
  restore(params_.named(), sync.weights);
  // cached history and goal were computed under the old weights
  for (Agent& a : agents_)
    if (a.runner) a.runner->rebuild(a.log->panoramas, a.log->prev_actions);
}

void Client::start_episode(Agent& agent) {
  agent.ctx = suite_->sample(Split::Train, agent.task, agent.rng);
  auto log = std::make_shared<EpisodeLog>();
  log->episode = agent.ctx->episode;
  log->target = target_input(log->episode);
  agent.log = std::move(log);
  agent.runner = std::make_unique<PolicyRunner>(params_, agent.log->target);
  agent.pose = agent.ctx->episode.start;
  agent.explore = ExploreState{};
  agent.last_action = -1;
}

Rollout Client::run_agent(Agent& agent) {
  Rollout out{agent.task, {}};
  Segment seg;
  auto close = [&](int end, double bootstrap) {
    seg.log = agent.log;
    seg.end = end;
    seg.bootstrap = bootstrap;
    out.segments.push_back(std::move(seg));
    seg = Segment{};
  };
  const int t = static_cast<int>(agent.task);
  for (int s = 0; s < ppo_.steps_per_task; ++s) {
    if (!agent.ctx) start_episode(agent);
    EpisodeLog& log = *agent.log;
    const EpisodeContext& ctx = *agent.ctx;
    const int epoch = static_cast<int>(log.panoramas.size());
    if (seg.steps.empty()) seg.begin = epoch;

    Panorama pano = ctx.observe(agent.pose);
    const PolicyRunner::Step st = agent.runner->step(pano, agent.last_action);
    log.panoramas.push_back(std::move(pano));
    log.prev_actions.push_back(agent.last_action);
    log.poses.push_back(agent.pose);

    const int action = sample_action(st.dist.probs, agent.rng);
    const double geo_before = ctx.goal_distance(agent.pose.position);
    AgentPose next = agent.pose;
    bool done = false, success = false;
    if (action == kStopAction) {
      done = true;
      success = geo_before < ctx.success_radius;
    } else {
      next = step(*ctx.world, agent.pose, action).pose;
    }
    if (epoch + 1 >= ctx.episode.max_epochs) done = true;
    const RewardTerms rt =
        reward_terms(Transition{geo_before, ctx.goal_distance(next.position), epoch, success, next.position}, agent.explore,
                     reward_);
    log.rewards.push_back(rt);
    seg.steps.push_back(StepRecord{action, log_prob(st.dist.logits, action), st.dist.value, rt.total(), done});
    ++stats_.steps[t];
    stats_.reward_sum += rt.total();

    agent.pose = next;
    agent.last_action = action;
    if (done) {
      ++stats_.episodes[t];
      stats_.successes[t] += success;
      close(epoch + 1, 0.0);
      agent.ctx.reset();
      agent.runner.reset();
      agent.log.reset();
    }
  }
  if (!seg.steps.empty()) {
    // value of the state after the last step; the peek pollutes the runner's
    // cache, which is rebuilt from the log
    const Panorama pano = agent.ctx->observe(agent.pose);
    const double v = agent.runner->step(pano, agent.last_action).dist.value;
    agent.runner->rebuild(agent.log->panoramas, agent.log->prev_actions);
    close(static_cast<int>(agent.log->panoramas.size()), v);
  }
  return out;
}

void Client::collect() {
  rollouts_.clear();
  segment_obs_.clear();
  for (Agent& a : agents_) rollouts_.push_back(run_agent(a));
  for (const Rollout& r : rollouts_)
    for (const Segment& s : r.segments)
      segment_obs_.push_back(stack_observations(std::span<const Panorama>(s.log->panoramas.data(), s.end)));
}

GradientMessage Client::gradient(std::uint64_t round) {
  if (rollouts_.empty()) throw ContractError("client: gradient() before collect()");
  params_.zero_grad();
  Tape tape;
  Var total;
  PPOLoss sums;
  std::size_t obs_index = 0;
  for (std::size_t r = 0; r < rollouts_.size(); ++r) {
    const Rollout& ro = rollouts_[r];
    PPOBatch batch;
    std::vector<Var> logits, values;
    for (const Segment& s : ro.segments) {
      const RawObservations& obs = segment_obs_[obs_index++];
      const PolicyOutput out = forward_episode(tape, params_, s.log->target, obs,
                                               std::span<const int>(s.log->prev_actions.data(), s.end), s.begin);
      logits.push_back(out.logits);
      values.push_back(out.value);
      const Advantages adv = gae_advantages(s.steps, s.bootstrap, ppo_.gamma, ppo_.lambda);
      for (std::size_t i = 0; i < s.steps.size(); ++i) {
        batch.actions.push_back(s.steps[i].action);
        batch.old_log_probs.push_back(s.steps[i].log_prob);
        batch.advantages.push_back(adv.advantages[i]);
        batch.returns.push_back(adv.returns[i]);
      }
    }
    normalize(batch.advantages);
    const PPOLoss l = ppo_loss(tape, concat_rows(logits), concat_rows(values), batch, ppo_);
    total = r == 0 ? l.loss : add(total, l.loss);
    sums.surrogate += l.surrogate;
    sums.value_loss += l.value_loss;
    sums.entropy += l.entropy;
    sums.clip_fraction += l.clip_fraction;
  }
  const double inv = 1.0 / static_cast<double>(rollouts_.size());
  total = scale(total, inv);
  tape.backward(total);
  sums.total = total.scalar();
  sums.surrogate *= inv;
  sums.value_loss *= inv;
  sums.entropy *= inv;
  sums.clip_fraction *= inv;
  last_loss_ = sums;

  GradientMessage m;
  m.round = round;
  m.client = id_;
  for (const NamedParam& np : params_.named()) {
    if (!np.param->grad.allFinite()) throw DivergenceError("client: non-finite gradient in " + np.path);
    m.gradients.emplace_back(np.path, np.param->grad);
  }
  for (const Rollout& ro : rollouts_) m.task_steps[static_cast<int>(ro.task)] += ro.steps();
  return m;
}

}  // namespace vienna
