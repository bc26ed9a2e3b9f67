#pragma once

// Multitask distributed PPO: task-balanced rollout clients, a synchronous
// gradient-averaging server, evaluation and the training loop.

#include "vienna/model.hpp"
#include "vienna/reward.hpp"
#include "vienna/serialize.hpp"

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>

namespace vienna {

struct PPOConfig {
  double gamma = 0.99;
  double clip = 0.2;
  double lambda = 0.95;
  int epochs = 2;            // gradient rounds per collected batch
  int steps_per_task = 64;   // per client and task, per batch
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  int clients = 4;
  double max_grad_norm = 0.0;  // 0 disables global-norm clipping of the averaged gradient
  AdamWConfig optimizer;

  void validate() const;
};

// ---- rollouts -------------------------------------------------------------------

struct StepRecord {
  int action = 0;
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  bool done = false;
};

/// Everything the agent saw in one episode so far (the model's context).
struct EpisodeLog {
  Episode episode;
  TargetInput target;
  std::vector<Panorama> panoramas;
  std::vector<int> prev_actions;
  std::vector<AgentPose> poses;      // pose before each epoch's action
  std::vector<RewardTerms> rewards;  // per executed action
};

/// Contiguous epochs [begin, end) of one episode collected in one batch.
struct Segment {
  std::shared_ptr<const EpisodeLog> log;
  int begin = 0;
  int end = 0;
  std::vector<StepRecord> steps;
  double bootstrap = 0.0;  // value after the last step when the episode continues
};

struct Rollout {
  TaskKind task = TaskKind::ObjectGoal;
  std::vector<Segment> segments;
  int steps() const;
};

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> returns;
};
/// Generalised advantage estimation over one segment.
Advantages gae_advantages(std::span<const StepRecord> steps, double bootstrap, double gamma, double lambda);

// ---- loss ---------------------------------------------------------------------

struct PPOBatch {
  std::vector<int> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;  // already normalised
  std::vector<double> returns;
};

struct PPOLoss {
  Var loss;  // only valid while its tape lives
  double total = 0.0;
  double surrogate = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

/// Clipped surrogate + value regression - entropy bonus, means over rows.
PPOLoss ppo_loss(Tape& tape, Var logits, Var values, const PPOBatch& batch, const PPOConfig& config);
/// Mean 0 / std 1 (a single sample is only centred).
void normalize(std::vector<double>& xs);

// ---- messages ---------------------------------------------------------------

struct GradientMessage {
  std::uint64_t round = 0;
  int client = 0;
  std::vector<std::pair<std::string, Matrix>> gradients;  // manifest order
  std::array<std::int64_t, kNumTasks> task_steps{};
};

struct WeightSync {
  std::uint64_t round = 0;
  ParamSnapshot weights;
  std::uint64_t digest = 0;  // over the encoded weights
};

std::uint64_t weights_digest(const ParamSnapshot& weights);
WeightSync make_sync(std::uint64_t round, const ParamSnapshot& weights);

enum class MessageKind : std::uint8_t { Gradient = 1, Sync = 2, Failure = 3 };

/// Length-independent frame: magic, kind, header, payload keyed by manifest
/// path, then an FNV-1a digest of everything before it.
Bytes encode_message(const GradientMessage& m);
Bytes encode_message(const WeightSync& m);
MessageKind peek_kind(std::span<const std::uint8_t> frame);
GradientMessage decode_gradient(std::span<const std::uint8_t> frame);
WeightSync decode_sync(std::span<const std::uint8_t> frame);

// ---- server and clients -----------------------------------------------------------

/// Synchronous averaging server. Messages of older rounds are dropped,
/// future rounds are buffered until their turn.
class Server {
 public:
  Server(ModelParams params, const PPOConfig& config);

  /// Returns the new sync once every client of the current round reported.
  std::optional<WeightSync> receive(GradientMessage message);
  WeightSync sync() const;
  std::uint64_t round() const { return round_; }
  ModelParams& params() { return params_; }
  const OptimizerState& optimizer() const { return optimizer_; }
  int dropped() const { return dropped_; }
  /// Clients already heard from in the current round (timeout diagnostics).
  std::vector<int> reported() const;

 private:
  void aggregate();

  ModelParams params_;
  PPOConfig config_;
  OptimizerState optimizer_;
  std::uint64_t round_ = 0;
  std::map<std::uint64_t, std::map<int, GradientMessage>> pending_;
  int dropped_ = 0;
};

struct ClientStats {
  std::array<std::int64_t, kNumTasks> steps{};
  std::array<std::int64_t, kNumTasks> episodes{};
  std::array<std::int64_t, kNumTasks> successes{};
  double reward_sum = 0.0;
};

/// One rollout worker holding an agent copy per task.
class Client {
 public:
  Client(int id, const TaskSuite& suite, const ModelConfig& model, const RewardConfig& reward, const PPOConfig& ppo,
         std::uint64_t seed);

  int id() const { return id_; }
  void apply(const WeightSync& sync);
  /// Samples `steps_per_task` epochs for every task with the current weights.
  void collect();
  /// PPO gradient on the last collected batch under the current weights.
  GradientMessage gradient(std::uint64_t round);
  const std::vector<Rollout>& rollouts() const { return rollouts_; }
  const ClientStats& stats() const { return stats_; }
  ModelParams& params() { return params_; }
  /// Last loss terms, averaged over tasks.
  const PPOLoss& last_loss() const { return last_loss_; }

 private:
  struct Agent {
    TaskKind task;
    Rng rng;
    std::optional<EpisodeContext> ctx;
    std::shared_ptr<EpisodeLog> log;
    std::unique_ptr<PolicyRunner> runner;
    AgentPose pose;
    ExploreState explore;
    int last_action = -1;
  };
  void start_episode(Agent& agent);
  Rollout run_agent(Agent& agent);

  int id_;
  const TaskSuite* suite_;
  RewardConfig reward_;
  PPOConfig ppo_;
  ModelParams params_;
  std::vector<Agent> agents_;
  std::vector<Rollout> rollouts_;
  std::vector<RawObservations> segment_obs_;
  ClientStats stats_;
  PPOLoss last_loss_;
};

// ---- evaluation ------------------------------------------------------------------

struct EvalConfig {
  int episodes_per_task = 20;
  std::uint64_t seed = 7;
};

using ActionPolicy = std::function<int(const EpisodeContext&, const AgentPose&, const Panorama&, int prev, int epoch)>;

/// Greedy rollouts of the policy network on a fixed episode set.
std::vector<EvalRecord> evaluate(ModelParams& params, const TaskSuite& suite, Split split, std::span<const TaskKind> tasks,
                                 const EvalConfig& config);
/// Same episode set driven by an arbitrary decision rule (random, oracle).
std::vector<EvalRecord> evaluate_with(const ActionPolicy& policy, const TaskSuite& suite, Split split,
                                      std::span<const TaskKind> tasks, const EvalConfig& config);
/// Uniform over all 13 actions (STOP included).
ActionPolicy random_policy(std::uint64_t seed);
ActionPolicy oracle_policy();

struct ReplayStep {
  int epoch = 0;
  AgentPose pose;  // before the action
  int action = 0;
  RewardTerms reward;
  RowVector probs;
  std::vector<RowVector> parse_weights;  // per goal query, over the rows of G
};
/// Greedy rollout of one episode (or the given actions, when not empty)
/// with per-epoch rewards and target-parser attention.
std::vector<ReplayStep> replay_episode(ModelParams& params, const EpisodeContext& ctx, const RewardConfig& reward,
                                       std::span<const int> forced_actions = {});

/// Episodes used by evaluate(); identical across calls with equal inputs.
Episode eval_episode(const TaskSuite& suite, Split split, TaskKind task, int index, std::uint64_t seed);

// ---- training ------------------------------------------------------------------

enum class Transport { InProcess, Socket };
const char* transport_name(Transport t);
Transport parse_transport(const std::string& s);
/// VIENNA_TRANSPORT environment variable, else in-process.
Transport transport_from_env();

struct TrainConfig {
  SuiteConfig suite;
  ModelConfig model;
  RewardConfig reward;
  PPOConfig ppo;
  EvalConfig eval;
  std::int64_t total_steps = 0;
  int eval_every = 10;  // batches between evaluations
  std::uint64_t seed = 1;
  bool sequential = true;  // single-process multiplexing of server and clients
  Transport transport = Transport::InProcess;
  double round_timeout_s = 600.0;

  void validate() const;
};

struct CurvePoint {
  std::int64_t steps = 0;
  std::uint64_t round = 0;
  MetricRow row;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  std::int64_t steps = 0;
  std::uint64_t rounds = 0;
  double best_unseen_sr = -1.0;
  std::int64_t best_steps = 0;
  ModelParams best;
  ModelParams final_params;
};

struct TrainHooks {
  /// Called after each server update with the round number and parameters.
  std::function<void(std::uint64_t, ModelParams&)> on_round;
  std::function<void(const std::string&)> log;
};

/// Full loop; writes checkpoints and the curve CSV under `out_dir` when it is
/// not empty. Throws DivergenceError on non-finite losses after saving the
/// last good weights.
TrainResult train(const TrainConfig& config, const std::filesystem::path& out_dir, const TrainHooks& hooks = {});

std::string curve_csv(std::span<const CurvePoint> curve);

}  // namespace vienna
