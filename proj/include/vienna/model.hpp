#pragma once

// The navigation policy: intra-modal encoders, target-guided fusion,
// multisensory integration, navigation tokens, the causal history encoder,
// the target parser (augmented target description + goal queries), the
// shared/private planner and the sub-view action head.

#include "vienna/tasks.hpp"
#include "vienna/transformer.hpp"

#include <array>
#include <optional>
#include <span>
#include <vector>

namespace vienna {

struct ModalityMask {
  bool rgb = true;
  bool depth = true;
  bool audio = true;
  bool operator==(const ModalityMask&) const = default;
};

struct ModelConfig {
  int d = 64;
  int heads = 4;          // heads of the MSI / history / planner blocks
  int goal_queries = 5;   // N
  int n_image = 4;        // N_I
  int n_lang = 24;        // N_L
  int shared_depth = 2;   // planner blocks shared across tasks
  int planner_depth = 4;  // total planner blocks per task path
  int msi_blocks = 2;
  int history_blocks = 4;
  int feat_v = 16;
  int feat_d = 16;
  int feat_a = 8;
  int categories = 8;
  int max_epochs = 500;
  std::vector<TaskKind> tasks{kAllTasks, kAllTasks + kNumTasks};
  ModalityMask modalities;

  int n_audio() const { return kSubViews; }
  /// N_G = max(N_I, N_A, 1, N_L)
  int n_goal() const;
  bool has_task(TaskKind t) const;
  void validate() const;

  static ModelConfig desk();
  static ModelConfig paper();
};

/// Two-layer affine map with a GELU between: in -> d -> d.
struct Encoder {
  Linear l1, l2;
};

/// Unidirectional LSTM with gate order [input, forget, cell, output].
struct Lstm {
  Parameter wx;  // in x 4h
  Parameter wh;  // h x 4h
  Parameter b;   // 1 x 4h
};

/// One goal-query head of the parser; full-width projections, no output map.
struct GoalHead {
  Parameter wq, wk, wv;
};

struct ModelParams {
  ModelConfig config;

  Encoder f_img, f_dep, f_aud;
  AttentionParams fuse_v, fuse_d, fuse_a;
  std::vector<BlockParams> msi;
  Parameter action_table;  // 13 x d
  Parameter start_action;  // 1 x d
  Parameter w_e;           // 4d x d
  std::vector<BlockParams> history;

  std::array<Parameter, kNumTasks> task_embed;  // tau_I, tau_A, tau_T, tau_L (1 x d each)
  Parameter class_table;                        // C x d
  Parameter word_table;                         // vocab x d
  Lstm lstm_fwd, lstm_bwd;                      // hidden d/2 each
  std::vector<GoalHead> goal_heads;             // N

  std::vector<BlockParams> planner_shared;
  std::array<std::vector<BlockParams>, kNumTasks> planner_private;  // empty when not instantiated
  Parameter w_p;                                // d x d
  std::array<std::optional<Linear>, kNumTasks> value_head;

  /// Every learnable tensor with a stable dotted path, in a fixed order.
  std::vector<NamedParam> named();
  std::int64_t parameter_count();
  void zero_grad();
};

ModelParams make_model(const ModelConfig& config, std::uint64_t seed);

// ---- observation preprocessing --------------------------------------------

/// Stacks panoramas into 12T-row raw feature matrices (fixed input scaling).
struct RawObservations {
  Matrix rgb, depth, audio;
};
RawObservations stack_observations(std::span<const Panorama> panoramas);

// ---- perception ---------------------------------------------------------------

struct ModalFeatures {
  Var v, d, a;  // 12T x d each, orientation embeddings added
};

Var encode(Tape& tape, Encoder& enc, Var raw);
/// Encodes T stacked panoramas. Masked modalities become all-zero.
ModalFeatures encode_modalities(Tape& tape, ModelParams& p, Var rgb, Var depth, Var audio);

struct FusedSenses {
  Var v, d, h;  // T x d each
};
/// Each step's goal vector g_t (row t of g) attends over that step's 12 rows.
FusedSenses target_guided_fuse(Tape& tape, ModelParams& p, Var g, const ModalFeatures& feats);

/// 3-token self-attention per step; returns 3T x d, step-major rows.
Var msi(Tape& tape, ModelParams& p, const FusedSenses& fused);

/// Previous-action embeddings; -1 selects the start-of-episode embedding.
Var action_embeddings(Tape& tape, ModelParams& p, std::span<const int> prev_actions);
/// e_t = [flatten(o_t), a_{t-1}] W^e for every step; o is 3T x d.
Var make_token(Tape& tape, ModelParams& p, Var o, Var a_prev);

/// Causal blocks over tokens plus epoch embeddings; rows are epochs 1..T.
Var encode_history(Tape& tape, ModelParams& p, Var tokens);

/// Incremental history encoder for rollouts: keeps each block's inputs.
class HistoryCache {
 public:
  /// Appends epoch t's token and returns its encoded row.
  RowVector push(ModelParams& p, const RowVector& token);
  /// Recomputes the cache for a whole token sequence in one batched pass.
  void reset(ModelParams& p, const Matrix& tokens);
  const Matrix& encoded() const { return encoded_; }
  int length() const { return static_cast<int>(encoded_.rows()); }

 private:
  std::vector<Matrix> layer_inputs_;
  Matrix encoded_;
};

// ---- target parser ------------------------------------------------------------

/// What the agent is told about its goal. Audio targets are live and come
/// from the current observation instead.
struct TargetInput {
  TaskKind task = TaskKind::ObjectGoal;
  Matrix goal_rgb;          // ImageGoal: 12 x F_v
  int category = -1;        // ObjectGoal
  std::vector<int> tokens;  // VisionLanguage
};
TargetInput target_input(const Episode& episode);

struct TargetBlocks {
  Var image, audio, tag, language;  // N_I, 12, 1 and L rows (zeros when absent)
};
/// `audio_feats` (12 x d, this epoch's A_t) feeds the AudioGoal block.
TargetBlocks embed_target(Tape& tape, ModelParams& p, const TargetInput& target, std::optional<Var> audio_feats);
/// Cyclic tiling of every block to N_G rows plus its task embedding.
Var build_augmented(Tape& tape, ModelParams& p, const TargetBlocks& blocks);
Var pooled_goal(Var g_aug);

/// Rows of `x` repeated cyclically to `rows`.
Var tile_rows(Var x, int rows);
Var lstm(Tape& tape, Lstm& cell, Var x, bool reverse);

/// Goal queries: each head attends the pooled history rows over G and is
/// kept as its own row. Returns (T*N) x d ordered step-major. `mask`, when
/// given, restricts query t to its own keys (stacked per-step targets).
Var parse_goals(Tape& tape, ModelParams& p, Var pooled_history, Var g_aug, const BoolMatrix* mask = nullptr,
                std::vector<Matrix>* weights = nullptr);

// ---- planner ------------------------------------------------------------------

/// Shared then task-private cross-attention blocks; queries attend history.
Var plan(Tape& tape, ModelParams& p, Var queries, Var history, TaskKind task, const BoolMatrix* mask = nullptr);

struct HeadOutput {
  Var logits;  // T x 13, last column (STOP) fixed at zero
  Var value;   // T x 1
};
/// `c` is (T*N) x d; v, d, a are 12T x d sub-view embeddings.
HeadOutput action_head(Tape& tape, ModelParams& p, Var c, Var v, Var d, Var a, TaskKind task);

struct ActionDistribution {
  RowVector logits;  // 13
  RowVector probs;
  double value = 0.0;
};
/// argmax with ties to the lowest index.
int act_greedy(const RowVector& probs);

// ---- whole-policy forward ---------------------------------------------------

struct PolicyOutput {
  Var logits;  // rows for steps begin..T-1
  Var value;
  std::vector<Matrix> parse_weights;  // per head, (T-begin) x |G| (static targets only)
};

/// Batched forward over one episode prefix of T epochs; outputs only the
/// epochs at index >= begin, with every epoch's history as context.
PolicyOutput forward_episode(Tape& tape, ModelParams& p, const TargetInput& target, const RawObservations& obs,
                             std::span<const int> prev_actions, int begin = 0);

/// Epoch-by-epoch evaluation of the same policy for rollouts.
class PolicyRunner {
 public:
  PolicyRunner(ModelParams& params, TargetInput target);

  struct Step {
    ActionDistribution dist;
    std::vector<RowVector> parse_weights;  // per head, over the rows of G
  };
  Step step(const Panorama& panorama, int prev_action);
  /// Re-derives all cached state from the epochs seen so far, e.g. after the
  /// parameters changed mid-episode.
  void rebuild(std::span<const Panorama> panoramas, std::span<const int> prev_actions);
  int epoch() const { return history_.length(); }
  const TargetInput& target() const { return target_; }

 private:
  ModelParams* params_;
  TargetInput target_;
  std::optional<Matrix> static_goal_;
  HistoryCache history_;
  RowVector history_sum_;
};

}  // namespace vienna
