#pragma once

// Shaped navigation reward (success, progress, slack, exploration) and the
// evaluation metrics SR / NE / OR / SPL.

#include "vienna/tasks.hpp"

#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace vienna {

struct RewardConfig {
  double success_reward = 2.5;
  double slack_reward = -1e-3;
  double explore_scale = 0.25;
  double decay = 0.995;
  double cell_size = 2.5;  // meters
  bool use_success = true;
  bool use_progress = true;
  bool use_slack = true;
  bool use_explore = true;

  void validate() const;
};

/// Cells visited so far in the current episode.
class ExploreState {
 public:
  /// Inserts the cell holding `p`; true when it was not visited before.
  bool visit(const Vec2& p, double cell_size);
  int nu() const { return static_cast<int>(cells_.size()); }

 private:
  std::set<std::pair<long, long>> cells_;
};

struct Transition {
  double geo_before = 0.0;  // geodesic distance to goal before the action
  double geo_after = 0.0;
  int epoch = 0;  // 0-based decision index
  bool terminal_success = false;
  Vec2 position = Vec2::Zero();  // agent position after the action
};

struct RewardTerms {
  double success = 0.0;
  double progress = 0.0;
  double slack = 0.0;
  double explore = 0.0;
  double total() const { return success + progress + slack + explore; }
};

/// Same function for every task kind. Updates `explore`.
RewardTerms reward_terms(const Transition& t, ExploreState& explore, const RewardConfig& config);
double reward(const Transition& t, ExploreState& explore, const RewardConfig& config);

struct EvalRecord {
  TaskKind task = TaskKind::ObjectGoal;
  Split split = Split::ValSeen;
  int episode_id = 0;
  bool success = false;
  double shortest = 0.0;      // l
  double path_length = 0.0;   // p
  double final_error = 0.0;   // geodesic distance at the end
  double min_distance = 0.0;  // closest geodesic approach along the path
  bool oracle_success = false;
  int epochs = 0;

  double spl() const;
};

EvalRecord score_episode(const EpisodeContext& ctx, const Trajectory& trajectory);

struct MetricRow {
  TaskKind task;
  Split split;
  double sr = 0.0;   // percent
  double ne = 0.0;   // meters
  double oracle_rate = 0.0;  // percent
  double spl = 0.0;  // percent
  int episodes = 0;
};

/// Means per task and split, ordered by task then split.
std::vector<MetricRow> aggregate(std::span<const EvalRecord> records);
std::string metrics_csv(std::span<const MetricRow> rows);

}  // namespace vienna
