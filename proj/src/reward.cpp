#include "vienna/reward.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace vienna {

void RewardConfig::validate() const {
  if (!(decay > 0.0 && decay < 1.0)) throw ContractError("reward decay must lie in (0, 1)");
  if (!(cell_size > 0.0)) throw ContractError("exploration cell size must be positive");
}

bool ExploreState::visit(const Vec2& p, double cell_size) {
  const auto key = std::make_pair(static_cast<long>(std::floor(p.x() / cell_size)), static_cast<long>(std::floor(p.y() / cell_size)));
  return cells_.insert(key).second;
}

RewardTerms reward_terms(const Transition& t, ExploreState& explore, const RewardConfig& config) {
  if (!std::isfinite(t.geo_before) || !std::isfinite(t.geo_after))
    throw ContractError("reward needs finite geodesic distances");
  RewardTerms r;
  const bool fresh = explore.visit(t.position, config.cell_size);
  if (config.use_success && t.terminal_success) r.success = config.success_reward;
  if (config.use_progress) r.progress = -(t.geo_after - t.geo_before);
  if (config.use_slack) r.slack = config.slack_reward;
  if (config.use_explore && fresh) r.explore = config.explore_scale * std::pow(config.decay, t.epoch) / explore.nu();
  return r;
}

double reward(const Transition& t, ExploreState& explore, const RewardConfig& config) {
  return reward_terms(t, explore, config).total();
}

double EvalRecord::spl() const {
  if (!success) return 0.0;
  return shortest / std::max(path_length, shortest);
}

EvalRecord score_episode(const EpisodeContext& ctx, const Trajectory& trajectory) {
  EvalRecord rec;
  rec.task = ctx.episode.task;
  rec.episode_id = ctx.episode.id;
  rec.success = check_success(ctx, trajectory);
  rec.shortest = ctx.episode.shortest_length;
  rec.epochs = static_cast<int>(trajectory.actions.size());
  rec.min_distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < trajectory.poses.size(); ++i) {
    rec.min_distance = std::min(rec.min_distance, ctx.goal_distance(trajectory.poses[i].position));
    if (i > 0) rec.path_length += (trajectory.poses[i].position - trajectory.poses[i - 1].position).norm();
  }
  rec.final_error = ctx.goal_distance(trajectory.poses.back().position);
  rec.oracle_success = rec.min_distance < ctx.success_radius;
  return rec;
}

std::vector<MetricRow> aggregate(std::span<const EvalRecord> records) {
  if (records.empty()) throw ContractError("cannot aggregate an empty record set");
  std::map<std::pair<int, int>, std::vector<const EvalRecord*>> groups;
  for (const EvalRecord& r : records) groups[{static_cast<int>(r.task), static_cast<int>(r.split)}].push_back(&r);
  std::vector<MetricRow> rows;
  for (const auto& [key, group] : groups) {
    MetricRow row{static_cast<TaskKind>(key.first), static_cast<Split>(key.second)};
    for (const EvalRecord* r : group) {
      row.sr += r->success ? 1.0 : 0.0;
      row.ne += r->final_error;
      row.oracle_rate += r->oracle_success ? 1.0 : 0.0;
      row.spl += r->spl();
    }
    const double n = static_cast<double>(group.size());
    row.sr = 100.0 * row.sr / n;
    row.ne /= n;
    row.oracle_rate = 100.0 * row.oracle_rate / n;
    row.spl = 100.0 * row.spl / n;
    row.episodes = static_cast<int>(group.size());
    rows.push_back(row);
  }
  return rows;
}

std::string metrics_csv(std::span<const MetricRow> rows) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << "task,split,SR,NE,OR,SPL,episodes\n";
  for (const MetricRow& r : rows)
    out << task_name(r.task) << ',' << split_name(r.split) << ',' << r.sr << ',' << r.ne << ',' << r.oracle_rate << ','
        << r.spl << ',' << r.episodes << '\n';
  return out.str();
}

}  // namespace vienna
