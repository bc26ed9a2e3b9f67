#pragma once

// The four navigation task kinds, episode sampling over seen/unseen world
// splits, instruction templates, and the success criterion.

#include "vienna/world.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace vienna {

enum class TaskKind : int { ImageGoal = 0, AudioGoal = 1, ObjectGoal = 2, VisionLanguage = 3 };
inline constexpr int kNumTasks = 4;
inline constexpr TaskKind kAllTasks[kNumTasks] = {TaskKind::ImageGoal, TaskKind::AudioGoal, TaskKind::ObjectGoal,
                                                  TaskKind::VisionLanguage};

const char* task_name(TaskKind t);
/// Short code used in file names and CSVs: IGN, AGN, OGN, VLN.
const char* task_code(TaskKind t);
/// Accepts full names or short codes, case-sensitive. Throws ContractError.
TaskKind parse_task(const std::string& s);

enum class Split : int { Train, ValSeen, ValUnseen };
const char* split_name(Split s);
Split parse_split(const std::string& s);

/// Splitmix-style child seed; every run derives all randomness from one root.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t salt);

// ---- instruction vocabulary -----------------------------------------------

namespace vocab {
inline constexpr int kPad = 0;
inline constexpr int kGo = 1;
inline constexpr int kStraight = 2;
inline constexpr int kThrough = 3;
inline constexpr int kTurn = 4;
inline constexpr int kLeft = 5;
inline constexpr int kRight = 6;
inline constexpr int kStop = 7;
inline constexpr int kAt = 8;
inline constexpr int kRoomBase = 9;                     // + RoomKind
inline constexpr int kCategoryBase = kRoomBase + kRoomKinds;  // + category id
inline constexpr int kSize = 64;
inline constexpr int kMaxCategories = kSize - kCategoryBase;
}  // namespace vocab

std::string category_name(int category);
std::string token_text(int token);
std::string instruction_text(const std::vector<int>& tokens);

struct Instruction {
  std::vector<int> tokens;
  std::vector<Vec2> waypoints;  // generation only; never shown to the agent
};

struct SegmentAction {
  enum Kind { Straight, TurnLeft, TurnRight, Stop } kind = Straight;
  int arg = -1;  // room kind for Straight, category for Stop (-1 when absent)
  bool operator==(const SegmentAction&) const = default;
};

/// Template realization of a waypoint path. Turns sharper than 20 degrees
/// become turn tokens; the nearest object within 1 m of the end is named.
Instruction generate_instruction(const World& world, const std::vector<Vec2>& waypoints);
/// Inverse of the template grammar. Throws ContractError on malformed input.
std::vector<SegmentAction> parse_instruction(const std::vector<int>& tokens);
/// +1 for each left turn, -1 for each right turn along the waypoint path.
std::vector<int> turn_sequence(const std::vector<Vec2>& waypoints);
/// Shortest path from `start` to the field's source, simplified to corners.
std::vector<Vec2> shortest_path_waypoints(const World& world, const DistanceField& goal_field, const Vec2& start);

// ---- episodes ---------------------------------------------------------------

struct GoalView {
  AgentPose pose;
  Matrix rgb;  // 12 x F_v rendered at the goal pose
};
struct TargetSound {
  SoundSource source;  // the agent hears it live; g_A is rebuilt every epoch
};
struct ClassTag {
  int category = 0;
};
using TargetSpec = std::variant<GoalView, TargetSound, ClassTag, Instruction>;

struct Episode {
  int id = 0;
  int world_id = 0;
  std::uint64_t world_seed = 0;
  std::uint64_t audio_seed = 0;
  AgentPose start;
  Vec2 goal = Vec2::Zero();
  TaskKind task = TaskKind::ObjectGoal;
  TargetSpec target;
  int max_epochs = 500;
  double shortest_length = 0.0;  // geodesic start-goal
};

struct SuiteConfig {
  WorldParams world;
  int train_worlds = 24;
  int unseen_worlds = 8;
  double min_goal = 1.0;  // geodesic start-goal range (m)
  double max_goal = 3.0;
  int max_epochs = 500;
  int max_instruction = 24;  // N_L
  double success_radius = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Runtime state shared by everything that plays one episode.
struct EpisodeContext {
  const World* world = nullptr;
  Episode episode;
  std::shared_ptr<const DistanceField> goal_field;
  AudioScene audio;
  double success_radius = 1.0;

  double goal_distance(const Vec2& p) const { return goal_field->at(p); }
  Panorama observe(const AgentPose& pose) const { return render_panorama(*world, pose, audio); }
};

struct Trajectory {
  std::vector<AgentPose> poses;  // poses[0] is the start; one more than actions
  std::vector<int> actions;
};

bool check_success(const EpisodeContext& ctx, const Trajectory& trajectory);

class TaskSuite {
 public:
  explicit TaskSuite(const SuiteConfig& config);

  const SuiteConfig& config() const { return config_; }
  const World& world(int id) const;
  const std::vector<int>& world_ids(Split split) const;
  int world_count() const { return static_cast<int>(worlds_.size()); }

  Episode sample_episode(Split split, TaskKind task, Rng& rng, int id = 0) const;
  EpisodeContext sample(Split split, TaskKind task, Rng& rng, int id = 0) const;
  /// Rebuilds the runtime context of a logged or replayed episode.
  EpisodeContext context(const Episode& episode) const;

 private:
  SuiteConfig config_;
  std::vector<World> worlds_;
  std::vector<std::vector<std::uint8_t>> roomy_;  // cells with 0.2 m clearance
  std::vector<int> train_ids_;
  std::vector<int> unseen_ids_;
};

/// Shortest-path follower: steps toward the goal and stops inside the radius.
int oracle_action(const EpisodeContext& ctx, const AgentPose& pose);

}  // namespace vienna
