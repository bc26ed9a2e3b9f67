#pragma once

// Procedural 2D indoor worlds: occupancy grid, rooms, objects, sound
// sources, panoramic rendering, kinematics and geodesic distance fields.

#include "vienna/tensor.hpp"
#include "vienna/transformer.hpp"

#include <array>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace vienna {

using Vec2 = Eigen::Vector2d;

inline constexpr int kSubViews = 12;
inline constexpr int kStopAction = 12;
inline constexpr int kNumActions = 13;
inline constexpr double kStepSize = 0.25;
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSubViewArc = 2.0 * kPi / kSubViews;

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DisconnectedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class RoomKind : int { Hallway, Kitchen, Bedroom, Bathroom, LivingRoom, Office, Laundry, DiningRoom };
inline constexpr int kRoomKinds = 8;
const char* room_kind_name(RoomKind k);

struct WorldParams {
  double width = 8.0;   // meters
  double height = 8.0;  // meters
  int rooms = 3;
  int obstacles = 2;
  int objects = 8;
  int categories = 8;
  double resolution = 0.05;
  int feat_v = 16;
  int feat_d = 16;
  int feat_a = 8;  // per channel
  double max_range = 8.0;

  void validate() const;
};

struct ObjectInstance {
  int category = 0;
  Vec2 position = Vec2::Zero();
  double radius = 0.3;
  bool emits_sound = false;
};

struct SoundSource {
  Vec2 position = Vec2::Zero();
  std::uint64_t waveform_seed = 0;
  int category = 0;
  double amplitude = 1.0;
};

struct Room {
  int x0, y0, x1, y1;  // inclusive cell bounds of the room interior
  RoomKind kind;
};

struct AgentPose {
  Vec2 position = Vec2::Zero();
  double heading = 0.0;  // radians
};

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

class DistanceField;

struct World {
  int id = 0;
  std::uint64_t seed = 0;
  WorldParams params;
  int nx = 0;
  int ny = 0;
  std::vector<std::uint8_t> occupied;  // row-major, y * nx + x
  std::vector<int> room_of_cell;       // -1 for walls
  std::vector<Room> rooms;
  std::vector<ObjectInstance> objects;
  std::vector<SoundSource> sound_sources;  // ambient background sources
  std::shared_ptr<const std::vector<DistanceField>> ambient_fields;

  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < nx && c.y < ny; }
  int index(Cell c) const { return c.y * nx + c.x; }
  bool blocked(Cell c) const { return !in_bounds(c) || occupied[static_cast<std::size_t>(index(c))] != 0; }
  Cell cell_of(const Vec2& p) const;
  Vec2 center_of(Cell c) const;
  bool is_free(const Vec2& p) const;
  /// Room kind at p, or the nearest interior room kind for wall cells.
  RoomKind room_kind_at(const Vec2& p) const;
  std::uint64_t occupancy_hash() const;
  int free_cell_count() const;
};

/// Single-source shortest-path distances over the 0.05 m grid.
class DistanceField {
 public:
  DistanceField() = default;
  DistanceField(const World& world, const Vec2& source);

  /// Geodesic distance from `p` to the source; +inf when disconnected.
  double at(const Vec2& p) const;
  double at(Cell c) const { return dist_[static_cast<std::size_t>(c.y * nx_ + c.x)]; }
  Cell source_cell() const { return source_; }
  /// Neighbor moves of the grid graph (dx, dy, length in cells).
  struct Move {
    int dx, dy;
    double length;
  };
  static std::span<const Move> moves();
  /// Whether `move` from `c` stays in free space without cutting corners.
  static bool move_allowed(const World& w, Cell c, const Move& move);
  /// Cells visited by following steepest descent from `from` to the source.
  std::vector<Cell> descent_path(const World& world, const Vec2& from, int max_cells = 1 << 30) const;
  /// Bearing (world frame, radians) of the shortest path leaving p.
  double path_bearing(const World& world, const Vec2& p) const;

 private:
  int nx_ = 0;
  int ny_ = 0;
  double res_ = 0.05;
  Cell source_;
  std::vector<double> dist_;
};

/// Sound sources audible in an episode, with their geodesic fields.
struct AudioScene {
  std::vector<SoundSource> sources;
  std::shared_ptr<const std::vector<DistanceField>> fields;

  static AudioScene ambient(const World& world);
  static AudioScene single(const World& world, const SoundSource& source);
};

struct Panorama {
  Matrix rgb;    // 12 x F_v
  Matrix depth;  // 12 x F_d, ray distances across each sub-view's arc
  Matrix audio;  // 12 x 2F_a, [left | right]
};

/// Relative bearing gain of a source at angle `rel` (source bearing minus
/// heading) on sub-view `k` and channel (0 = left, 1 = right).
double binaural_gain(double rel, int k, int channel);
/// Per-source spectral signature of length F_a (entries in (0, 1]).
RowVector sound_signature(const SoundSource& source, int feat_a);
/// Fixed visual signature of an object category.
RowVector category_signature(int category, int feat_v);

double subview_angle(const AgentPose& pose, int k);

/// Distance along a ray to the first occupied cell, capped at max_range.
double cast_ray(const World& world, const Vec2& origin, double angle, double max_range, Cell* hit = nullptr);
/// True when the straight segment a-b crosses no occupied cell.
bool line_of_sight(const World& world, const Vec2& a, const Vec2& b);

Panorama render_panorama(const World& world, const AgentPose& pose, const AudioScene& audio);
Panorama render_panorama(const World& world, const AgentPose& pose);
/// Total received amplitude per sub-view and channel, without signatures.
Matrix audio_amplitudes(const World& world, const AgentPose& pose, const AudioScene& audio);

struct StepResult {
  AgentPose pose;
  bool collision = false;
};

/// Moves 0.25 m toward sub-view `action` (0..11) or stays for STOP (12).
/// Blocked moves stop at the obstacle boundary.
StepResult step(const World& world, const AgentPose& pose, int action);

World generate_world(std::uint64_t seed, const WorldParams& params, int id = 0);

/// Geodesic distance between two free points; throws when disconnected.
double geodesic_distance(const World& world, const Vec2& a, const Vec2& b);

/// ASCII occupancy map: '#' walls, '.' free, digits for object categories.
std::string ascii_map(const World& world);

}  // namespace vienna
