#include "vienna/world.hpp"

#include "vienna/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>
#include <sstream>

namespace vienna {

namespace {

constexpr std::uint8_t kFree = 0;
constexpr std::uint8_t kWall = 1;
constexpr std::uint8_t kObstacle = 2;
constexpr double kInf = std::numeric_limits<double>::infinity();

double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0) a += 2.0 * kPi;
  return a - kPi;
}

std::uint64_t mix(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RowVector fixed_vector(std::uint64_t seed, int n, double std) {
  Rng rng(mix(seed));
  std::normal_distribution<double> dist(0.0, std);
  RowVector v(n);
  for (int i = 0; i < n; ++i) v(i) = dist(rng);
  return v;
}

}  // namespace

const char* room_kind_name(RoomKind k) {
  switch (k) {
    case RoomKind::Hallway: return "hallway";
    case RoomKind::Kitchen: return "kitchen";
    case RoomKind::Bedroom: return "bedroom";
    case RoomKind::Bathroom: return "bathroom";
    case RoomKind::LivingRoom: return "living_room";
    case RoomKind::Office: return "office";
    case RoomKind::Laundry: return "laundry";
    case RoomKind::DiningRoom: return "dining_room";
  }
  return "room";
}

void WorldParams::validate() const {
  if (rooms < 1) throw ContractError("world needs at least one room");
  if (width < 6.0 || height < 6.0) throw ContractError("world bounds must be at least 6 m");
  if (categories < 1) throw ContractError("need at least one object category");
  if (objects < 0 || obstacles < 0) throw ContractError("negative object or obstacle count");
  if (resolution <= 0.0) throw ContractError("grid resolution must be positive");
  if (feat_v < 1 || feat_d < 1 || feat_a < 1) throw ContractError("feature widths must be positive");
  if (max_range <= 0.0) throw ContractError("max_range must be positive");
}

// ---- World ----------------------------------------------------------------

Cell World::cell_of(const Vec2& p) const {
  const double r = params.resolution;
  return {static_cast<int>(std::floor(p.x() / r)), static_cast<int>(std::floor(p.y() / r))};
}

Vec2 World::center_of(Cell c) const {
  const double r = params.resolution;
  return {(c.x + 0.5) * r, (c.y + 0.5) * r};
}

bool World::is_free(const Vec2& p) const {
  if (!std::isfinite(p.x()) || !std::isfinite(p.y())) return false;
  return !blocked(cell_of(p));
}

RoomKind World::room_kind_at(const Vec2& p) const {
  const Cell c = cell_of(p);
  for (int radius = 0; radius < 8; ++radius) {
    for (int dy = -radius; dy <= radius; ++dy) {
      for (int dx = -radius; dx <= radius; ++dx) {
        if (std::max(std::abs(dx), std::abs(dy)) != radius) continue;
        const Cell n{c.x + dx, c.y + dy};
        if (!in_bounds(n)) continue;
        const int room = room_of_cell[static_cast<std::size_t>(index(n))];
        if (room >= 0) return rooms[static_cast<std::size_t>(room)].kind;
      }
    }
  }
  return RoomKind::Hallway;
}

std::uint64_t World::occupancy_hash() const {
  std::vector<std::uint8_t> bytes(occupied.size());
  for (std::size_t i = 0; i < occupied.size(); ++i) bytes[i] = occupied[i] != 0 ? 1 : 0;
  return fnv1a(std::span<const std::uint8_t>(bytes));
}

int World::free_cell_count() const {
  return static_cast<int>(std::count(occupied.begin(), occupied.end(), kFree));
}

// ---- distance fields ------------------------------------------------------

std::span<const DistanceField::Move> DistanceField::moves() {
  static const double s2 = std::sqrt(2.0);
  static const double s5 = std::sqrt(5.0);
  static const Move table[] = {
      {1, 0, 1.0},   {-1, 0, 1.0},  {0, 1, 1.0},   {0, -1, 1.0},  {1, 1, s2},    {1, -1, s2},
      {-1, 1, s2},   {-1, -1, s2},  {2, 1, s5},    {2, -1, s5},   {-2, 1, s5},   {-2, -1, s5},
      {1, 2, s5},    {-1, 2, s5},   {1, -2, s5},   {-1, -2, s5},
  };
  return table;
}

bool DistanceField::move_allowed(const World& w, Cell c, const Move& m) {
  const Cell to{c.x + m.dx, c.y + m.dy};
  if (w.blocked(to)) return false;
  const int ax = std::abs(m.dx);
  const int ay = std::abs(m.dy);
  const int sx = m.dx > 0 ? 1 : -1;
  const int sy = m.dy > 0 ? 1 : -1;
  if (ax == 1 && ay == 1) {
    return !w.blocked({c.x + m.dx, c.y}) && !w.blocked({c.x, c.y + m.dy});
  }
  if (ax == 2) {  // crosses (sx,0) and (sx,sy)
    return !w.blocked({c.x + sx, c.y}) && !w.blocked({c.x + sx, c.y + sy});
  }
  if (ay == 2) {
    return !w.blocked({c.x, c.y + sy}) && !w.blocked({c.x + sx, c.y + sy});
  }
  return true;
}

DistanceField::DistanceField(const World& world, const Vec2& source)
    : nx_(world.nx), ny_(world.ny), res_(world.params.resolution), source_(world.cell_of(source)) {
  if (world.blocked(source_)) throw ContractError("distance field source lies in an occupied cell");
  dist_.assign(static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_), kInf);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  const double res = world.params.resolution;
  dist_[static_cast<std::size_t>(world.index(source_))] = 0.0;
  heap.push({0.0, world.index(source_)});
  const auto table = moves();
  while (!heap.empty()) {
    const auto [d, idx] = heap.top();
    heap.pop();
    if (d > dist_[static_cast<std::size_t>(idx)]) continue;
    const Cell c{idx % nx_, idx / nx_};
    for (const Move& m : table) {
      if (!move_allowed(world, c, m)) continue;
      const int n = (c.y + m.dy) * nx_ + (c.x + m.dx);
      const double nd = d + m.length * res;
      if (nd < dist_[static_cast<std::size_t>(n)]) {
        dist_[static_cast<std::size_t>(n)] = nd;
        heap.push({nd, n});
      }
    }
  }
}

double DistanceField::at(const Vec2& p) const {
  const Cell c{static_cast<int>(std::floor(p.x() / res_)), static_cast<int>(std::floor(p.y() / res_))};
  if (c.x < 0 || c.y < 0 || c.x >= nx_ || c.y >= ny_) return kInf;
  return at(c);
}

std::vector<Cell> DistanceField::descent_path(const World& world, const Vec2& from, int max_cells) const {
  std::vector<Cell> path;
  Cell c = world.cell_of(from);
  if (world.blocked(c) || !std::isfinite(at(c))) return path;
  path.push_back(c);
  const auto table = moves();
  while (static_cast<int>(path.size()) < max_cells && at(c) > 0.0) {
    double best = at(c);
    Cell next = c;
    for (const Move& m : table) {
      if (!move_allowed(world, c, m)) continue;
      const Cell n{c.x + m.dx, c.y + m.dy};
      if (at(n) < best) {
        best = at(n);
        next = n;
      }
    }
    if (next == c) break;
    c = next;
    path.push_back(c);
  }
  return path;
}

double DistanceField::path_bearing(const World& world, const Vec2& p) const {
  const auto path = descent_path(world, p, 12);
  Vec2 target = world.center_of(source_);
  if (path.size() > 1) {
    target = world.center_of(path[1]);
    for (std::size_t i = path.size() - 1; i >= 1; --i) {
      const Vec2 q = world.center_of(path[i]);
      if (line_of_sight(world, p, q)) {
        target = q;
        break;
      }
    }
  }
  const Vec2 d = target - p;
  if (d.norm() < 1e-12) return 0.0;
  return std::atan2(d.y(), d.x());
}

// ---- audio ----------------------------------------------------------------

AudioScene AudioScene::ambient(const World& world) {
  AudioScene scene;
  scene.sources = world.sound_sources;
  scene.fields = world.ambient_fields;
  return scene;
}

AudioScene AudioScene::single(const World& world, const SoundSource& source) {
  AudioScene scene;
  scene.sources = {source};
  auto fields = std::make_shared<std::vector<DistanceField>>();
  fields->emplace_back(world, source.position);
  scene.fields = std::move(fields);
  return scene;
}

double binaural_gain(double rel, int k, int channel) {
  const double lobe = 0.6 + 0.4 * std::cos(rel - k * kSubViewArc);
  const double side = 0.5 * std::sin(rel);
  const double ear = (channel == 0 ? 1.0 + side : 1.0 - side) / 1.5;
  return lobe * ear;
}

RowVector sound_signature(const SoundSource& source, int feat_a) {
  Rng base(mix(0x5157ULL + static_cast<std::uint64_t>(source.category)));
  Rng own(mix(source.waveform_seed ^ 0xa0d10ULL));
  std::uniform_real_distribution<double> u(0.2, 1.0);
  RowVector s(feat_a);
  for (int i = 0; i < feat_a; ++i) s(i) = 0.8 * u(base) + 0.2 * u(own);
  return s;
}

RowVector category_signature(int category, int feat_v) {
  RowVector v = fixed_vector(0xca7e9000ULL + static_cast<std::uint64_t>(category), feat_v, 1.0);
  return v / v.norm();
}

double subview_angle(const AgentPose& pose, int k) { return pose.heading + k * kSubViewArc; }

Matrix audio_amplitudes(const World& world, const AgentPose& pose, const AudioScene& audio) {
  Matrix out = Matrix::Zero(kSubViews, 2);
  if (!audio.fields) return out;
  const Cell here = world.cell_of(pose.position);
  for (std::size_t s = 0; s < audio.sources.size(); ++s) {
    const DistanceField& field = (*audio.fields)[s];
    const double dist = field.at(here);
    if (!std::isfinite(dist)) continue;
    const double amp = audio.sources[s].amplitude / (1.0 + dist);
    if (field.source_cell() == here) {
      out.array() += amp;
      continue;
    }
    const double rel = field.path_bearing(world, pose.position) - pose.heading;
    for (int k = 0; k < kSubViews; ++k) {
      for (int c = 0; c < 2; ++c) out(k, c) += amp * binaural_gain(rel, k, c);
    }
  }
  return out;
}

// ---- rays -----------------------------------------------------------------

double cast_ray(const World& world, const Vec2& origin, double angle, double max_range, Cell* hit) {
  const double res = world.params.resolution;
  const double dx = std::cos(angle);
  const double dy = std::sin(angle);
  Cell c = world.cell_of(origin);
  if (world.blocked(c)) {
    if (hit) *hit = c;
    return 0.0;
  }
  const int step_x = dx > 0 ? 1 : -1;
  const int step_y = dy > 0 ? 1 : -1;
  const double next_x = (c.x + (dx > 0 ? 1 : 0)) * res;
  const double next_y = (c.y + (dy > 0 ? 1 : 0)) * res;
  double t_max_x = std::abs(dx) < 1e-15 ? kInf : (next_x - origin.x()) / dx;
  double t_max_y = std::abs(dy) < 1e-15 ? kInf : (next_y - origin.y()) / dy;
  const double t_delta_x = std::abs(dx) < 1e-15 ? kInf : res / std::abs(dx);
  const double t_delta_y = std::abs(dy) < 1e-15 ? kInf : res / std::abs(dy);
  double t = 0.0;
  while (t < max_range) {
    if (t_max_x < t_max_y) {
      t = t_max_x;
      t_max_x += t_delta_x;
      c.x += step_x;
    } else {
      t = t_max_y;
      t_max_y += t_delta_y;
      c.y += step_y;
    }
    if (t >= max_range) break;
    if (world.blocked(c)) {
      if (hit) *hit = c;
      return std::max(t, 1e-6);
    }
  }
  if (hit) *hit = {-1, -1};
  return max_range;
}

bool line_of_sight(const World& world, const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  const double len = d.norm();
  if (world.blocked(world.cell_of(a)) || world.blocked(world.cell_of(b))) return false;
  if (len < 1e-12) return true;
  return cast_ray(world, a, std::atan2(d.y(), d.x()), len) >= len;
}

// ---- rendering ------------------------------------------------------------

namespace {

RowVector surface_texture(const World& world, Cell hit, const Vec2& before, int feat_v) {
  if (!world.in_bounds(hit)) return RowVector::Zero(feat_v);
  const std::uint8_t kind = world.occupied[static_cast<std::size_t>(world.index(hit))];
  RowVector base;
  if (kind == kObstacle) {
    base = fixed_vector(0xf0e1ULL, feat_v, 0.5);
  } else {
    base = fixed_vector(0x7e47ULL + static_cast<std::uint64_t>(world.room_kind_at(before)), feat_v, 0.5);
  }
  const std::uint64_t h = mix(world.seed ^ (static_cast<std::uint64_t>(hit.x) << 20) ^ static_cast<std::uint64_t>(hit.y));
  return base + fixed_vector(h, feat_v, 0.05);
}

}  // namespace

Panorama render_panorama(const World& world, const AgentPose& pose, const AudioScene& audio) {
  if (!world.is_free(pose.position)) throw ContractError("pose lies in an occupied cell");
  const WorldParams& p = world.params;
  Panorama pano;
  pano.rgb = Matrix::Zero(kSubViews, p.feat_v);
  pano.depth = Matrix::Zero(kSubViews, p.feat_d);
  pano.audio = Matrix::Zero(kSubViews, 2 * p.feat_a);

  for (int k = 0; k < kSubViews; ++k) {
    const double center = subview_angle(pose, k);
    RowVector color = RowVector::Zero(p.feat_v);
    for (int r = 0; r < p.feat_d; ++r) {
      const double angle = center - 0.5 * kSubViewArc + (r + 0.5) * kSubViewArc / p.feat_d;
      Cell hit;
      const double dist = cast_ray(world, pose.position, angle, p.max_range, &hit);
      pano.depth(k, r) = dist;
      const Vec2 dir(std::cos(angle), std::sin(angle));
      const Vec2 before = pose.position + std::max(0.0, dist - 0.5 * p.resolution) * dir;
      color += surface_texture(world, hit, before, p.feat_v) / (1.0 + 0.1 * dist);
    }
    pano.rgb.row(k) = color / p.feat_d;
  }

  for (const ObjectInstance& obj : world.objects) {
    const Vec2 d = obj.position - pose.position;
    const double dist = d.norm();
    const RowVector sig = category_signature(obj.category, p.feat_v) * (2.0 / (1.0 + dist));
    if (dist <= obj.radius) {
      for (int k = 0; k < kSubViews; ++k) pano.rgb.row(k) += sig;
      continue;
    }
    if (dist > p.max_range || !line_of_sight(world, pose.position, obj.position)) continue;
    const double bearing = std::atan2(d.y(), d.x());
    const double half = std::asin(std::min(1.0, obj.radius / dist));
    for (int k = 0; k < kSubViews; ++k) {
      if (std::abs(wrap_angle(bearing - subview_angle(pose, k))) <= 0.5 * kSubViewArc + half) {
        pano.rgb.row(k) += sig;
      }
    }
  }

  if (audio.fields) {
    const Cell here = world.cell_of(pose.position);
    for (std::size_t s = 0; s < audio.sources.size(); ++s) {
      const DistanceField& field = (*audio.fields)[s];
      const double dist = field.at(here);
      if (!std::isfinite(dist)) continue;
      const double amp = audio.sources[s].amplitude / (1.0 + dist);
      const RowVector sig = sound_signature(audio.sources[s], p.feat_a);
      const bool colocated = field.source_cell() == here;
      const double rel = colocated ? 0.0 : field.path_bearing(world, pose.position) - pose.heading;
      for (int k = 0; k < kSubViews; ++k) {
        for (int c = 0; c < 2; ++c) {
          const double g = colocated ? 1.0 : binaural_gain(rel, k, c);
          pano.audio.block(k, c * p.feat_a, 1, p.feat_a) += amp * g * sig;
        }
      }
    }
  }
  return pano;
}

Panorama render_panorama(const World& world, const AgentPose& pose) {
  return render_panorama(world, pose, AudioScene::ambient(world));
}

// ---- kinematics -----------------------------------------------------------

StepResult step(const World& world, const AgentPose& pose, int action) {
  if (action < 0 || action >= kNumActions) throw ContractError("action out of range: " + std::to_string(action));
  StepResult out{pose, false};
  if (action == kStopAction) return out;
  const double angle = subview_angle(pose, action);
  const Vec2 dir(std::cos(angle), std::sin(angle));
  const double free_len = cast_ray(world, pose.position, angle, kStepSize);
  if (free_len >= kStepSize) {
    out.pose.position = pose.position + kStepSize * dir;
    if (world.is_free(out.pose.position)) return out;
  }
  out.collision = true;
  double travel = std::max(0.0, std::min(free_len, kStepSize) - 0.005);
  while (travel > 0.0 && !world.is_free(pose.position + travel * dir)) travel = std::max(0.0, travel - 0.005);
  out.pose.position = pose.position + travel * dir;
  return out;
}

// ---- generation -----------------------------------------------------------

namespace {

struct Rect {
  int x0, y0, x1, y1;
  int w() const { return x1 - x0 + 1; }
  int h() const { return y1 - y0 + 1; }
};

struct Door {
  bool vertical_wall;  // wall runs along y at x = pos..pos+1
  int pos;
  int lo, hi;  // opening span along the wall
};

bool connected(const World& w) {
  const int total = w.free_cell_count();
  if (total == 0) return false;
  int start = -1;
  for (std::size_t i = 0; i < w.occupied.size(); ++i) {
    if (w.occupied[i] == kFree) {
      start = static_cast<int>(i);
      break;
    }
  }
  std::vector<std::uint8_t> seen(w.occupied.size(), 0);
  std::vector<int> stack{start};
  seen[static_cast<std::size_t>(start)] = 1;
  int count = 0;
  while (!stack.empty()) {
    const int idx = stack.back();
    stack.pop_back();
    ++count;
    const Cell c{idx % w.nx, idx / w.nx};
    const Cell nbrs[] = {{c.x + 1, c.y}, {c.x - 1, c.y}, {c.x, c.y + 1}, {c.x, c.y - 1}};
    for (const Cell& n : nbrs) {
      if (w.blocked(n)) continue;
      const auto ni = static_cast<std::size_t>(w.index(n));
      if (seen[ni]) continue;
      seen[ni] = 1;
      stack.push_back(static_cast<int>(ni));
    }
  }
  return count == total;
}

bool clear_disk(const World& w, const Vec2& p, double radius) {
  const Cell c = w.cell_of(p);
  const int r = static_cast<int>(std::ceil(radius / w.params.resolution));
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if (w.blocked({c.x + dx, c.y + dy})) return false;
  return true;
}

bool try_generate(World& w, Rng& rng) {
  const WorldParams& p = w.params;
  const double res = p.resolution;
  w.nx = static_cast<int>(std::lround(p.width / res));
  w.ny = static_cast<int>(std::lround(p.height / res));
  const std::size_t n = static_cast<std::size_t>(w.nx) * static_cast<std::size_t>(w.ny);
  w.occupied.assign(n, kFree);
  w.room_of_cell.assign(n, -1);
  w.rooms.clear();
  w.objects.clear();
  w.sound_sources.clear();
  for (int x = 0; x < w.nx; ++x) {
    w.occupied[static_cast<std::size_t>(w.index({x, 0}))] = kWall;
    w.occupied[static_cast<std::size_t>(w.index({x, w.ny - 1}))] = kWall;
  }
  for (int y = 0; y < w.ny; ++y) {
    w.occupied[static_cast<std::size_t>(w.index({0, y}))] = kWall;
    w.occupied[static_cast<std::size_t>(w.index({w.nx - 1, y}))] = kWall;
  }

  // Binary space partition into rooms separated by two-cell walls with doors.
  const int min_room = static_cast<int>(std::lround(1.6 / res));
  const int door = static_cast<int>(std::lround(0.9 / res));
  std::vector<Rect> rects{{1, 1, w.nx - 2, w.ny - 2}};
  std::vector<Door> doors;
  while (static_cast<int>(rects.size()) < p.rooms) {
    std::vector<std::size_t> order(rects.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return rects[a].w() * rects[a].h() > rects[b].w() * rects[b].h();
    });
    bool split = false;
    for (std::size_t idx : order) {
      const Rect r = rects[idx];
      const bool vertical = r.w() >= r.h();  // wall runs along y
      const int extent = vertical ? r.w() : r.h();
      if (extent < 2 * min_room + 2) continue;
      const int lo = (vertical ? r.x0 : r.y0) + min_room;
      const int hi = (vertical ? r.x1 : r.y1) - min_room - 1;
      std::uniform_int_distribution<int> pick(lo, hi);
      int pos = -1;
      for (int attempt = 0; attempt < 20 && pos < 0; ++attempt) {
        const int cand = pick(rng);
        bool ok = true;
        for (const Door& d : doors) {
          if (d.vertical_wall == vertical) continue;
          // A perpendicular wall must not land inside an existing doorway.
          const bool touches = vertical ? (d.pos == r.y0 - 2 || d.pos == r.y1 + 1) : (d.pos == r.x0 - 2 || d.pos == r.x1 + 1);
          if (touches && cand + 1 >= d.lo - 4 && cand <= d.hi + 4) ok = false;
        }
        if (ok) pos = cand;
      }
      if (pos < 0) continue;
      const int span_lo = vertical ? r.y0 : r.x0;
      const int span_hi = vertical ? r.y1 : r.x1;
      if (span_hi - span_lo + 1 < door + 4) continue;
      std::uniform_int_distribution<int> door_pick(span_lo + 2, span_hi - 2 - door + 1);
      const int d0 = door_pick(rng);
      for (int s = span_lo; s <= span_hi; ++s) {
        if (s >= d0 && s < d0 + door) continue;
        for (int t = pos; t <= pos + 1; ++t) {
          const Cell c = vertical ? Cell{t, s} : Cell{s, t};
          w.occupied[static_cast<std::size_t>(w.index(c))] = kWall;
        }
      }
      doors.push_back({vertical, pos, d0, d0 + door - 1});
      Rect a = r, b = r;
      if (vertical) {
        a.x1 = pos - 1;
        b.x0 = pos + 2;
      } else {
        a.y1 = pos - 1;
        b.y0 = pos + 2;
      }
      rects[idx] = a;
      rects.push_back(b);
      split = true;
      break;
    }
    if (!split) break;
  }

  std::vector<int> kinds(kRoomKinds);
  for (int i = 0; i < kRoomKinds; ++i) kinds[static_cast<std::size_t>(i)] = i;
  std::shuffle(kinds.begin(), kinds.end(), rng);
  for (std::size_t i = 0; i < rects.size(); ++i) {
    const Rect& r = rects[i];
    w.rooms.push_back({r.x0, r.y0, r.x1, r.y1, static_cast<RoomKind>(kinds[i % kinds.size()])});
    for (int y = r.y0; y <= r.y1; ++y)
      for (int x = r.x0; x <= r.x1; ++x) w.room_of_cell[static_cast<std::size_t>(w.index({x, y}))] = static_cast<int>(i);
  }
  // Doorway cells belong to the room on their low side so rendering has a kind.
  for (std::size_t i = 0; i < n; ++i) {
    if (w.occupied[i] == kFree && w.room_of_cell[i] < 0) {
      const Cell c{static_cast<int>(i) % w.nx, static_cast<int>(i) / w.nx};
      for (int k = 1; k <= 3 && w.room_of_cell[i] < 0; ++k) {
        const Cell cands[] = {{c.x - k, c.y}, {c.x, c.y - k}, {c.x + k, c.y}, {c.x, c.y + k}};
        for (const Cell& q : cands) {
          if (w.in_bounds(q) && w.room_of_cell[static_cast<std::size_t>(w.index(q))] >= 0) {
            w.room_of_cell[i] = w.room_of_cell[static_cast<std::size_t>(w.index(q))];
            break;
          }
        }
      }
    }
  }

  // Furniture blocks kept away from room boundaries so doorways stay open.
  const int margin = static_cast<int>(std::lround(0.7 / res));
  std::uniform_real_distribution<double> size_dist(0.4, 1.0);
  for (int o = 0; o < p.obstacles; ++o) {
    for (int attempt = 0; attempt < 30; ++attempt) {
      const Rect& room = rects[std::uniform_int_distribution<std::size_t>(0, rects.size() - 1)(rng)];
      const int bw = static_cast<int>(std::lround(size_dist(rng) / res));
      const int bh = static_cast<int>(std::lround(size_dist(rng) / res));
      const int xlo = room.x0 + margin, xhi = room.x1 - margin - bw + 1;
      const int ylo = room.y0 + margin, yhi = room.y1 - margin - bh + 1;
      if (xhi < xlo || yhi < ylo) continue;
      const int x0 = std::uniform_int_distribution<int>(xlo, xhi)(rng);
      const int y0 = std::uniform_int_distribution<int>(ylo, yhi)(rng);
      std::vector<std::size_t> placed;
      for (int y = y0; y < y0 + bh; ++y) {
        for (int x = x0; x < x0 + bw; ++x) {
          const auto i = static_cast<std::size_t>(w.index({x, y}));
          if (w.occupied[i] == kFree) {
            w.occupied[i] = kObstacle;
            placed.push_back(i);
          }
        }
      }
      if (connected(w)) break;
      for (std::size_t i : placed) w.occupied[i] = kFree;
    }
  }

  if (!connected(w)) return false;

  auto random_free = [&](double clearance, Vec2& out) {
    std::uniform_real_distribution<double> ux(0.0, p.width), uy(0.0, p.height);
    for (int attempt = 0; attempt < 2000; ++attempt) {
      const Vec2 q(ux(rng), uy(rng));
      const Vec2 c = w.center_of(w.cell_of(q));
      if (w.is_free(c) && clear_disk(w, c, clearance)) {
        out = c;
        return true;
      }
    }
    return false;
  };

  std::uniform_int_distribution<int> cat_dist(0, p.categories - 1);
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < p.objects; ++i) {
    ObjectInstance obj;
    obj.category = i < p.categories ? i : cat_dist(rng);
    obj.radius = 0.3;
    obj.emits_sound = coin(rng);
    if (!random_free(0.3, obj.position)) return false;
    w.objects.push_back(obj);
  }
  SoundSource ambient;
  if (!random_free(0.2, ambient.position)) return false;
  ambient.category = cat_dist(rng);
  ambient.waveform_seed = rng();
  ambient.amplitude = 0.5;
  w.sound_sources.push_back(ambient);
  return true;
}

}  // namespace

World generate_world(std::uint64_t seed, const WorldParams& params, int id) {
  params.validate();
  World w;
  w.id = id;
  w.seed = seed;
  w.params = params;
  Rng rng(mix(seed));
  constexpr int kRetries = 50;
  for (int attempt = 0; attempt < kRetries; ++attempt) {
    if (try_generate(w, rng)) {
      auto fields = std::make_shared<std::vector<DistanceField>>();
      for (const SoundSource& s : w.sound_sources) fields->emplace_back(w, s.position);
      w.ambient_fields = std::move(fields);
      return w;
    }
  }
  throw GenerationError("world generation failed after " + std::to_string(kRetries) + " attempts (seed " +
                        std::to_string(seed) + ")");
}

double geodesic_distance(const World& world, const Vec2& a, const Vec2& b) {
  if (!world.is_free(a) || !world.is_free(b)) throw ContractError("geodesic endpoints must lie in free space");
  const DistanceField field(world, b);
  const double d = field.at(world.cell_of(a));
  if (!std::isfinite(d)) throw DisconnectedError("points are not connected");
  return d;
}

std::string ascii_map(const World& world) {
  std::vector<std::string> rows(static_cast<std::size_t>((world.ny + 1) / 2), std::string(static_cast<std::size_t>((world.nx + 1) / 2), '.'));
  for (int y = 0; y < world.ny; ++y)
    for (int x = 0; x < world.nx; ++x)
      if (world.blocked({x, y})) rows[static_cast<std::size_t>(y / 2)][static_cast<std::size_t>(x / 2)] = '#';
  auto mark = [&](const Vec2& p, char ch) {
    const Cell c = world.cell_of(p);
    rows[static_cast<std::size_t>(c.y / 2)][static_cast<std::size_t>(c.x / 2)] = ch;
  };
  for (const ObjectInstance& o : world.objects) mark(o.position, static_cast<char>('0' + o.category % 10));
  for (const SoundSource& s : world.sound_sources) mark(s.position, '*');
  std::ostringstream out;
  for (auto it = rows.rbegin(); it != rows.rend(); ++it) out << *it << '\n';
  return out.str();
}

}  // namespace vienna
