#include "vienna/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vienna {

namespace {

constexpr double kTurnThreshold = 20.0 * kPi / 180.0;

double wrap(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0) a += 2.0 * kPi;
  return a - kPi;
}

const char* const kCategoryNames[] = {"chair", "table", "bed", "sofa", "washer", "plant", "toilet", "television"};

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t salt) {
  std::uint64_t x = root * 0x9e3779b97f4a7c15ULL + salt;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

const char* task_name(TaskKind t) {
  switch (t) {
    case TaskKind::ImageGoal: return "ImageGoal";
    case TaskKind::AudioGoal: return "AudioGoal";
    case TaskKind::ObjectGoal: return "ObjectGoal";
    case TaskKind::VisionLanguage: return "VisionLanguage";
  }
  return "?";
}

const char* task_code(TaskKind t) {
  switch (t) {
    case TaskKind::ImageGoal: return "IGN";
    case TaskKind::AudioGoal: return "AGN";
    case TaskKind::ObjectGoal: return "OGN";
    case TaskKind::VisionLanguage: return "VLN";
  }
  return "?";
}

TaskKind parse_task(const std::string& s) {
  for (TaskKind t : kAllTasks)
    if (s == task_name(t) || s == task_code(t)) return t;
  throw ContractError("unknown task kind '" + s + "' (expected ImageGoal|AudioGoal|ObjectGoal|VisionLanguage)");
}

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::ValSeen: return "val_seen";
    case Split::ValUnseen: return "val_unseen";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  for (Split sp : {Split::Train, Split::ValSeen, Split::ValUnseen})
    if (s == split_name(sp)) return sp;
  throw ContractError("unknown split '" + s + "' (expected train|val_seen|val_unseen)");
}

// ---- vocabulary -------------------------------------------------------------

std::string category_name(int category) {
  if (category >= 0 && category < 8) return kCategoryNames[category];
  return "object" + std::to_string(category);
}

std::string token_text(int token) {
  switch (token) {
    case vocab::kPad: return "<pad>";
    case vocab::kGo: return "go";
    case vocab::kStraight: return "straight";
    case vocab::kThrough: return "through";
    case vocab::kTurn: return "turn";
    case vocab::kLeft: return "left";
    case vocab::kRight: return "right";
    case vocab::kStop: return "stop";
    case vocab::kAt: return "at";
    default: break;
  }
  if (token >= vocab::kRoomBase && token < vocab::kCategoryBase) return room_kind_name(static_cast<RoomKind>(token - vocab::kRoomBase));
  if (token >= vocab::kCategoryBase && token < vocab::kSize) return category_name(token - vocab::kCategoryBase);
  return "<unk>";
}

std::string instruction_text(const std::vector<int>& tokens) {
  std::ostringstream out;
  for (std::size_t i = 0; i < tokens.size(); ++i) out << (i ? " " : "") << token_text(tokens[i]);
  return out.str();
}

// ---- instructions -----------------------------------------------------------

std::vector<int> turn_sequence(const std::vector<Vec2>& waypoints) {
  std::vector<int> turns;
  for (std::size_t i = 1; i + 1 < waypoints.size(); ++i) {
    const Vec2 a = waypoints[i] - waypoints[i - 1];
    const Vec2 b = waypoints[i + 1] - waypoints[i];
    const double delta = wrap(std::atan2(b.y(), b.x()) - std::atan2(a.y(), a.x()));
    if (delta > kTurnThreshold) turns.push_back(+1);
    if (delta < -kTurnThreshold) turns.push_back(-1);
  }
  return turns;
}

Instruction generate_instruction(const World& world, const std::vector<Vec2>& waypoints) {
  if (waypoints.size() < 2) throw ContractError("instruction path needs at least two waypoints");
  for (const Vec2& p : waypoints)
    if (!world.in_bounds(world.cell_of(p))) throw ContractError("instruction path leaves the world");

  // Group consecutive segments between turns.
  std::vector<std::vector<std::size_t>> groups{{0}};
  std::vector<int> turns;
  for (std::size_t i = 1; i + 1 < waypoints.size(); ++i) {
    const Vec2 a = waypoints[i] - waypoints[i - 1];
    const Vec2 b = waypoints[i + 1] - waypoints[i];
    const double delta = wrap(std::atan2(b.y(), b.x()) - std::atan2(a.y(), a.x()));
    if (std::abs(delta) > kTurnThreshold) {
      turns.push_back(delta > 0 ? +1 : -1);
      groups.push_back({i});
    } else {
      groups.back().push_back(i);
    }
  }

  Instruction out;
  out.waypoints = waypoints;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    double total = 0.0;
    for (std::size_t s : groups[g]) total += (waypoints[s + 1] - waypoints[s]).norm();
    // Room at the middle of the group's polyline.
    Vec2 mid = waypoints[groups[g].front()];
    double walked = 0.0;
    for (std::size_t s : groups[g]) {
      const double len = (waypoints[s + 1] - waypoints[s]).norm();
      if (walked + len >= 0.5 * total) {
        const double f = len > 0 ? (0.5 * total - walked) / len : 0.0;
        mid = waypoints[s] + f * (waypoints[s + 1] - waypoints[s]);
        break;
      }
      walked += len;
    }
    out.tokens.insert(out.tokens.end(), {vocab::kGo, vocab::kStraight, vocab::kThrough,
                                         vocab::kRoomBase + static_cast<int>(world.room_kind_at(mid))});
    if (g < turns.size()) out.tokens.insert(out.tokens.end(), {vocab::kTurn, turns[g] > 0 ? vocab::kLeft : vocab::kRight});
  }
  out.tokens.push_back(vocab::kStop);
  const Vec2& end = waypoints.back();
  const ObjectInstance* nearest = nullptr;
  double best = 1.0;
  for (const ObjectInstance& o : world.objects) {
    const double d = (o.position - end).norm();
    if (d <= best && o.category < vocab::kMaxCategories) {
      best = d;
      nearest = &o;
    }
  }
  if (nearest) out.tokens.insert(out.tokens.end(), {vocab::kAt, vocab::kCategoryBase + nearest->category});
  return out;
}

std::vector<SegmentAction> parse_instruction(const std::vector<int>& tokens) {
  std::vector<SegmentAction> out;
  std::size_t i = 0;
  auto expect = [&](int tok) {
    if (i >= tokens.size() || tokens[i] != tok)
      throw ContractError("malformed instruction at token " + std::to_string(i) + ": expected '" + token_text(tok) + "'");
    ++i;
  };
  while (i < tokens.size()) {
    const int t = tokens[i];
    if (t == vocab::kGo) {
      ++i;
      expect(vocab::kStraight);
      expect(vocab::kThrough);
      if (i >= tokens.size() || tokens[i] < vocab::kRoomBase || tokens[i] >= vocab::kCategoryBase)
        throw ContractError("malformed instruction: expected a room kind at token " + std::to_string(i));
      out.push_back({SegmentAction::Straight, tokens[i++] - vocab::kRoomBase});
    } else if (t == vocab::kTurn) {
      ++i;
      if (i < tokens.size() && tokens[i] == vocab::kLeft) {
        out.push_back({SegmentAction::TurnLeft, -1});
      } else if (i < tokens.size() && tokens[i] == vocab::kRight) {
        out.push_back({SegmentAction::TurnRight, -1});
      } else {
        throw ContractError("malformed instruction: turn without direction");
      }
      ++i;
    } else if (t == vocab::kStop) {
      ++i;
      SegmentAction stop{SegmentAction::Stop, -1};
      if (i < tokens.size() && tokens[i] == vocab::kAt) {
        ++i;
        if (i >= tokens.size() || tokens[i] < vocab::kCategoryBase || tokens[i] >= vocab::kSize)
          throw ContractError("malformed instruction: expected a category after 'at'");
        stop.arg = tokens[i++] - vocab::kCategoryBase;
      }
      out.push_back(stop);
      if (i != tokens.size()) throw ContractError("malformed instruction: tokens after stop");
    } else if (t == vocab::kPad) {
      ++i;
    } else {
      throw ContractError("malformed instruction: unexpected token '" + token_text(t) + "'");
    }
  }
  if (out.empty() || out.back().kind != SegmentAction::Stop) throw ContractError("malformed instruction: missing stop");
  return out;
}

std::vector<Vec2> shortest_path_waypoints(const World& world, const DistanceField& goal_field, const Vec2& start) {
  const auto cells = goal_field.descent_path(world, start);
  if (cells.empty()) throw DisconnectedError("start is not connected to the goal");
  std::vector<Vec2> pts;
  pts.push_back(start);
  for (std::size_t i = 1; i < cells.size(); ++i) pts.push_back(world.center_of(cells[i]));
  if (cells.size() == 1) pts.push_back(world.center_of(cells[0]));
  // String pulling: jump to the farthest point still in line of sight.
  std::vector<Vec2> out{pts.front()};
  std::size_t i = 0;
  while (i + 1 < pts.size()) {
    std::size_t j = i + 1;
    while (j + 1 < pts.size() && line_of_sight(world, pts[i], pts[j + 1])) ++j;
    out.push_back(pts[j]);
    i = j;
  }
  return out;
}

// ---- success ----------------------------------------------------------------

bool check_success(const EpisodeContext& ctx, const Trajectory& trajectory) {
  if (trajectory.actions.empty()) throw ContractError("trajectory has no actions");
  if (trajectory.poses.size() != trajectory.actions.size() + 1)
    throw ContractError("trajectory must hold one more pose than actions");
  if (trajectory.actions.back() != kStopAction) return false;
  if (static_cast<int>(trajectory.actions.size()) > ctx.episode.max_epochs) return false;
  return ctx.goal_distance(trajectory.poses.back().position) < ctx.success_radius;
}

int oracle_action(const EpisodeContext& ctx, const AgentPose& pose) {
  if (ctx.goal_distance(pose.position) < ctx.success_radius - 0.1) return kStopAction;
  const auto waypoints = shortest_path_waypoints(*ctx.world, *ctx.goal_field, pose.position);
  Vec2 target = waypoints.back();
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    if ((waypoints[i] - pose.position).norm() > 0.05) {
      target = waypoints[i];
      break;
    }
  }
  const Vec2 d = target - pose.position;
  const double bearing = std::atan2(d.y(), d.x());
  // Closest direction among moves that are not cut short by an obstacle.
  int best = -1;
  double best_diff = 1e9;
  double best_moved = -1.0;
  int fallback = 0;
  for (int a = 0; a < kSubViews; ++a) {
    const double moved = (step(*ctx.world, pose, a).pose.position - pose.position).norm();
    if (moved > best_moved) {
      best_moved = moved;
      fallback = a;
    }
    if (moved < 0.8 * kStepSize) continue;
    const double diff = std::abs(wrap(subview_angle(pose, a) - bearing));
    if (diff < best_diff) {
      best_diff = diff;
      best = a;
    }
  }
  return best >= 0 ? best : fallback;
}

// ---- suite ------------------------------------------------------------------

void SuiteConfig::validate() const {
  world.validate();
  if (train_worlds < 1 || unseen_worlds < 1) throw ContractError("each split needs at least one world");
  if (!(min_goal >= 1.0) || !(max_goal > min_goal)) throw ContractError("goal range must satisfy 1 <= min_goal < max_goal");
  if (max_epochs < 1) throw ContractError("max_epochs must be positive");
  if (max_instruction < 8) throw ContractError("instruction length limit must be at least 8");
  if (world.categories > vocab::kMaxCategories)
    throw ContractError("at most " + std::to_string(vocab::kMaxCategories) + " object categories fit the vocabulary");
}

TaskSuite::TaskSuite(const SuiteConfig& config) : config_(config) {
  config_.validate();
  const int total = config.train_worlds + config.unseen_worlds;
  for (int id = 0; id < total; ++id) {
    worlds_.push_back(generate_world(derive_seed(config.seed, static_cast<std::uint64_t>(id) + 1), config.world, id));
    (id < config.train_worlds ? train_ids_ : unseen_ids_).push_back(id);
    const World& w = worlds_.back();
    std::vector<std::uint8_t> roomy(w.occupied.size(), 0);
    for (int y = 0; y < w.ny; ++y) {
      for (int x = 0; x < w.nx; ++x) {
        bool ok = true;
        for (int dy = -4; dy <= 4 && ok; ++dy)
          for (int dx = -4; dx <= 4 && ok; ++dx) ok = !w.blocked({x + dx, y + dy});
        roomy[static_cast<std::size_t>(w.index({x, y}))] = ok ? 1 : 0;
      }
    }
    roomy_.push_back(std::move(roomy));
  }
}

const World& TaskSuite::world(int id) const {
  if (id < 0 || id >= world_count()) throw ContractError("unknown world id " + std::to_string(id));
  return worlds_[static_cast<std::size_t>(id)];
}

const std::vector<int>& TaskSuite::world_ids(Split split) const {
  return split == Split::ValUnseen ? unseen_ids_ : train_ids_;
}

Episode TaskSuite::sample_episode(Split split, TaskKind task, Rng& rng, int id) const {
  return sample(split, task, rng, id).episode;
}

EpisodeContext TaskSuite::context(const Episode& episode) const {
  EpisodeContext ctx;
  ctx.world = &world(episode.world_id);
  ctx.episode = episode;
  ctx.success_radius = config_.success_radius;
  ctx.goal_field = std::make_shared<DistanceField>(*ctx.world, episode.goal);
  if (const auto* sound = std::get_if<TargetSound>(&episode.target)) {
    ctx.audio = AudioScene::single(*ctx.world, sound->source);
  } else {
    ctx.audio = AudioScene::ambient(*ctx.world);
  }
  return ctx;
}

EpisodeContext TaskSuite::sample(Split split, TaskKind task, Rng& rng, int id) const {
  const auto& ids = world_ids(split);
  if (ids.empty()) throw ContractError("split has no worlds");
  std::uniform_int_distribution<std::size_t> pick_world(0, ids.size() - 1);

  auto pick_cell = [&](const World& w, const std::vector<std::uint8_t>& roomy, const DistanceField* field, Vec2& out) {
    std::vector<int> cands;
    for (int idx = 0; idx < static_cast<int>(roomy.size()); ++idx) {
      if (!roomy[static_cast<std::size_t>(idx)]) continue;
      if (field) {
        const double d = field->at(Cell{idx % w.nx, idx / w.nx});
        if (!(d >= config_.min_goal && d <= config_.max_goal)) continue;
      }
      cands.push_back(idx);
    }
    if (cands.empty()) return false;
    const int idx = cands[std::uniform_int_distribution<std::size_t>(0, cands.size() - 1)(rng)];
    out = w.center_of({idx % w.nx, idx / w.nx});
    return true;
  };

  for (int attempt = 0; attempt < 200; ++attempt) {
    const int wid = ids[pick_world(rng)];
    const World& w = worlds_[static_cast<std::size_t>(wid)];
    const auto& roomy = roomy_[static_cast<std::size_t>(wid)];

    Episode ep;
    ep.id = id;
    ep.world_id = wid;
    ep.world_seed = w.seed;
    ep.audio_seed = rng();
    ep.task = task;
    ep.max_epochs = config_.max_epochs;
    std::shared_ptr<DistanceField> goal_field;

    if (task == TaskKind::ObjectGoal) {
      if (w.objects.empty()) continue;
      const ObjectInstance& anchor = w.objects[std::uniform_int_distribution<std::size_t>(0, w.objects.size() - 1)(rng)];
      const DistanceField anchor_field(w, anchor.position);
      if (!pick_cell(w, roomy, &anchor_field, ep.start.position)) continue;
      // The goal is the geodesically nearest instance of the category.
      const DistanceField from_start(w, ep.start.position);
      const ObjectInstance* nearest = nullptr;
      for (const ObjectInstance& o : w.objects) {
        if (o.category != anchor.category) continue;
        if (!nearest || from_start.at(o.position) < from_start.at(nearest->position)) nearest = &o;
      }
      if (from_start.at(nearest->position) < config_.min_goal) continue;
      ep.goal = nearest->position;
      ep.target = ClassTag{anchor.category};
      goal_field = nearest == &anchor ? std::make_shared<DistanceField>(anchor_field)
                                      : std::make_shared<DistanceField>(w, ep.goal);
    } else {
      if (!pick_cell(w, roomy, nullptr, ep.goal)) continue;
      goal_field = std::make_shared<DistanceField>(w, ep.goal);
      if (!pick_cell(w, roomy, goal_field.get(), ep.start.position)) continue;
    }
    ep.shortest_length = goal_field->at(ep.start.position);
    if (!std::isfinite(ep.shortest_length) || ep.shortest_length < 1.0) continue;

    EpisodeContext ctx;
    ctx.world = &w;
    ctx.goal_field = goal_field;
    ctx.success_radius = config_.success_radius;
    ctx.audio = AudioScene::ambient(w);

    switch (task) {
      case TaskKind::ImageGoal: {
        GoalView view;
        view.pose = {ep.goal, 0.0};
        view.rgb = render_panorama(w, view.pose).rgb;
        ep.target = std::move(view);
        break;
      }
      case TaskKind::AudioGoal: {
        TargetSound sound;
        sound.source.position = ep.goal;
        sound.source.waveform_seed = ep.audio_seed;
        sound.source.category = std::uniform_int_distribution<int>(0, w.params.categories - 1)(rng);
        sound.source.amplitude = 1.0;
        auto fields = std::make_shared<std::vector<DistanceField>>();
        fields->push_back(*goal_field);
        ctx.audio.sources = {sound.source};
        ctx.audio.fields = std::move(fields);
        ep.target = sound;
        break;
      }
      case TaskKind::ObjectGoal: break;
      case TaskKind::VisionLanguage: {
        Instruction ins = generate_instruction(w, shortest_path_waypoints(w, *goal_field, ep.start.position));
        if (static_cast<int>(ins.tokens.size()) > config_.max_instruction) continue;
        ep.target = std::move(ins);
        break;
      }
    }
    ctx.episode = std::move(ep);
    return ctx;
  }
  throw GenerationError(std::string("could not sample a ") + task_name(task) + " episode in split " + split_name(split));
}

}  // namespace vienna
