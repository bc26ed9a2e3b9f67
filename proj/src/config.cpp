#include "vienna/config.hpp"

#include <sstream>

namespace vienna {

using nlohmann::json;

namespace {

template <class T, class Ref>
Knob field(std::string key, std::string axis, std::string help, Ref ref) {
  Knob k{std::move(key), std::move(axis), std::move(help), nullptr, nullptr};
  k.get = [ref](const TrainConfig& c) { return json(ref(const_cast<TrainConfig&>(c))); };
  k.set = [ref](TrainConfig& c, const json& v) { ref(c) = v.get<T>(); };
  return k;
}

std::vector<Knob> build_knobs() {
  std::vector<Knob> k;
  // run
  k.push_back(field<std::uint64_t>("seed", "run", "root seed; all model, client and sampling randomness derives from it",
                                   [](TrainConfig& c) -> auto& { return c.seed; }));
  k.push_back(field<std::int64_t>("train.total_steps", "trainer", "environment steps over all clients and tasks",
                                  [](TrainConfig& c) -> auto& { return c.total_steps; }));
  k.push_back(field<int>("train.eval_every", "trainer", "batches between val-seen/val-unseen evaluations",
                         [](TrainConfig& c) -> auto& { return c.eval_every; }));
  k.push_back(field<bool>("train.sequential", "trainer", "multiplex server and clients in one thread",
                          [](TrainConfig& c) -> auto& { return c.sequential; }));
  k.push_back(field<double>("train.round_timeout_s", "trainer", "seconds the server waits for a client per round",
                            [](TrainConfig& c) -> auto& { return c.round_timeout_s; }));
  {
    Knob t{"train.transport", "trainer", "inproc or socket (distributed mode only)", nullptr, nullptr};
    t.get = [](const TrainConfig& c) { return json(transport_name(c.transport)); };
    t.set = [](TrainConfig& c, const json& v) { c.transport = parse_transport(v.get<std::string>()); };
    k.push_back(std::move(t));
  }

  // model
  k.push_back(field<int>("model.d", "model", "embedding width", [](TrainConfig& c) -> auto& { return c.model.d; }));
  k.push_back(field<int>("model.attention_heads", "model", "heads of the transformer blocks",
                         [](TrainConfig& c) -> auto& { return c.model.heads; }));
  k.push_back(field<int>("model.goal_queries", "ablation:heads", "goal queries N produced by the target parser",
                         [](TrainConfig& c) -> auto& { return c.model.goal_queries; }));
  k.push_back(field<int>("model.n_image", "model", "rows of the goal-image block",
                         [](TrainConfig& c) -> auto& { return c.model.n_image; }));
  k.push_back(field<int>("model.n_lang", "model", "longest instruction the language block accepts",
                         [](TrainConfig& c) -> auto& { return c.model.n_lang; }));
  k.push_back(field<int>("model.shared_depth", "ablation:shared-depth", "planner blocks shared by all tasks",
                         [](TrainConfig& c) -> auto& { return c.model.shared_depth; }));
  k.push_back(field<int>("model.planner_depth", "model", "planner blocks on each task path",
                         [](TrainConfig& c) -> auto& { return c.model.planner_depth; }));
  k.push_back(field<int>("model.msi_blocks", "model", "multisensory integration blocks",
                         [](TrainConfig& c) -> auto& { return c.model.msi_blocks; }));
  k.push_back(field<int>("model.history_blocks", "model", "causal history encoder blocks",
                         [](TrainConfig& c) -> auto& { return c.model.history_blocks; }));
  k.push_back(field<int>("model.max_epochs", "model", "history capacity in epochs",
                         [](TrainConfig& c) -> auto& { return c.model.max_epochs; }));
  {
    Knob t{"model.tasks", "ablation:tasks", "task subset, e.g. [\"AGN\",\"VLN\"]", nullptr, nullptr};
    t.get = [](const TrainConfig& c) {
      json a = json::array();
      for (TaskKind x : c.model.tasks) a.push_back(task_code(x));
      return a;
    };
    t.set = [](TrainConfig& c, const json& v) {
      if (!v.is_array()) throw ConfigError("expected an array of task codes");
      c.model.tasks.clear();
      for (const json& e : v) c.model.tasks.push_back(parse_task(e.get<std::string>()));
    };
    k.push_back(std::move(t));
  }
  k.push_back(field<bool>("model.modalities.rgb", "ablation:modality", "RGB input enabled",
                          [](TrainConfig& c) -> auto& { return c.model.modalities.rgb; }));
  k.push_back(field<bool>("model.modalities.depth", "ablation:modality", "depth input enabled",
                          [](TrainConfig& c) -> auto& { return c.model.modalities.depth; }));
  k.push_back(field<bool>("model.modalities.audio", "ablation:modality", "audio input enabled",
                          [](TrainConfig& c) -> auto& { return c.model.modalities.audio; }));

  // sensor widths and categories are shared by the simulator and the model
  auto tied = [&](const std::string& key, const std::string& help, int ModelConfig::*m, int WorldParams::*w) {
    Knob t{key, "world", help, nullptr, nullptr};
    t.get = [m](const TrainConfig& c) { return json(c.model.*m); };
    t.set = [m, w](TrainConfig& c, const json& v) { c.model.*m = c.suite.world.*w = v.get<int>(); };
    k.push_back(std::move(t));
  };
  tied("world.feat_v", "RGB feature width per sub-view", &ModelConfig::feat_v, &WorldParams::feat_v);
  tied("world.feat_d", "depth feature width per sub-view", &ModelConfig::feat_d, &WorldParams::feat_d);
  tied("world.feat_a", "audio feature width per ear", &ModelConfig::feat_a, &WorldParams::feat_a);
  tied("world.categories", "object categories", &ModelConfig::categories, &WorldParams::categories);
  k.push_back(field<double>("world.width", "world", "map width (m)", [](TrainConfig& c) -> auto& { return c.suite.world.width; }));
  k.push_back(field<double>("world.height", "world", "map height (m)", [](TrainConfig& c) -> auto& { return c.suite.world.height; }));
  k.push_back(field<int>("world.rooms", "world", "rooms per map", [](TrainConfig& c) -> auto& { return c.suite.world.rooms; }));
  k.push_back(field<int>("world.obstacles", "world", "free-standing obstacles per map",
                         [](TrainConfig& c) -> auto& { return c.suite.world.obstacles; }));
  k.push_back(field<int>("world.objects", "world", "objects per map", [](TrainConfig& c) -> auto& { return c.suite.world.objects; }));

  // suite
  k.push_back(field<int>("suite.train_worlds", "suite", "worlds in the train / val-seen split",
                         [](TrainConfig& c) -> auto& { return c.suite.train_worlds; }));
  k.push_back(field<int>("suite.unseen_worlds", "suite", "worlds in the val-unseen split",
                         [](TrainConfig& c) -> auto& { return c.suite.unseen_worlds; }));
  k.push_back(field<double>("suite.min_goal", "suite", "shortest start-goal geodesic (m)",
                            [](TrainConfig& c) -> auto& { return c.suite.min_goal; }));
  k.push_back(field<double>("suite.max_goal", "suite", "longest start-goal geodesic (m)",
                            [](TrainConfig& c) -> auto& { return c.suite.max_goal; }));
  k.push_back(field<int>("suite.max_epochs", "suite", "action limit per episode",
                         [](TrainConfig& c) -> auto& { return c.suite.max_epochs; }));
  k.push_back(field<int>("suite.max_instruction", "suite", "instruction token limit",
                         [](TrainConfig& c) -> auto& { return c.suite.max_instruction; }));
  k.push_back(field<double>("suite.success_radius", "suite", "STOP within this geodesic distance succeeds (m)",
                            [](TrainConfig& c) -> auto& { return c.suite.success_radius; }));
  k.push_back(field<std::uint64_t>("suite.seed", "suite", "world generation seed",
                                   [](TrainConfig& c) -> auto& { return c.suite.seed; }));

  // reward
  k.push_back(field<double>("reward.success", "reward", "terminal success bonus",
                            [](TrainConfig& c) -> auto& { return c.reward.success_reward; }));
  k.push_back(field<double>("reward.slack", "reward", "per-step slack term",
                            [](TrainConfig& c) -> auto& { return c.reward.slack_reward; }));
  k.push_back(field<double>("reward.explore_scale", "reward", "exploration bonus scale",
                            [](TrainConfig& c) -> auto& { return c.reward.explore_scale; }));
  k.push_back(field<double>("reward.decay", "reward", "exploration bonus decay per epoch",
                            [](TrainConfig& c) -> auto& { return c.reward.decay; }));
  k.push_back(field<double>("reward.cell_size", "reward", "exploration cell size (m)",
                            [](TrainConfig& c) -> auto& { return c.reward.cell_size; }));
  k.push_back(field<bool>("reward.use_success", "ablation:reward", "success term on",
                          [](TrainConfig& c) -> auto& { return c.reward.use_success; }));
  k.push_back(field<bool>("reward.use_progress", "ablation:reward", "progress term on",
                          [](TrainConfig& c) -> auto& { return c.reward.use_progress; }));
  k.push_back(field<bool>("reward.use_slack", "ablation:reward", "slack term on",
                          [](TrainConfig& c) -> auto& { return c.reward.use_slack; }));
  k.push_back(field<bool>("reward.use_explore", "ablation:reward", "exploration term on",
                          [](TrainConfig& c) -> auto& { return c.reward.use_explore; }));

  // ppo
  k.push_back(field<double>("ppo.gamma", "trainer", "discount", [](TrainConfig& c) -> auto& { return c.ppo.gamma; }));
  k.push_back(field<double>("ppo.lambda", "trainer", "GAE lambda", [](TrainConfig& c) -> auto& { return c.ppo.lambda; }));
  k.push_back(field<double>("ppo.clip", "trainer", "surrogate clip epsilon", [](TrainConfig& c) -> auto& { return c.ppo.clip; }));
  k.push_back(field<int>("ppo.epochs", "trainer", "gradient rounds per collected batch",
                         [](TrainConfig& c) -> auto& { return c.ppo.epochs; }));
  k.push_back(field<int>("ppo.steps_per_task", "trainer", "steps per client and task per batch",
                         [](TrainConfig& c) -> auto& { return c.ppo.steps_per_task; }));
  k.push_back(field<double>("ppo.value_coef", "trainer", "value loss weight",
                            [](TrainConfig& c) -> auto& { return c.ppo.value_coef; }));
  k.push_back(field<double>("ppo.entropy_coef", "trainer", "entropy bonus weight",
                            [](TrainConfig& c) -> auto& { return c.ppo.entropy_coef; }));
  k.push_back(field<int>("ppo.clients", "trainer", "client workers", [](TrainConfig& c) -> auto& { return c.ppo.clients; }));
  k.push_back(field<double>("ppo.max_grad_norm", "trainer", "global norm clip of the averaged gradient (0 = off)",
                            [](TrainConfig& c) -> auto& { return c.ppo.max_grad_norm; }));
  k.push_back(field<double>("ppo.learning_rate", "trainer", "AdamW step size",
                            [](TrainConfig& c) -> auto& { return c.ppo.optimizer.learning_rate; }));
  k.push_back(field<double>("ppo.weight_decay", "trainer", "AdamW decoupled decay",
                            [](TrainConfig& c) -> auto& { return c.ppo.optimizer.weight_decay; }));

  // evaluation
  k.push_back(field<int>("eval.episodes_per_task", "evaluation", "fixed episodes per task and split",
                         [](TrainConfig& c) -> auto& { return c.eval.episodes_per_task; }));
  k.push_back(field<std::uint64_t>("eval.seed", "evaluation", "seed of the fixed evaluation episodes",
                                   [](TrainConfig& c) -> auto& { return c.eval.seed; }));
  return k;
}

std::vector<std::string> split_key(const std::string& key) {
  std::vector<std::string> parts;
  std::stringstream ss(key);
  std::string p;
  while (std::getline(ss, p, '.')) parts.push_back(p);
  return parts;
}

void flatten(const json& node, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
  for (auto it = node.begin(); it != node.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object())
      flatten(*it, key, out);
    else
      out.emplace_back(key, *it);
  }
}

}  // namespace

const std::vector<Knob>& knobs() {
  static const std::vector<Knob> table = build_knobs();
  return table;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"desk", "smoke", "paper", "tiny"};
  return names;
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig e;
  e.preset = name;
  TrainConfig& t = e.train;
  if (name == "desk") {
    t.total_steps = 2'000'000;
    t.eval_every = 50;
  } else if (name == "smoke") {
    // short-horizon episodes on the 24-world suite with a narrower model
    t.model.d = 32;
    t.suite.max_epochs = 60;
    t.model.max_epochs = 60;
    // faster policy improvement per collected step than the desk defaults
    t.ppo.optimizer.learning_rate = 1e-3;
    t.ppo.epochs = 4;
    t.total_steps = 2'000'000;
    t.eval_every = 60;
  } else if (name == "paper") {
    t.model = ModelConfig::paper();
    t.suite.max_instruction = t.model.n_lang;
    t.total_steps = 0;
  } else if (name == "tiny") {
    t.model.d = 8;
    t.model.heads = 2;
    t.model.goal_queries = 2;
    t.model.n_image = 2;
    t.model.shared_depth = 1;
    t.model.planner_depth = 2;
    t.model.msi_blocks = 1;
    t.model.history_blocks = 1;
    t.model.max_epochs = 12;
    t.suite.train_worlds = 2;
    t.suite.unseen_worlds = 1;
    t.suite.max_epochs = 12;
    t.ppo.clients = 2;
    t.ppo.steps_per_task = 6;
    t.eval.episodes_per_task = 1;
    t.total_steps = 96;
    t.eval_every = 1;
  } else {
    throw ConfigError("preset: unknown preset '" + name + "'");
  }
  return e;
}

json to_json(const ExperimentConfig& config) {
  json doc;
  doc["preset"] = config.preset;
  for (const Knob& k : knobs()) {
    json* node = &doc;
    for (const std::string& part : split_key(k.key)) node = &(*node)[part];
    *node = k.get(config.train);
  }
  return doc;
}

ExperimentConfig from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  std::string name = "desk";
  if (doc.contains("preset")) {
    if (!doc["preset"].is_string()) throw ConfigError("preset: expected a string");
    name = doc["preset"].get<std::string>();
  }
  ExperimentConfig e = preset(name);
  std::vector<std::pair<std::string, json>> leaves;
  flatten(doc, "", leaves);
  for (const auto& [key, value] : leaves) {
    if (key == "preset") continue;
    const Knob* knob = nullptr;
    for (const Knob& k : knobs())
      if (k.key == key) knob = &k;
    if (!knob) throw ConfigError(key + ": unknown config key");
    try {
      knob->set(e.train, value);
    } catch (const json::exception&) {
      throw ConfigError(key + ": wrong type (" + value.dump() + ")");
    } catch (const ConfigError& err) {
      throw ConfigError(key + ": " + err.what());
    } catch (const ContractError& err) {
      throw ConfigError(key + ": " + err.what());
    }
  }
  try {
    e.train.validate();
  } catch (const ContractError& err) {
    throw ConfigError(err.what());
  }
  return e;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "': expected key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &doc;
  for (const std::string& part : split_key(key)) {
    if (!node->is_object() && !node->is_null()) throw ConfigError("override '" + key + "': path crosses a non-object value");
    node = &(*node)[part];
  }
  *node = value;
}

std::string config_hash(const ExperimentConfig& config) {
  json doc = to_json(config);
  doc.erase("preset");
  const std::string canon = doc.dump();  // object keys are sorted
  const std::uint64_t h = fnv1a(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(canon.data()), canon.size()));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

const std::vector<std::string>& ablation_axes() {
  static const std::vector<std::string> axes{"modality", "heads", "shared-depth", "reward", "tasks"};
  return axes;
}

std::vector<AblationVariant> ablation_grid(const ExperimentConfig& base, const std::string& axis) {
  std::vector<AblationVariant> out;
  auto variant = [&](const std::string& name, const std::function<void(TrainConfig&)>& edit) {
    ExperimentConfig e = base;
    edit(e.train);
    out.push_back({name, {e}});
  };
  if (axis == "modality") {
    variant("rgb", [](TrainConfig& t) { t.model.modalities = {true, false, false}; });
    variant("audio", [](TrainConfig& t) { t.model.modalities = {false, false, true}; });
    variant("rgbd", [](TrainConfig& t) { t.model.modalities = {true, true, false}; });
    variant("rgbd+audio", [](TrainConfig& t) { t.model.modalities = {true, true, true}; });
  } else if (axis == "heads") {
    for (int n : {1, 3, 5, 7}) variant("N=" + std::to_string(n), [n](TrainConfig& t) { t.model.goal_queries = n; });
  } else if (axis == "shared-depth") {
    const int depth = base.train.model.planner_depth;
    if (depth < 4) throw ConfigError("shared-depth axis needs model.planner_depth >= 4");
    variant("separate", [](TrainConfig& t) { t.model.shared_depth = 0; });
    for (int s : {1, 2, 3}) variant(std::to_string(s) + "-shared", [s](TrainConfig& t) { t.model.shared_depth = s; });
    variant("all-shared", [depth](TrainConfig& t) { t.model.shared_depth = depth; });
  } else if (axis == "reward") {
    auto terms = [](bool progress, bool slack, bool explore) {
      return [=](TrainConfig& t) {
        t.reward.use_success = true;
        t.reward.use_progress = progress;
        t.reward.use_slack = slack;
        t.reward.use_explore = explore;
      };
    };
    variant("success", terms(false, false, false));
    variant("success+progress", terms(true, false, false));
    variant("success+progress+slack", terms(true, true, false));
    variant("success+progress+slack+explore", terms(true, true, true));
  } else if (axis == "tasks") {
    AblationVariant single{"single", {}};
    for (TaskKind t : {TaskKind::AudioGoal, TaskKind::VisionLanguage}) {
      ExperimentConfig e = base;
      e.train.model.tasks = {t};
      single.runs.push_back(e);
    }
    out.push_back(std::move(single));
    variant("AGN+VLN", [](TrainConfig& t) { t.model.tasks = {TaskKind::AudioGoal, TaskKind::VisionLanguage}; });
    variant("AGN+VLN+IGN", [](TrainConfig& t) {
      t.model.tasks = {TaskKind::AudioGoal, TaskKind::VisionLanguage, TaskKind::ImageGoal};
    });
    variant("AGN+VLN+IGN+OGN", [](TrainConfig& t) {
      t.model.tasks = {TaskKind::AudioGoal, TaskKind::VisionLanguage, TaskKind::ImageGoal, TaskKind::ObjectGoal};
    });
  } else {
    throw ConfigError("ablate: unknown axis '" + axis + "'");
  }
  return out;
}

nlohmann::json replay_json(const ReplayStep& s) {
  json attn = json::array();
  for (const RowVector& w : s.parse_weights) attn.push_back(std::vector<double>(w.data(), w.data() + w.size()));
  return json{{"epoch", s.epoch},
              {"pose", {{"x", s.pose.position.x()}, {"y", s.pose.position.y()}, {"heading", s.pose.heading}}},
              {"action", s.action},
              {"reward",
               {{"success", s.reward.success},
                {"progress", s.reward.progress},
                {"slack", s.reward.slack},
                {"explore", s.reward.explore},
                {"total", s.reward.total()}}},
              {"probs", std::vector<double>(s.probs.data(), s.probs.data() + s.probs.size())},
              {"attention", attn}};
}

}  // namespace vienna
