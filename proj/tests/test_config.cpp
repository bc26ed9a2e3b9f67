#include "vienna/config.hpp"

#include <doctest.h>

#include <set>

using namespace vienna;
using nlohmann::json;

TEST_CASE("config: json round trip and presets") {
  for (const std::string& name : preset_names()) {
    const ExperimentConfig e = preset(name);
    const ExperimentConfig back = from_json(to_json(e));
    CHECK(to_json(back) == to_json(e));
    CHECK(config_hash(back) == config_hash(e));
  }
  CHECK_THROWS_AS(preset("huge"), ConfigError);
}

TEST_CASE("config: hash ignores field order and preset origin") {
  const json a = json::parse(R"({"preset":"tiny","ppo":{"gamma":0.95,"clip":0.1},"seed":4})");
  const json b = json::parse(R"({"seed":4,"ppo":{"clip":0.1,"gamma":0.95},"preset":"tiny"})");
  CHECK(config_hash(from_json(a)) == config_hash(from_json(b)));
  // same values reached from another preset
  json c = to_json(from_json(a));
  c["preset"] = "desk";
  CHECK(config_hash(from_json(c)) == config_hash(from_json(a)));
  json d = a;
  d["ppo"]["clip"] = 0.2;
  CHECK(config_hash(from_json(d)) != config_hash(from_json(a)));
}

TEST_CASE("config: field-level errors") {
  auto msg = [](const json& doc) {
    try {
      from_json(doc);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(msg(json::parse(R"({"ppo":{"gama":0.9}})")).find("ppo.gama") != std::string::npos);
  CHECK(msg(json::parse(R"({"ppo":{"gamma":"high"}})")).find("ppo.gamma") != std::string::npos);
  CHECK(msg(json::parse(R"({"model":{"tasks":["XYZ"]}})")).find("model.tasks") != std::string::npos);
  CHECK(msg(json::parse(R"({"model":{"tasks":[]}})")).find("nonempty") != std::string::npos);
  CHECK(msg(json::parse(R"({"ppo":{"clip":-1}})")).find("clip") != std::string::npos);
  json doc = json::object();
  CHECK_THROWS_AS(apply_override(doc, "novalue"), ConfigError);
  apply_override(doc, "ppo.epochs=3");
  apply_override(doc, "train.transport=socket");
  apply_override(doc, "model.tasks=[\"AGN\"]");
  const ExperimentConfig e = from_json(doc);
  CHECK(e.train.ppo.epochs == 3);
  CHECK(e.train.transport == Transport::Socket);
  CHECK(e.train.model.tasks == std::vector<TaskKind>{TaskKind::AudioGoal});
}

TEST_CASE("config: every knob is documented with one axis and a distinct key") {
  std::set<std::string> keys;
  const std::set<std::string> axes{"run",   "trainer", "model",      "world",          "suite",
                                    "reward", "evaluation", "ablation:modality", "ablation:heads",
                                    "ablation:shared-depth", "ablation:reward", "ablation:tasks"};
  for (const Knob& k : knobs()) {
    CHECK(keys.insert(k.key).second);
    CHECK(axes.count(k.axis) == 1);
    CHECK_FALSE(k.help.empty());
  }
  // each ablation axis is reachable through at least one knob
  for (const std::string& a : ablation_axes()) {
    bool found = false;
    for (const Knob& k : knobs()) found = found || k.axis == "ablation:" + a;
    CHECK(found);
  }
}

TEST_CASE("config: single-task subset instantiates one private path") {
  ExperimentConfig e = preset("tiny");
  e.train.model.tasks = {TaskKind::AudioGoal};
  ModelParams p = make_model(e.train.model, 1);
  for (int t = 0; t < kNumTasks; ++t) {
    const bool want = t == static_cast<int>(TaskKind::AudioGoal);
    CHECK(p.planner_private[t].empty() != want);
    CHECK(p.value_head[t].has_value() == want);
  }
  for (const NamedParam& np : p.named())
    for (const char* other : {"IGN", "OGN", "VLN", "ImageGoal", "ObjectGoal", "VisionLanguage"})
      CHECK(np.path.find(std::string(".") + other + ".") == std::string::npos);
}
