#pragma once

// Experiment configuration: presets, the knob table behind the JSON config
// file and command-line overrides, config hashing and ablation grids.

#include "vienna/trainer.hpp"

#include <json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace vienna {

/// Bad config input; the message names the offending field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string preset = "desk";
  TrainConfig train;
};

/// One settable field. `axis` names the ablation axis the knob belongs to,
/// or the component it parameterises when it is not an ablation switch.
struct Knob {
  std::string key;  // dotted path in the config file
  std::string axis;
  std::string help;
  std::function<nlohmann::json(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const nlohmann::json&)> set;
};
const std::vector<Knob>& knobs();

const std::vector<std::string>& preset_names();
/// desk, smoke, paper or tiny. Throws ConfigError.
ExperimentConfig preset(const std::string& name);

/// Every knob, nested by its dotted key, plus "preset".
nlohmann::json to_json(const ExperimentConfig& config);
/// Starts from doc["preset"] (default desk) and applies every other key.
/// Unknown keys, wrong types and invalid values throw ConfigError.
ExperimentConfig from_json(const nlohmann::json& doc);
/// `a.b.c=value`; value is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// FNV-1a over the canonical (key-sorted) knob values; independent of the
/// order fields appear in the file and of the preset they came from.
std::string config_hash(const ExperimentConfig& config);

struct AblationVariant {
  std::string name;
  /// Usually one run; the single-task row of the task axis trains one model per task.
  std::vector<ExperimentConfig> runs;
};
const std::vector<std::string>& ablation_axes();
/// Variants of `axis` under the base config's seeds. Throws ConfigError.
std::vector<AblationVariant> ablation_grid(const ExperimentConfig& base, const std::string& axis);

/// One line of the replay dump: pose, action, reward terms, probs, attention.
nlohmann::json replay_json(const ReplayStep& step);

}  // namespace vienna
