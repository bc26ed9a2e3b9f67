// Command-line front end: train, eval, ablate, replay, worldgen-preview, knobs.

#include "vienna/config.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#ifndef VIENNA_VERSION
#define VIENNA_VERSION "unknown"
#endif

using namespace vienna;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

std::string now_iso() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::ostringstream os;
  os << std::put_time(std::gmtime(&t), "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError(p.string() + ": cannot open");
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError(p.string() + ": not valid JSON");
  return doc;
}

void write_json(const fs::path& p, const json& doc) { std::ofstream(p) << doc.dump(2) << '\n'; }

// Config file (optional), then --preset, then --set overrides in order.
ExperimentConfig load_config(const std::string& file, const std::string& preset_name, const std::vector<std::string>& sets) {
  json doc = file.empty() ? json::object() : read_json(file);
  if (!preset_name.empty()) doc["preset"] = preset_name;
  for (const std::string& s : sets) apply_override(doc, s);
  return from_json(doc);
}

std::vector<TaskKind> parse_tasks(const std::string& list, const ModelConfig& model) {
  if (list.empty()) return model.tasks;
  std::vector<TaskKind> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_task(item));
  return out;
}

ModelParams load_params(const ExperimentConfig& cfg, const fs::path& checkpoint) {
  ModelParams p = make_model(cfg.train.model, 0);
  const ParamSnapshot snap = load_checkpoint(checkpoint);
  try {
    restore(p.named(), snap);
  } catch (const std::exception& e) {
    throw ConfigError(checkpoint.string() + ": does not match the configured model (" + e.what() + ")");
  }
  return p;
}

json metrics_json(std::span<const MetricRow> rows) {
  json out = json::array();
  for (const MetricRow& r : rows)
    out.push_back({{"task", task_code(r.task)}, {"split", split_name(r.split)}, {"sr", r.sr}, {"ne", r.ne},
                   {"or", r.oracle_rate}, {"spl", r.spl}, {"episodes", r.episodes}});
  return out;
}

json manifest(const ExperimentConfig& cfg, const fs::path& dir, const std::string& started, const json& extra = {}) {
  json m = {{"config_hash", config_hash(cfg)},
          {"code_version", VIENNA_VERSION},
          {"preset", cfg.preset},
          {"seed", cfg.train.seed},
          {"started", started},
          {"finished", nullptr},
          {"status", "running"},
          {"outputs",
           {{"config", (dir / "config.json").string()},
            {"curve", (dir / "curve.csv").string()},
            {"log", (dir / "train.log").string()},
            {"checkpoints", (dir / "checkpoints").string()}}}};
  if (extra.is_object()) m.update(extra);
  return m;
}

// Trains one config into `dir`; returns the result and writes config, manifest, log.
TrainResult run_training(const ExperimentConfig& cfg, const fs::path& dir, bool quiet, const json& extra = {}) {
  fs::create_directories(dir);
  write_json(dir / "config.json", to_json(cfg));
  json man = manifest(cfg, dir, now_iso(), extra);
  write_json(dir / "manifest.json", man);
  std::ofstream log(dir / "train.log");
  TrainHooks hooks;
  hooks.log = [&](const std::string& s) {
    log << s << std::endl;
    if (!quiet) std::cerr << s << '\n';
  };
  try {
    TrainResult r = train(cfg.train, dir, hooks);
    man["finished"] = now_iso();
    man["status"] = "ok";
    man["steps"] = r.steps;
    man["rounds"] = r.rounds;
    man["best_unseen_sr"] = r.best_unseen_sr;
    man["best_steps"] = r.best_steps;
    write_json(dir / "manifest.json", man);
    return r;
  } catch (const DivergenceError& e) {
    man["finished"] = now_iso();
    man["status"] = std::string("diverged: ") + e.what();
    write_json(dir / "manifest.json", man);
    throw;
  }
}

int cmd_knobs() {
  std::cout << std::left << std::setw(28) << "key" << std::setw(24) << "axis" << "description\n";
  for (const Knob& k : knobs()) std::cout << std::setw(28) << k.key << std::setw(24) << k.axis << k.help << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multitask multimodal navigation agent: training and evaluation"};
  app.require_subcommand(1);

  std::string config_file, preset_name;
  std::vector<std::string> sets;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_file, "JSON config file");
    sub->add_option("-p,--preset", preset_name, "desk | smoke | paper | tiny (overrides the file's preset)");
    sub->add_option("-s,--set", sets, "key=value override, repeatable");
  };

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model; writes checkpoints, curve, manifest");
  add_config(train_cmd);
  std::string out_dir = "runs/latest";
  bool quiet = false;
  train_cmd->add_option("-o,--out", out_dir, "run directory");
  train_cmd->add_flag("-q,--quiet", quiet, "no progress on stderr");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
  add_config(eval_cmd);
  std::string run_dir, checkpoint, split_arg = "val_unseen", tasks_arg, policy_arg = "model", eval_out;
  int episodes = 0;
  eval_cmd->add_option("-r,--run", run_dir, "run directory (uses its config.json and best checkpoint)");
  eval_cmd->add_option("-k,--checkpoint", checkpoint, "checkpoint file");
  eval_cmd->add_option("--split", split_arg, "train | val_seen | val_unseen | both");
  eval_cmd->add_option("--tasks", tasks_arg, "comma-separated task codes (default: the model's tasks)");
  eval_cmd->add_option("--policy", policy_arg, "model | random | oracle");
  eval_cmd->add_option("--episodes", episodes, "episodes per task (default from config)");
  eval_cmd->add_option("-o,--out", eval_out, "write <out>.csv and <out>.json");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "train and evaluate every variant of one ablation axis");
  add_config(ablate_cmd);
  std::string axis, ablate_out = "runs/ablate";
  bool dry_run = false;
  ablate_cmd->add_option("-a,--axis", axis, "modality | heads | shared-depth | reward | tasks")->required();
  ablate_cmd->add_option("-o,--out", ablate_out, "output directory");
  ablate_cmd->add_flag("--dry-run", dry_run, "write variant configs and manifests only");

  // replay
  auto* replay_cmd = app.add_subcommand("replay", "per-epoch trajectory and target-parser attention dump");
  add_config(replay_cmd);
  std::string task_arg = "OGN", actions_arg, replay_out;
  int index = 0;
  replay_cmd->add_option("-r,--run", run_dir, "run directory");
  replay_cmd->add_option("-k,--checkpoint", checkpoint, "checkpoint file (default: fresh weights)");
  replay_cmd->add_option("--split", split_arg, "split of the evaluation episode");
  replay_cmd->add_option("--task", task_arg, "task code");
  replay_cmd->add_option("--index", index, "evaluation episode index");
  replay_cmd->add_option("--actions", actions_arg, "comma-separated actions to replay instead of greedy decoding");
  replay_cmd->add_option("-o,--out", replay_out, "JSON-lines file (default stdout)");

  // worldgen-preview
  auto* world_cmd = app.add_subcommand("worldgen-preview", "ASCII occupancy map of a suite world");
  add_config(world_cmd);
  int world_id = 0;
  world_cmd->add_option("--world", world_id, "world id");

  app.add_subcommand("knobs", "list every config key with its axis");

  CLI11_PARSE(app, argc, argv);

  try {
    auto resolve = [&]() -> ExperimentConfig {
      if (!run_dir.empty() && config_file.empty()) config_file = (fs::path(run_dir) / "config.json").string();
      return load_config(config_file, preset_name, sets);
    };

    if (app.got_subcommand("knobs")) return cmd_knobs();

    if (app.got_subcommand(train_cmd)) {
      const ExperimentConfig cfg = resolve();
      const TrainResult r = run_training(cfg, out_dir, quiet);
      std::cout << "run " << out_dir << " hash " << config_hash(cfg) << " steps " << r.steps << " best_unseen_sr "
                << r.best_unseen_sr << '\n';
      return 0;
    }

    if (app.got_subcommand(eval_cmd)) {
      ExperimentConfig cfg = resolve();
      if (episodes > 0) cfg.train.eval.episodes_per_task = episodes;
      const TaskSuite suite(cfg.train.suite);
      const auto tasks = parse_tasks(tasks_arg, cfg.train.model);
      std::vector<Split> splits;
      if (split_arg == "both")
        splits = {Split::ValSeen, Split::ValUnseen};
      else
        splits = {parse_split(split_arg)};
      std::optional<ModelParams> params;
      if (policy_arg == "model") {
        if (checkpoint.empty() && !run_dir.empty()) checkpoint = (fs::path(run_dir) / "checkpoints" / "best.ckpt").string();
        params = checkpoint.empty() ? make_model(cfg.train.model, derive_seed(cfg.train.seed, 1))
                                    : load_params(cfg, checkpoint);
      } else if (policy_arg != "random" && policy_arg != "oracle") {
        throw ConfigError("--policy: expected model, random or oracle");
      }
      std::vector<EvalRecord> records;
      for (Split s : splits) {
        std::vector<EvalRecord> r;
        if (params)
          r = evaluate(*params, suite, s, tasks, cfg.train.eval);
        else if (policy_arg == "random")
          r = evaluate_with(random_policy(derive_seed(cfg.train.seed, 2)), suite, s, tasks, cfg.train.eval);
        else
          r = evaluate_with(oracle_policy(), suite, s, tasks, cfg.train.eval);
        records.insert(records.end(), r.begin(), r.end());
      }
      const auto rows = aggregate(records);
      const std::string csv = metrics_csv(rows);
      std::cout << csv;
      if (!eval_out.empty()) {
        std::ofstream(eval_out + ".csv") << csv;
        write_json(eval_out + ".json", {{"config_hash", config_hash(cfg)}, {"checkpoint", checkpoint},
                                        {"policy", policy_arg}, {"metrics", metrics_json(rows)}});
      }
      return 0;
    }

    if (app.got_subcommand(ablate_cmd)) {
      const ExperimentConfig base = resolve();
      const auto grid = ablation_grid(base, axis);
      fs::create_directories(ablate_out);
      std::ofstream csv(fs::path(ablate_out) / "comparison.csv");
      csv << "variant,run,config_hash,task,split,sr,ne,or,spl,episodes\n";
      json index_doc = {{"axis", axis}, {"base_hash", config_hash(base)}, {"variants", json::array()}};
      for (const AblationVariant& v : grid) {
        json entry = {{"name", v.name}, {"runs", json::array()}};
        for (std::size_t i = 0; i < v.runs.size(); ++i) {
          const ExperimentConfig& cfg = v.runs[i];
          std::string safe = v.name;
          for (char& ch : safe)
            if (ch == '+' || ch == '=') ch = '_';
          const fs::path dir = fs::path(ablate_out) / (v.runs.size() > 1 ? safe + "_" + std::to_string(i) : safe);
          entry["runs"].push_back({{"dir", dir.string()}, {"config_hash", config_hash(cfg)}});
          // the patch against the base config is what a reviewer diffs
          const json extra = {{"ablation",
                               {{"axis", axis},
                                {"variant", v.name},
                                {"run", i},
                                {"overrides", json::diff(to_json(base), to_json(cfg))}}}};
          if (dry_run) {
            fs::create_directories(dir);
            write_json(dir / "config.json", to_json(cfg));
            write_json(dir / "manifest.json", manifest(cfg, dir, now_iso(), extra));
            continue;
          }
          const TrainResult r = run_training(cfg, dir, quiet, extra);
          std::vector<MetricRow> rows;
          for (const CurvePoint& c : r.curve)
            if (c.steps == r.best_steps) rows.push_back(c.row);
          for (const MetricRow& m : rows)
            csv << v.name << ',' << i << ',' << config_hash(cfg) << ',' << task_code(m.task) << ',' << split_name(m.split)
                << ',' << m.sr << ',' << m.ne << ',' << m.oracle_rate << ',' << m.spl << ',' << m.episodes << '\n';
        }
        index_doc["variants"].push_back(entry);
      }
      write_json(fs::path(ablate_out) / "ablation.json", index_doc);
      std::cout << "axis " << axis << ": " << grid.size() << " variants in " << ablate_out << '\n';
      return 0;
    }

    if (app.got_subcommand(replay_cmd)) {
      const ExperimentConfig cfg = resolve();
      const TaskSuite suite(cfg.train.suite);
      if (checkpoint.empty() && !run_dir.empty()) checkpoint = (fs::path(run_dir) / "checkpoints" / "best.ckpt").string();
      ModelParams params = checkpoint.empty() ? make_model(cfg.train.model, derive_seed(cfg.train.seed, 1))
                                              : load_params(cfg, checkpoint);
      const EpisodeContext ctx =
          suite.context(eval_episode(suite, parse_split(split_arg), parse_task(task_arg), index, cfg.train.eval.seed));
      std::vector<int> forced;
      if (!actions_arg.empty()) {
        std::stringstream ss(actions_arg);
        std::string a;
        while (std::getline(ss, a, ',')) forced.push_back(std::stoi(a));
      }
      const auto steps = replay_episode(params, ctx, cfg.train.reward, forced);
      std::ofstream file;
      if (!replay_out.empty()) file.open(replay_out);
      std::ostream& out = replay_out.empty() ? std::cout : file;
      for (const ReplayStep& s : steps) out << replay_json(s).dump() << '\n';
      return 0;
    }

    if (app.got_subcommand(world_cmd)) {
      const ExperimentConfig cfg = resolve();
      const TaskSuite suite(cfg.train.suite);
      if (world_id < 0 || world_id >= suite.world_count()) throw ConfigError("--world: out of range");
      std::cout << ascii_map(suite.world(world_id));
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "numeric divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
