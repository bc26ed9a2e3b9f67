#include "vienna/model.hpp"

#include <algorithm>
#include <cmath>

namespace vienna {

int ModelConfig::n_goal() const { return std::max({n_image, n_audio(), 1, n_lang}); }

bool ModelConfig::has_task(TaskKind t) const { return std::find(tasks.begin(), tasks.end(), t) != tasks.end(); }

void ModelConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ContractError("model config: " + msg);
  };
  need(d >= 2 && d % 2 == 0, "d must be an even number >= 2");
  need(heads >= 1 && d % heads == 0, "d must be divisible by heads");
  need(goal_queries >= 1, "goal_queries must be >= 1");
  need(n_image >= 1 && n_lang >= 1, "n_image and n_lang must be >= 1");
  need(planner_depth >= 0 && shared_depth >= 0 && shared_depth <= planner_depth, "shared_depth must lie in [0, planner_depth]");
  need(msi_blocks >= 0 && history_blocks >= 0, "block counts must be >= 0");
  need(feat_v >= 1 && feat_d >= 1 && feat_a >= 1, "feature widths must be positive");
  need(categories >= 1 && categories <= vocab::kMaxCategories, "categories out of range");
  need(max_epochs >= 1, "max_epochs must be >= 1");
  need(!tasks.empty(), "task subset must be nonempty");
  for (std::size_t i = 0; i < tasks.size(); ++i)
    for (std::size_t j = i + 1; j < tasks.size(); ++j) need(tasks[i] != tasks[j], "duplicate task in subset");
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.d = 512;
  c.heads = 8;
  c.n_image = 16;
  c.n_lang = 120;
  return c;
}

namespace {

Encoder make_encoder(int in, int d, Rng& rng) { return Encoder{make_linear(in, d, rng), make_linear(d, d, rng)}; }

Lstm make_lstm(int in, int hidden, Rng& rng) {
  Lstm l;
  l.wx = Parameter(randn(in, 4 * hidden, 1.0 / std::sqrt(static_cast<double>(in)), rng));
  l.wh = Parameter(randn(hidden, 4 * hidden, 1.0 / std::sqrt(static_cast<double>(hidden)), rng));
  Matrix b = Matrix::Zero(1, 4 * hidden);
  b.block(0, hidden, 1, hidden).setOnes();  // forget-gate bias
  l.b = Parameter(b);
  return l;
}

void collect_encoder(std::vector<NamedParam>& out, const std::string& prefix, Encoder& e) {
  collect(out, prefix + ".l1", e.l1);
  collect(out, prefix + ".l2", e.l2);
}

void collect_lstm(std::vector<NamedParam>& out, const std::string& prefix, Lstm& l) {
  out.push_back({prefix + ".wx", &l.wx});
  out.push_back({prefix + ".wh", &l.wh});
  out.push_back({prefix + ".b", &l.b});
}

const char* const kTaskEmbedNames[kNumTasks] = {"image", "audio", "tag", "language"};

}  // namespace

ModelParams make_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const int d = config.d;
  ModelParams p;
  p.config = config;
  p.f_img = make_encoder(config.feat_v, d, rng);
  p.f_dep = make_encoder(config.feat_d, d, rng);
  p.f_aud = make_encoder(2 * config.feat_a, d, rng);
  p.fuse_v = make_attention(d, 1, rng);
  p.fuse_d = make_attention(d, 1, rng);
  p.fuse_a = make_attention(d, 1, rng);
  for (int i = 0; i < config.msi_blocks; ++i) p.msi.push_back(make_block(d, config.heads, rng));
  p.action_table = Parameter(randn(kNumActions, d, 1.0, rng));
  p.start_action = Parameter(randn(1, d, 1.0, rng));
  p.w_e = Parameter(randn(4 * d, d, 1.0 / std::sqrt(4.0 * d), rng));
  for (int i = 0; i < config.history_blocks; ++i) p.history.push_back(make_block(d, config.heads, rng));

  for (auto& tau : p.task_embed) tau = Parameter(randn(1, d, 1.0, rng));
  p.class_table = Parameter(randn(config.categories, d, 1.0, rng));
  p.word_table = Parameter(randn(vocab::kSize, d, 1.0, rng));
  p.lstm_fwd = make_lstm(d, d / 2, rng);
  p.lstm_bwd = make_lstm(d, d / 2, rng);
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  for (int h = 0; h < config.goal_queries; ++h)
    p.goal_heads.push_back(GoalHead{Parameter(randn(d, d, s, rng)), Parameter(randn(d, d, s, rng)), Parameter(randn(d, d, s, rng))});

  for (int i = 0; i < config.shared_depth; ++i) p.planner_shared.push_back(make_block(d, config.heads, rng));
  for (TaskKind t : kAllTasks) {
    if (!config.has_task(t)) continue;
    auto& blocks = p.planner_private[static_cast<std::size_t>(t)];
    for (int i = config.shared_depth; i < config.planner_depth; ++i) blocks.push_back(make_block(d, config.heads, rng));
    Linear v = make_linear(d, 1, rng);
    v.weight.value *= 0.1;
    p.value_head[static_cast<std::size_t>(t)] = std::move(v);
  }
  // Small bilinear head so the initial policy is close to uniform.
  p.w_p = Parameter(randn(d, d, 0.01 * s, rng));
  return p;
}

std::vector<NamedParam> ModelParams::named() {
  std::vector<NamedParam> out;
  collect_encoder(out, "perception.f_img", f_img);
  collect_encoder(out, "perception.f_dep", f_dep);
  collect_encoder(out, "perception.f_aud", f_aud);
  collect(out, "perception.fuse_v", fuse_v);
  collect(out, "perception.fuse_d", fuse_d);
  collect(out, "perception.fuse_a", fuse_a);
  for (std::size_t i = 0; i < msi.size(); ++i) collect(out, "perception.msi." + std::to_string(i), msi[i]);
  out.push_back({"perception.action_table", &action_table});
  out.push_back({"perception.start_action", &start_action});
  out.push_back({"perception.w_e", &w_e});
  for (std::size_t i = 0; i < history.size(); ++i) collect(out, "perception.history." + std::to_string(i), history[i]);
  for (int k = 0; k < kNumTasks; ++k) out.push_back({std::string("target.task_embed.") + kTaskEmbedNames[k], &task_embed[static_cast<std::size_t>(k)]});
  out.push_back({"target.class_table", &class_table});
  out.push_back({"target.word_table", &word_table});
  collect_lstm(out, "target.lstm_fwd", lstm_fwd);
  collect_lstm(out, "target.lstm_bwd", lstm_bwd);
  for (std::size_t h = 0; h < goal_heads.size(); ++h) {
    const std::string prefix = "target.goal_head." + std::to_string(h);
    out.push_back({prefix + ".wq", &goal_heads[h].wq});
    out.push_back({prefix + ".wk", &goal_heads[h].wk});
    out.push_back({prefix + ".wv", &goal_heads[h].wv});
  }
  for (std::size_t i = 0; i < planner_shared.size(); ++i) collect(out, "planner.shared." + std::to_string(i), planner_shared[i]);
  for (TaskKind t : kAllTasks) {
    const auto k = static_cast<std::size_t>(t);
    auto& blocks = planner_private[k];
    for (std::size_t i = 0; i < blocks.size(); ++i)
      collect(out, std::string("planner.private.") + task_name(t) + "." + std::to_string(i), blocks[i]);
    if (value_head[k]) collect(out, std::string("planner.value.") + task_name(t), *value_head[k]);
  }
  out.push_back({"planner.w_p", &w_p});
  return out;
}

std::int64_t ModelParams::parameter_count() {
  std::int64_t n = 0;
  for (const auto& np : named()) n += np.param->size();
  return n;
}

void ModelParams::zero_grad() {
  for (auto& np : named()) np.param->zero_grad();
}

}  // namespace vienna
