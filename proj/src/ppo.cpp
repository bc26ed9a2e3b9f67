#include "vienna/trainer.hpp"

#include <cmath>
#include <cstring>

namespace vienna {

void PPOConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ContractError("ppo config: " + msg);
  };
  need(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
  need(lambda > 0.0 && lambda < 1.0, "lambda must lie in (0, 1)");
  need(clip > 0.0, "clip must be positive");
  need(epochs >= 1, "epochs must be >= 1");
  need(steps_per_task >= 1, "steps_per_task must be >= 1");
  need(clients >= 1, "clients must be >= 1");
  need(value_coef >= 0.0 && entropy_coef >= 0.0, "loss coefficients must be non-negative");
  need(max_grad_norm >= 0.0, "max_grad_norm must be non-negative");
  need(optimizer.learning_rate > 0.0, "learning rate must be positive");
}

int Rollout::steps() const {
  int n = 0;
  for (const Segment& s : segments) n += static_cast<int>(s.steps.size());
  return n;
}

Advantages gae_advantages(std::span<const StepRecord> steps, double bootstrap, double gamma, double lambda) {
  const std::size_t n = steps.size();
  Advantages out{std::vector<double>(n), std::vector<double>(n)};
  double next_value = bootstrap;
  double next_adv = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const StepRecord& s = steps[i];
    const double live = s.done ? 0.0 : 1.0;
    const double delta = s.reward + gamma * next_value * live - s.value;
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[i] = next_adv;
    out.returns[i] = next_adv + s.value;
    next_value = s.value;
  }
  return out;
}

void normalize(std::vector<double>& xs) {
  if (xs.empty()) return;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  const double sd = xs.size() > 1 ? std::sqrt(var) + 1e-8 : 1.0;
  for (double& x : xs) x = (x - mean) / sd;
}

PPOLoss ppo_loss(Tape& tape, Var logits, Var values, const PPOBatch& batch, const PPOConfig& config) {
  const Eigen::Index n = logits.rows();
  if (n == 0 || values.rows() != n || static_cast<Eigen::Index>(batch.actions.size()) != n ||
      static_cast<Eigen::Index>(batch.old_log_probs.size()) != n || static_cast<Eigen::Index>(batch.advantages.size()) != n ||
      static_cast<Eigen::Index>(batch.returns.size()) != n)
    throw DimensionError("ppo_loss: batch fields must have one entry per row");
  auto column = [&](const std::vector<double>& xs) {
    return tape.constant(Eigen::Map<const Matrix>(xs.data(), n, 1));
  };
  const Var logp_all = log_softmax_rows(logits);
  const Var logp = pick(logp_all, batch.actions);
  const Var ratio = exp(sub(logp, column(batch.old_log_probs)));
  if (!ratio.value().allFinite()) throw DivergenceError("ppo_loss: non-finite probability ratio");
  const Var adv = column(batch.advantages);
  const Var surr = minimum(mul(ratio, adv), mul(clamp(ratio, 1.0 - config.clip, 1.0 + config.clip), adv));
  const Var value_err = square(sub(values, column(batch.returns)));
  const Var ones = tape.constant(Matrix::Ones(logits.cols(), 1));
  const Var entropy = neg(matmul(mul(exp(logp_all), logp_all), ones));

  PPOLoss out;
  const Var surr_mean = mean_all(surr), value_mean = mean_all(value_err), entropy_mean = mean_all(entropy);
  out.loss = add(sub(scale(value_mean, config.value_coef), surr_mean), scale(entropy_mean, -config.entropy_coef));
  out.total = out.loss.scalar();
  out.surrogate = surr_mean.scalar();
  out.value_loss = value_mean.scalar();
  out.entropy = entropy_mean.scalar();
  int clipped = 0;
  for (Eigen::Index i = 0; i < n; ++i) clipped += std::abs(ratio.value()(i, 0) - 1.0) > config.clip;
  out.clip_fraction = static_cast<double>(clipped) / static_cast<double>(n);
  if (!std::isfinite(out.total)) throw DivergenceError("ppo_loss: non-finite loss");
  return out;
}

// ---- messages -----------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'V', 'N', 'M', 'S'};

void write_header(ByteWriter& w, MessageKind kind, std::uint64_t round, int client) {
  w.raw(kMagic, 4);
  w.u8(static_cast<std::uint8_t>(kind));
  w.u64(round);
  w.u32(static_cast<std::uint32_t>(client));
}

Bytes seal(ByteWriter& w) {
  const std::uint64_t digest = fnv1a(w.bytes());
  w.u64(digest);
  return w.take();
}

void write_entries(ByteWriter& w, const std::vector<std::pair<std::string, Matrix>>& entries) {
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& [path, m] : entries) {
    w.str(path);
    w.matrix(m);
  }
}

std::vector<std::pair<std::string, Matrix>> read_entries(ByteReader& r) {
  const std::uint32_t n = r.u32();
  std::vector<std::pair<std::string, Matrix>> out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string path = r.str();
    out.emplace_back(std::move(path), r.matrix());
  }
  return out;
}

// Verifies the trailing digest and magic; returns a reader positioned after the kind byte.
ByteReader open_frame(std::span<const std::uint8_t> frame, MessageKind expect) {
  if (frame.size() < 4 + 1 + 8 + 4 + 8) throw FormatError("message: frame too short");
  const auto body = frame.first(frame.size() - 8);
  ByteReader tail(frame.last(8));
  if (tail.u64() != fnv1a(body)) throw FormatError("message: digest mismatch");
  if (std::memcmp(body.data(), kMagic, 4) != 0) throw FormatError("message: bad magic");
  if (body[4] != static_cast<std::uint8_t>(expect)) throw FormatError("message: unexpected kind");
  return ByteReader(body.subspan(5));
}

}  // namespace

std::uint64_t weights_digest(const ParamSnapshot& weights) { return fnv1a(encode_checkpoint(weights)); }

WeightSync make_sync(std::uint64_t round, const ParamSnapshot& weights) {
  return WeightSync{round, weights, weights_digest(weights)};
}

Bytes encode_message(const GradientMessage& m) {
  ByteWriter w;
  write_header(w, MessageKind::Gradient, m.round, m.client);
  write_entries(w, m.gradients);
  for (std::int64_t s : m.task_steps) w.u64(static_cast<std::uint64_t>(s));
  return seal(w);
}

Bytes encode_message(const WeightSync& m) {
  ByteWriter w;
  write_header(w, MessageKind::Sync, m.round, 0);
  write_entries(w, m.weights);
  w.u64(m.digest);
  return seal(w);
}

MessageKind peek_kind(std::span<const std::uint8_t> frame) {
  if (frame.size() < 5 || std::memcmp(frame.data(), kMagic, 4) != 0) throw FormatError("message: bad magic");
  const std::uint8_t k = frame[4];
  if (k < 1 || k > 3) throw FormatError("message: unknown kind");
  return static_cast<MessageKind>(k);
}

GradientMessage decode_gradient(std::span<const std::uint8_t> frame) {
  ByteReader r = open_frame(frame, MessageKind::Gradient);
  GradientMessage m;
  m.round = r.u64();
  m.client = static_cast<int>(r.u32());
  m.gradients = read_entries(r);
  for (std::int64_t& s : m.task_steps) s = static_cast<std::int64_t>(r.u64());
  if (!r.done()) throw FormatError("message: trailing bytes");
  return m;
}

WeightSync decode_sync(std::span<const std::uint8_t> frame) {
  ByteReader r = open_frame(frame, MessageKind::Sync);
  WeightSync m;
  m.round = r.u64();
  r.u32();
  m.weights = read_entries(r);
  m.digest = r.u64();
  if (!r.done()) throw FormatError("message: trailing bytes");
  if (weights_digest(m.weights) != m.digest) throw FormatError("weight sync: payload digest does not match header");
  return m;
}

// ---- server -------------------------------------------------------------------------

Server::Server(ModelParams params, const PPOConfig& config) : params_(std::move(params)), config_(config) {
  config_.validate();
  optimizer_.config = config_.optimizer;
}

WeightSync Server::sync() const {
  return make_sync(round_, snapshot(const_cast<ModelParams&>(params_).named()));
}

std::vector<int> Server::reported() const {
  std::vector<int> out;
  const auto it = pending_.find(round_);
  if (it != pending_.end())
    for (const auto& [client, msg] : it->second) out.push_back(client);
  return out;
}

std::optional<WeightSync> Server::receive(GradientMessage message) {
  if (message.client < 0 || message.client >= config_.clients)
    throw ContractError("server: unknown client id " + std::to_string(message.client));
  if (message.round < round_) {
    ++dropped_;
    return std::nullopt;
  }
  auto& slot = pending_[message.round];
  if (slot.count(message.client)) {
    ++dropped_;
    return std::nullopt;
  }
  const std::vector<NamedParam> named = params_.named();
  if (message.gradients.size() != named.size()) throw ContractError("server: gradient manifest size mismatch");
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& [path, g] = message.gradients[i];
    if (path != named[i].path || g.rows() != named[i].param->value.rows() || g.cols() != named[i].param->value.cols())
      throw ContractError("server: gradient for '" + path + "' does not match the manifest");
  }
  slot.emplace(message.client, std::move(message));
  bool updated = false;
  while (true) {
    const auto it = pending_.find(round_);
    if (it == pending_.end() || static_cast<int>(it->second.size()) < config_.clients) break;
    aggregate();
    updated = true;
  }
  if (!updated) return std::nullopt;
  return sync();
}

void Server::aggregate() {
  auto& messages = pending_.at(round_);
  const std::vector<NamedParam> named = params_.named();
  double sq = 0.0;
  for (std::size_t i = 0; i < named.size(); ++i) {
    Matrix sum = Matrix::Zero(named[i].param->value.rows(), named[i].param->value.cols());
    for (const auto& [client, msg] : messages) sum += msg.gradients[i].second;  // ascending client id
    named[i].param->grad = sum / static_cast<double>(config_.clients);
    sq += named[i].param->grad.squaredNorm();
  }
  if (!std::isfinite(sq)) throw DivergenceError("server: non-finite averaged gradient");
  if (config_.max_grad_norm > 0.0 && std::sqrt(sq) > config_.max_grad_norm) {
    const double s = config_.max_grad_norm / std::sqrt(sq);
    for (const NamedParam& np : named) np.param->grad *= s;
  }
  optimizer_step(named, optimizer_);
  pending_.erase(round_);
  ++round_;
}

}  // namespace vienna
