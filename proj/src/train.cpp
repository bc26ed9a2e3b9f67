#include "vienna/trainer.hpp"
#include "vienna/transport.hpp"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

namespace vienna {

const char* transport_name(Transport t) { return t == Transport::Socket ? "socket" : "inproc"; }

Transport parse_transport(const std::string& s) {
  if (s == "inproc") return Transport::InProcess;
  if (s == "socket") return Transport::Socket;
  throw ContractError("unknown transport '" + s + "' (expected inproc or socket)");
}

Transport transport_from_env() {
  const char* v = std::getenv("VIENNA_TRANSPORT");
  return v && *v ? parse_transport(v) : Transport::InProcess;
}

void TrainConfig::validate() const {
  suite.validate();
  model.validate();
  reward.validate();
  ppo.validate();
  if (total_steps < 0) throw ContractError("train config: total_steps must be non-negative");
  if (eval_every < 1) throw ContractError("train config: eval_every must be >= 1");
  if (eval.episodes_per_task < 1) throw ContractError("train config: eval episodes must be >= 1");
  if (!(round_timeout_s > 0.0)) throw ContractError("train config: round timeout must be positive");
  if (suite.max_epochs > model.max_epochs)
    throw ContractError("train config: suite max_epochs exceeds the model's epoch capacity");
  if (suite.world.feat_v != model.feat_v || suite.world.feat_d != model.feat_d || suite.world.feat_a != model.feat_a)
    throw ContractError("train config: simulator and model feature widths differ");
  if (suite.world.categories != model.categories)
    throw ContractError("train config: simulator and model category counts differ");
  if (suite.max_instruction > model.n_lang)
    throw ContractError("train config: instructions may be longer than the language block");
}

std::string curve_csv(std::span<const CurvePoint> curve) {
  std::ostringstream os;
  os << "steps,round,task,split,sr,ne,or,spl,episodes\n";
  os.precision(10);
  for (const CurvePoint& c : curve)
    os << c.steps << ',' << c.round << ',' << task_code(c.row.task) << ',' << split_name(c.row.split) << ','
       << c.row.sr << ',' << c.row.ne << ',' << c.row.oracle_rate << ',' << c.row.spl << ',' << c.row.episodes << '\n';
  return os.str();
}

namespace {

constexpr std::uint64_t kStopRound = ~std::uint64_t{0};

// Failure frames carry a client's exception back to the server.
Bytes encode_failure(int client, bool divergence, const std::string& what) {
  ByteWriter w;
  w.raw("VNMS", 4);
  w.u8(static_cast<std::uint8_t>(MessageKind::Failure));
  w.u32(static_cast<std::uint32_t>(client));
  w.u8(divergence);
  w.str(what);
  return w.take();
}

[[noreturn]] void raise_failure(std::span<const std::uint8_t> frame) {
  ByteReader r(frame.subspan(5));
  const int client = static_cast<int>(r.u32());
  const bool divergence = r.u8() != 0;
  const std::string what = "client " + std::to_string(client) + ": " + r.str();
  if (divergence) throw DivergenceError(what);
  throw std::runtime_error(what);
}

void client_loop(Client& client, Channel& ch, int epochs, std::chrono::milliseconds timeout) {
  try {
    while (true) {
      const Bytes frame = ch.receive(timeout);
      const WeightSync sync = decode_sync(frame);
      if (sync.round == kStopRound) return;
      client.apply(sync);
      if (sync.round % static_cast<std::uint64_t>(epochs) == 0) client.collect();
      ch.send(encode_message(client.gradient(sync.round)));
    }
  } catch (const DivergenceError& e) {
    ch.send(encode_failure(client.id(), true, e.what()));
  } catch (const TimeoutError&) {
    // server went away
  } catch (const std::exception& e) {
    try {
      ch.send(encode_failure(client.id(), false, e.what()));
    } catch (...) {
    }
  }
}

class Workers {
 public:
  Workers(std::vector<std::unique_ptr<Client>>& clients, Transport transport, int epochs, std::chrono::milliseconds timeout)
      : timeout_(timeout) {
    for (std::size_t k = 0; k < clients.size(); ++k) {
      ChannelPair pair = transport == Transport::Socket ? make_socket_pair() : make_inprocess_pair();
      server_ends_.push_back(std::move(pair.a));
      client_ends_.push_back(std::move(pair.b));
    }
    for (std::size_t k = 0; k < clients.size(); ++k)
      threads_.emplace_back(client_loop, std::ref(*clients[k]), std::ref(*client_ends_[k]), epochs, timeout * 4);
  }
  ~Workers() {
    const Bytes stop = encode_message(WeightSync{kStopRound, {}, weights_digest({})});
    for (auto& ch : server_ends_) {
      try {
        ch->send(stop);
      } catch (...) {
      }
    }
    for (auto& t : threads_) t.join();
  }

  void round(Server& server) {
    const std::uint64_t r = server.round();
    const Bytes frame = encode_message(server.sync());
    for (auto& ch : server_ends_) ch->send(frame);
    for (std::size_t k = 0; k < server_ends_.size(); ++k) {
      Bytes reply;
      try {
        reply = server_ends_[k]->receive(timeout_);
      } catch (const TimeoutError&) {
        std::string heard;
        for (int c : server.reported()) heard += " " + std::to_string(c);
        throw TimeoutError("round " + std::to_string(r) + ": client " + std::to_string(k) +
                           " did not report in time (reported:" + heard + ")");
      }
      if (peek_kind(reply) == MessageKind::Failure) raise_failure(reply);
      server.receive(decode_gradient(reply));
    }
    if (server.round() != r + 1) throw std::runtime_error("server did not complete round " + std::to_string(r));
  }

 private:
  std::chrono::milliseconds timeout_;
  std::vector<std::unique_ptr<Channel>> server_ends_, client_ends_;
  std::vector<std::thread> threads_;
};

}  // namespace

TrainResult train(const TrainConfig& config, const std::filesystem::path& out_dir, const TrainHooks& hooks) {
  config.validate();
  auto log = [&](const std::string& s) {
    if (hooks.log) hooks.log(s);
  };
  const TaskSuite suite(config.suite);
  Server server(make_model(config.model, derive_seed(config.seed, 1)), config.ppo);
  std::vector<std::unique_ptr<Client>> clients;
  for (int k = 0; k < config.ppo.clients; ++k)
    clients.push_back(std::make_unique<Client>(k, suite, config.model, config.reward, config.ppo,
                                               derive_seed(config.seed, 100 + static_cast<std::uint64_t>(k))));

  const std::int64_t per_batch = static_cast<std::int64_t>(config.ppo.clients) *
                                 static_cast<std::int64_t>(config.model.tasks.size()) * config.ppo.steps_per_task;
  const std::int64_t batches = (config.total_steps + per_batch - 1) / per_batch;

  const std::filesystem::path ckpt = out_dir.empty() ? std::filesystem::path{} : out_dir / "checkpoints";
  if (!out_dir.empty()) {
    std::filesystem::create_directories(ckpt);
    save_checkpoint(ckpt / "initial.ckpt", server.params().named());
  }

  TrainResult result;
  result.best = server.params();
  auto evaluate_now = [&] {
    std::vector<EvalRecord> records = evaluate(server.params(), suite, Split::ValSeen, config.model.tasks, config.eval);
    const auto unseen = evaluate(server.params(), suite, Split::ValUnseen, config.model.tasks, config.eval);
    records.insert(records.end(), unseen.begin(), unseen.end());
    double unseen_sr = 0.0;
    int n = 0;
    for (const MetricRow& row : aggregate(records)) {
      result.curve.push_back(CurvePoint{result.steps, server.round(), row});
      if (row.split == Split::ValUnseen) {
        unseen_sr += row.sr;
        ++n;
      }
    }
    unseen_sr /= n;
    std::ostringstream os;
    os << "eval steps=" << result.steps << " round=" << server.round() << " unseen_sr=" << unseen_sr;
    log(os.str());
    if (unseen_sr > result.best_unseen_sr) {
      result.best_unseen_sr = unseen_sr;
      result.best_steps = result.steps;
      result.best = server.params();
      if (!out_dir.empty()) save_checkpoint(ckpt / "best.ckpt", server.params().named());
    }
    if (!out_dir.empty()) std::ofstream(out_dir / "curve.csv") << curve_csv(result.curve);
  };

  std::optional<Workers> workers;
  if (!config.sequential)
    workers.emplace(clients, config.transport, config.ppo.epochs,
                    std::chrono::milliseconds(static_cast<std::int64_t>(config.round_timeout_s * 1000.0)));

  try {
    evaluate_now();
    for (std::int64_t b = 0; b < batches; ++b) {
      for (int e = 0; e < config.ppo.epochs; ++e) {
        if (workers) {
          workers->round(server);
        } else {
          const WeightSync sync = server.sync();
          for (auto& c : clients) {
            c->apply(sync);
            if (e == 0) c->collect();
            server.receive(c->gradient(sync.round));
          }
        }
        if (hooks.on_round) hooks.on_round(server.round(), server.params());
      }
      result.steps += per_batch;
      if (!out_dir.empty()) save_checkpoint(ckpt / "latest.ckpt", server.params().named());

      std::int64_t episodes = 0, successes = 0;
      double loss = 0.0;
      for (auto& c : clients) {
        for (int t = 0; t < kNumTasks; ++t) {
          episodes += c->stats().episodes[t];
          successes += c->stats().successes[t];
        }
        loss += c->last_loss().total;
      }
      std::ostringstream os;
      os << "batch " << b + 1 << "/" << batches << " steps=" << result.steps << " round=" << server.round()
         << " loss=" << loss / static_cast<double>(clients.size()) << " train_episodes=" << episodes
         << " train_successes=" << successes;
      log(os.str());
      if ((b + 1) % config.eval_every == 0 || b + 1 == batches) evaluate_now();
    }
  } catch (const DivergenceError&) {
    // the failing update was never applied, so the server still holds good weights
    if (!out_dir.empty()) save_checkpoint(ckpt / "last_good.ckpt", server.params().named());
    throw;
  }
  workers.reset();
  result.rounds = server.round();
  result.final_params = server.params();
  return result;
}

}  // namespace vienna
