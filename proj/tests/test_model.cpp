#include "gradcheck.hpp"
#include "oracles.hpp"
#include "vienna/model.hpp"

#include <doctest.h>

#include <cmath>


using namespace vienna;
using namespace vienna::testing;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.d = 8;
  c.heads = 2;
  c.goal_queries = 3;
  c.n_image = 2;
  c.n_lang = 6;
  c.feat_v = 5;
  c.feat_d = 4;
  c.feat_a = 3;
  c.categories = 4;
  c.max_epochs = 50;
  return c;
}

Panorama random_panorama(const ModelConfig& c, Rng& rng) {
  return Panorama{randn(kSubViews, c.feat_v, 1.0, rng), randn(kSubViews, c.feat_d, 1.0, rng).cwiseAbs(),
                  randn(kSubViews, 2 * c.feat_a, 0.2, rng).cwiseAbs()};
}

TargetInput sample_target(TaskKind task, const ModelConfig& c, Rng& rng) {
  TargetInput t;
  t.task = task;
  if (task == TaskKind::ImageGoal) t.goal_rgb = randn(kSubViews, c.feat_v, 1.0, rng);
  if (task == TaskKind::ObjectGoal) t.category = 2;
  if (task == TaskKind::VisionLanguage) t.tokens = {vocab::kGo, vocab::kStraight, vocab::kStop};
  return t;
}

Matrix encoder_oracle(const Encoder& e, const Matrix& x) {
  Matrix h = (x * e.l1.weight.value).rowwise() + e.l1.bias.value.row(0);
  return (gelu_oracle(h) * e.l2.weight.value).rowwise() + e.l2.bias.value.row(0);
}

Matrix orientation_oracle(Eigen::Index rows, int d) {
  Matrix m(rows, d);
  for (Eigen::Index r = 0; r < rows; ++r) m.row(r) = orientation_embed(static_cast<double>(r % 12) * kPi / 6.0, d);
  return m;
}

double max_abs(const Matrix& a) { return a.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("encode_modalities") {
  const ModelConfig c = small_config();
  ModelParams p = make_model(c, 1);
  Rng rng(2);
  Tape tape(false);

  SUBCASE("zero input and bias leave only the orientation embedding") {
    for (Encoder* e : {&p.f_img, &p.f_dep, &p.f_aud}) {
      e->l1.bias.value.setZero();
      e->l2.bias.value.setZero();
    }
    const ModalFeatures f = encode_modalities(tape, p, tape.constant(Matrix::Zero(12, c.feat_v)),
                                              tape.constant(Matrix::Zero(12, c.feat_d)), tape.constant(Matrix::Zero(12, 2 * c.feat_a)));
    CHECK(max_abs(f.v.value() - orientation_oracle(12, c.d)) < 1e-14);
    CHECK(max_abs(f.a.value() - orientation_oracle(12, c.d)) < 1e-14);
  }
  SUBCASE("identical sub-views differ only by the orientation delta") {
    Matrix raw = randn(1, c.feat_v, 1.0, rng).replicate(12, 1);
    const ModalFeatures f = encode_modalities(tape, p, tape.constant(raw), tape.constant(Matrix::Zero(12, c.feat_d)),
                                              tape.constant(Matrix::Zero(12, 2 * c.feat_a)));
    const Matrix o = orientation_oracle(12, c.d);
    for (int k = 1; k < 12; ++k) CHECK(max_abs((f.v.value().row(k) - f.v.value().row(0)) - (o.row(k) - o.row(0))) < 1e-12);
  }
  SUBCASE("random input matches the encoder oracle; stacked epochs keep their angles") {
    const Panorama a = random_panorama(c, rng), b = random_panorama(c, rng);
    const std::array<Panorama, 2> both{a, b};
    const RawObservations raw = stack_observations(both);
    const ModalFeatures f = encode_modalities(tape, p, tape.constant(raw.rgb), tape.constant(raw.depth), tape.constant(raw.audio));
    CHECK(max_abs(f.v.value() - (encoder_oracle(p.f_img, raw.rgb) + orientation_oracle(24, c.d))) < 1e-12);
    CHECK(max_abs(f.d.value() - (encoder_oracle(p.f_dep, raw.depth) + orientation_oracle(24, c.d))) < 1e-12);
    CHECK(max_abs(f.a.value() - (encoder_oracle(p.f_aud, raw.audio) + orientation_oracle(24, c.d))) < 1e-12);
  }
  SUBCASE("masked modality is all zero") {
    p.config.modalities.depth = false;
    const Panorama a = random_panorama(c, rng);
    const RawObservations raw = stack_observations(std::span<const Panorama>(&a, 1));
    const ModalFeatures f = encode_modalities(tape, p, tape.constant(raw.rgb), tape.constant(raw.depth), tape.constant(raw.audio));
    CHECK(f.d.value().isZero(0.0));
    CHECK(!f.v.value().isZero(0.0));
  }
  SUBCASE("width mismatch") {
    CHECK_THROWS(encode_modalities(tape, p, tape.constant(Matrix::Zero(12, c.feat_v + 1)), tape.constant(Matrix::Zero(12, c.feat_d)),
                                   tape.constant(Matrix::Zero(12, 2 * c.feat_a))));
    CHECK_THROWS_AS(encode_modalities(tape, p, tape.constant(Matrix::Zero(11, c.feat_v)), tape.constant(Matrix::Zero(11, c.feat_d)),
                                      tape.constant(Matrix::Zero(11, 2 * c.feat_a))),
                    DimensionError);
  }
}

TEST_CASE("encode_modalities: fixed-seed regression") {
  const ModelConfig c = small_config();
  ModelParams p = make_model(c, 11);
  Rng rng(12);
  const Panorama a = random_panorama(c, rng);
  const RawObservations raw = stack_observations(std::span<const Panorama>(&a, 1));
  Tape tape(false);
  const ModalFeatures f = encode_modalities(tape, p, tape.constant(raw.rgb), tape.constant(raw.depth), tape.constant(raw.audio));
  // Captured from the first run of this implementation.
  CHECK(f.v.value()(0, 0) == doctest::Approx(1.1381188734698051).epsilon(1e-12));
  CHECK(f.v.value().sum() == doctest::Approx(3.1237713682554875).epsilon(1e-12));
  CHECK(f.d.value()(5, 3) == doctest::Approx(0.51677946085118598).epsilon(1e-12));
  CHECK(f.a.value().sum() == doctest::Approx(-15.759499988350154).epsilon(1e-12));
}

TEST_CASE("target_guided_fuse") {
  const ModelConfig c = small_config();
  ModelParams p = make_model(c, 3);
  Rng rng(4);
  Tape tape(false);
  const Matrix g = randn(1, c.d, 1.0, rng);
  const Matrix v = randn(12, c.d, 1.0, rng), d = randn(12, c.d, 1.0, rng), a = randn(12, c.d, 1.0, rng);
  ModalFeatures feats{tape.constant(v), tape.constant(d), tape.constant(a)};

  const FusedSenses f = target_guided_fuse(tape, p, tape.constant(g), feats);
  CHECK(max_abs(f.v.value() - attend_oracle(g, v, p.fuse_v)) < 1e-12);
  CHECK(max_abs(f.d.value() - attend_oracle(g, d, p.fuse_d)) < 1e-12);
  CHECK(max_abs(f.h.value() - attend_oracle(g, a, p.fuse_a)) < 1e-12);

  SUBCASE("identical rows give the value path") {
    const Matrix row = randn(1, c.d, 1.0, rng);
    ModalFeatures same{tape.constant(row.replicate(12, 1)), feats.d, feats.a};
    const FusedSenses s = target_guided_fuse(tape, p, tape.constant(g), same);
    CHECK(max_abs(s.v.value() - row * p.fuse_v.wv.value * p.fuse_v.wo.value) < 1e-12);
  }
  SUBCASE("uniform logits give the mean of value-projected rows") {
    const FusedSenses s = target_guided_fuse(tape, p, tape.constant(Matrix::Zero(1, c.d)), feats);
    const Matrix mean = (v * p.fuse_v.wv.value).colwise().mean() * p.fuse_v.wo.value;
    CHECK(max_abs(s.v.value() - mean) < 1e-12);
  }
  SUBCASE("stacked epochs fuse independently") {
    const Matrix g2 = randn(1, c.d, 1.0, rng);
    const Matrix v2 = randn(12, c.d, 1.0, rng);
    Matrix gg(2, c.d), vv(24, c.d), dd(24, c.d), aa(24, c.d);
    gg << g, g2;
    vv << v, v2;
    dd << d, d;
    aa << a, a;
    const FusedSenses s = target_guided_fuse(tape, p, tape.constant(gg), {tape.constant(vv), tape.constant(dd), tape.constant(aa)});
    CHECK(max_abs(s.v.value().row(0) - attend_oracle(g, v, p.fuse_v)) < 1e-12);
    CHECK(max_abs(s.v.value().row(1) - attend_oracle(g2, v2, p.fuse_v)) < 1e-12);
  }
}

TEST_CASE("msi and navigation tokens") {
  const ModelConfig c = small_config();
  ModelParams p = make_model(c, 5);
  Rng rng(6);
  for (BlockParams& b : p.msi) randomize_norms(b, rng);
  Tape tape(false);
  const Matrix v = randn(1, c.d, 1.0, rng), d = randn(1, c.d, 1.0, rng), h = randn(1, c.d, 1.0, rng);
  const Var o = msi(tape, p, {tape.constant(v), tape.constant(d), tape.constant(h)});
  REQUIRE(p.msi.size() == 2);
  Matrix x(3, c.d);
  x << v, d, h;
  const Matrix oracle = block_oracle(block_oracle(x, nullptr, p.msi[0]), nullptr, p.msi[1]);
  CHECK(max_abs(o.value() - oracle) < 1e-12);

  SUBCASE("identical inputs give identical rows") {
    const Var s = msi(tape, p, {tape.constant(v), tape.constant(v), tape.constant(v)});
    CHECK(max_abs(s.value().row(1) - s.value().row(0)) < 1e-14);
    CHECK(max_abs(s.value().row(2) - s.value().row(0)) < 1e-14);
  }
  SUBCASE("zeroed attention and MLP output weights are the identity") {
    for (BlockParams& b : p.msi) {
      b.attn.wo.value.setZero();
      b.fc2.weight.value.setZero();
      b.fc2.bias.value.setZero();
    }
    CHECK(max_abs(msi(tape, p, {tape.constant(v), tape.constant(d), tape.constant(h)}).value() - x) == 0.0);
  }
  SUBCASE("two stacked epochs match per-epoch results") {
    const Matrix v2 = randn(1, c.d, 1.0, rng);
    Matrix vv(2, c.d), dd(2, c.d), hh(2, c.d);
    vv << v, v2;
    dd << d, d;
    hh << h, h;
    const Var s = msi(tape, p, {tape.constant(vv), tape.constant(dd), tape.constant(hh)});
    const Var s2 = msi(tape, p, {tape.constant(v2), tape.constant(d), tape.constant(h)});
    CHECK(max_abs(s.value().topRows(3) - oracle) < 1e-12);
    CHECK(max_abs(s.value().bottomRows(3) - s2.value()) < 1e-12);
  }
  SUBCASE("token is the projected concatenation") {
    const int prev[2] = {-1, 7};
    const Var a = action_embeddings(tape, p, prev);
    CHECK(max_abs(a.value().row(0) - p.start_action.value) == 0.0);
    CHECK(max_abs(a.value().row(1) - p.action_table.value.row(7)) == 0.0);
    const int one[1] = {7};
    const Var e = make_token(tape, p, o, action_embeddings(tape, p, one));
    Matrix cat(1, 4 * c.d);
    cat << o.value().row(0), o.value().row(1), o.value().row(2), p.action_table.value.row(7);
    CHECK(max_abs(e.value() - cat * p.w_e.value) < 1e-12);
    p.w_e.value.setZero();
    CHECK(make_token(tape, p, o, action_embeddings(tape, p, one)).value().isZero(0.0));
    const int bad[1] = {13};
    CHECK_THROWS_AS(action_embeddings(tape, p, bad), ContractError);
  }
}

TEST_CASE("history encoder: causal, incremental agrees with full recompute") {
  const ModelConfig c = small_config();
  ModelParams p = make_model(c, 7);
  Rng rng(8);
  for (BlockParams& b : p.history) randomize_norms(b, rng);
  const Matrix tokens = randn(6, c.d, 1.0, rng);
  Tape tape(false);
  const Matrix full = encode_history(tape, p, tape.constant(tokens)).value();

  Matrix mu(6, c.d);
  for (int i = 0; i < 6; ++i) mu.row(i) = epoch_embed(i + 1, c.d);
  const BoolMatrix mask = causal_mask(6);
  Matrix x = tokens + mu;
  for (const BlockParams& b : p.history) x = block_oracle(x, nullptr, b, &mask);
  CHECK(max_abs(full - x) < 1e-11);

  HistoryCache cache;
  for (int t = 0; t < 6; ++t) {
    const RowVector row = cache.push(p, tokens.row(t));
    CHECK(max_abs(row - full.row(t)) < 1e-12);
  }
  CHECK(max_abs(cache.encoded() - full) < 1e-12);

  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    Matrix perturbed = tokens;
    const int from = trial % 5 + 1;
    perturbed.bottomRows(6 - from) += randn(6 - from, c.d, 1.0, rng);
    const Matrix out = encode_history(tape, p, tape.constant(perturbed)).value();
    worst = std::max(worst, max_abs(out.topRows(from) - full.topRows(from)));
  }
  CHECK(worst < 1e-12);

  // t = 1 is plain single-token self-attention.
  const Matrix one = encode_history(tape, p, tape.constant(tokens.topRows(1))).value();
  CHECK(max_abs(one - full.topRows(1)) < 1e-12);
  CHECK_THROWS_AS(encode_history(tape, p, tape.constant(randn(51, c.d, 1.0, rng))), ContractError);
}

TEST_CASE("target blocks and the augmented description") {
  const ModelConfig c = small_config();
  ModelParams p = make_model(c, 9);
  Rng rng(10);
  Tape tape(false);
  const int ng = c.n_goal();
  CHECK(ng == 12);

  SUBCASE("ObjectGoal tag is a class-table row; others are zero") {
    TargetInput t;
    t.task = TaskKind::ObjectGoal;
    t.category = 3;
    const TargetBlocks b = embed_target(tape, p, t, std::nullopt);
    CHECK(b.tag.rows() == 1);
    CHECK(max_abs(b.tag.value() - p.class_table.value.row(3)) == 0.0);
    CHECK(b.image.value().isZero(0.0));
    CHECK(b.audio.value().isZero(0.0));
    CHECK(b.language.value().isZero(0.0));

    const Var g = build_augmented(tape, p, b);
    CHECK(g.rows() == 4 * ng);
    for (int r = 0; r < ng; ++r) {
      CHECK(max_abs(g.value().row(r) - p.task_embed[0].value) == 0.0);
      CHECK(max_abs(g.value().row(ng + r) - p.task_embed[1].value) == 0.0);
      CHECK(max_abs(g.value().row(2 * ng + r) - (p.class_table.value.row(3) + p.task_embed[2].value)) < 1e-15);
      CHECK(max_abs(g.value().row(3 * ng + r) - p.task_embed[3].value) == 0.0);
    }
    t.category = 4;
    CHECK_THROWS_AS(embed_target(tape, p, t, std::nullopt), ContractError);
  }
  SUBCASE("ImageGoal block has N_I rows") {
    const TargetInput t = sample_target(TaskKind::ImageGoal, c, rng);
    const TargetBlocks b = embed_target(tape, p, t, std::nullopt);
    CHECK(b.image.rows() == c.n_image);
    // 12 sub-views pooled to 2 rows: the halves.
    const Matrix halves = (Matrix(2, c.feat_v) << t.goal_rgb.topRows(6).colwise().mean(), t.goal_rgb.bottomRows(6).colwise().mean()).finished();
    CHECK(max_abs(b.image.value() - encoder_oracle(p.f_img, halves)) < 1e-12);
  }
  SUBCASE("AudioGoal block follows the live features") {
    TargetInput t;
    t.task = TaskKind::AudioGoal;
    const Var a1 = tape.constant(randn(12, c.d, 1.0, rng)), a2 = tape.constant(randn(12, c.d, 1.0, rng));
    const Var g1 = build_augmented(tape, p, embed_target(tape, p, t, a1));
    const Var g2 = build_augmented(tape, p, embed_target(tape, p, t, a2));
    CHECK(max_abs(g1.value() - g2.value()) > 0.1);
    CHECK_THROWS_AS(embed_target(tape, p, t, std::nullopt), ContractError);
  }
  SUBCASE("language: bi-LSTM rows, length limit") {
    TargetInput t;
    t.task = TaskKind::VisionLanguage;
    t.tokens = {1, 2, 3, 9};
    const TargetBlocks b = embed_target(tape, p, t, std::nullopt);
    CHECK(b.language.rows() == 4);
    CHECK(b.language.cols() == c.d);
    t.tokens.assign(7, 1);
    CHECK_THROWS_AS(embed_target(tape, p, t, std::nullopt), ContractError);
  }
  SUBCASE("cyclic tiling") {
    const Matrix x = randn(2, c.d, 1.0, rng);
    const Matrix t = tile_rows(tape.constant(x), 5).value();
    const int pattern[5] = {0, 1, 0, 1, 0};
    for (int r = 0; r < 5; ++r) CHECK(max_abs(t.row(r) - x.row(pattern[r])) == 0.0);
    CHECK_THROWS_AS(tile_rows(tape.constant(x), 1), ContractError);
  }
  SUBCASE("pooled goal") {
    const Matrix g = randn(4 * ng, c.d, 1.0, rng);
    CHECK(max_abs(pooled_goal(tape.constant(g)).value() - g.colwise().mean()) < 1e-14);
    CHECK(pooled_goal(tape.constant(Matrix::Zero(4, c.d))).value().isZero(0.0));
  }
  SUBCASE("absent blocks are shared across episodes of a kind") {
    TargetInput a, b;
    a.task = b.task = TaskKind::ObjectGoal;
    a.category = 0;
    b.category = 1;
    const Matrix ga = build_augmented(tape, p, embed_target(tape, p, a, std::nullopt)).value();
    const Matrix gb = build_augmented(tape, p, embed_target(tape, p, b, std::nullopt)).value();
    CHECK(max_abs(ga.topRows(2 * ng) - gb.topRows(2 * ng)) == 0.0);
    CHECK(max_abs(ga.bottomRows(ng) - gb.bottomRows(ng)) == 0.0);
  }
}

TEST_CASE("parse_goals: heads kept separate") {
  ModelConfig c = small_config();
  c.goal_queries = 2;
  ModelParams p = make_model(c, 13);
  Rng rng(14);
  Tape tape(false);
  const Matrix q = randn(1, c.d, 1.0, rng), g = randn(3, c.d, 1.0, rng);
  std::vector<Matrix> weights;
  const Matrix out = parse_goals(tape, p, tape.constant(q), tape.constant(g), nullptr, &weights).value();
  REQUIRE(out.rows() == 2);
  REQUIRE(weights.size() == 2);
  for (int h = 0; h < 2; ++h) {
    const GoalHead& head = p.goal_heads[static_cast<std::size_t>(h)];
    const RowVector qh = q * head.wq.value;
    const Matrix k = g * head.wk.value, v = g * head.wv.value;
    double s[3], z = 0.0;
    for (int j = 0; j < 3; ++j) {
      s[j] = std::exp(qh.dot(k.row(j)) / std::sqrt(8.0));
      z += s[j];
    }
    RowVector expect = RowVector::Zero(c.d);
    for (int j = 0; j < 3; ++j) {
      expect += s[j] / z * v.row(j);
      CHECK(weights[static_cast<std::size_t>(h)](0, j) == doctest::Approx(s[j] / z).epsilon(1e-12));
    }
    CHECK(max_abs(out.row(h) - expect) < 1e-12);
  }

  SUBCASE("identical rows: every head returns its value path") {
    const RowVector r = randn(1, c.d, 1.0, rng);
    const Matrix o = parse_goals(tape, p, tape.constant(q), tape.constant(r.replicate(5, 1))).value();
    for (int h = 0; h < 2; ++h) CHECK(max_abs(o.row(h) - r * p.goal_heads[static_cast<std::size_t>(h)].wv.value) < 1e-12);
  }
  SUBCASE("stacked epochs are step-major") {
    const Matrix q2 = randn(1, c.d, 1.0, rng);
    Matrix qq(2, c.d);
    qq << q, q2;
    const Matrix o = parse_goals(tape, p, tape.constant(qq), tape.constant(g)).value();
    const Matrix o2 = parse_goals(tape, p, tape.constant(q2), tape.constant(g)).value();
    CHECK(max_abs(o.topRows(2) - out) < 1e-12);
    CHECK(max_abs(o.bottomRows(2) - o2) < 1e-12);
  }
  SUBCASE("one head is a single attention without output map") {
    ModelParams one = p;
    one.goal_heads.resize(1);
    const Matrix o = parse_goals(tape, one, tape.constant(q), tape.constant(g)).value();
    CHECK(max_abs(o - out.topRows(1)) < 1e-15);
  }
}

TEST_CASE("planner: composition, identity, sharing") {
  const ModelConfig c = small_config();
  ModelParams p = make_model(c, 15);
  Rng rng(16);
  for (BlockParams& b : p.planner_shared) randomize_norms(b, rng);
  const Matrix q = randn(3, c.d, 1.0, rng), hist = randn(4, c.d, 1.0, rng);
  Tape tape(false);

  const Matrix out = plan(tape, p, tape.constant(q), tape.constant(hist), TaskKind::AudioGoal).value();
  Matrix x = q;
  for (const BlockParams& b : p.planner_shared) x = block_oracle(x, &hist, b);
  for (const BlockParams& b : p.planner_private[1]) x = block_oracle(x, &hist, b);
  CHECK(max_abs(out - x) < 1e-11);
  CHECK(p.planner_shared.size() == 2);
  CHECK(p.planner_private[1].size() == 2);

  SUBCASE("t = 1: every cross-attention weight is one") {
    const Matrix h1 = hist.topRows(1);
    for (const Matrix& w : attention_weights(tape, tape.constant(q), tape.constant(h1), p.planner_shared[0].attn))
      CHECK(max_abs(w - Matrix::Ones(3, 1)) < 1e-15);
  }
  SUBCASE("zero output weights give the identity") {
    for (auto* blocks : {&p.planner_shared, &p.planner_private[1]})
      for (BlockParams& b : *blocks) {
        b.attn.wo.value.setZero();
        b.fc2.weight.value.setZero();
        b.fc2.bias.value.setZero();
      }
    CHECK(max_abs(plan(tape, p, tape.constant(q), tape.constant(hist), TaskKind::AudioGoal).value() - q) == 0.0);
  }
  SUBCASE("shared weights reach every task; private weights one") {
    std::array<Matrix, kNumTasks> before;
    for (TaskKind t : kAllTasks) before[static_cast<std::size_t>(t)] = plan(tape, p, tape.constant(q), tape.constant(hist), t).value();
    p.planner_shared[0].fc1.weight.value(0, 0) += 0.5;
    for (TaskKind t : kAllTasks)
      CHECK(max_abs(plan(tape, p, tape.constant(q), tape.constant(hist), t).value() - before[static_cast<std::size_t>(t)]) > 1e-9);
    p.planner_shared[0].fc1.weight.value(0, 0) -= 0.5;
    p.planner_private[0][1].fc1.weight.value(0, 0) += 0.5;
    int changed = 0;
    for (TaskKind t : kAllTasks)
      changed += max_abs(plan(tape, p, tape.constant(q), tape.constant(hist), t).value() - before[static_cast<std::size_t>(t)]) > 1e-9;
    CHECK(changed == 1);
  }
  SUBCASE("multitask model is under half of four single-task models") {
    ModelParams multi = make_model(c, 1);
    for (int d : {8, 16, 64}) {
      ModelConfig mc = c;
      mc.d = d;
      multi = make_model(mc, 1);
      std::int64_t singles = 0;
      for (TaskKind t : kAllTasks) {
        ModelConfig sc = mc;
        sc.tasks = {t};
        singles += make_model(sc, 1).parameter_count();
      }
      CHECK(static_cast<double>(multi.parameter_count()) < 0.5 * static_cast<double>(singles));
    }
  }
  SUBCASE("uninstantiated task") {
    ModelConfig sc = c;
    sc.tasks = {TaskKind::ImageGoal};
    ModelParams single = make_model(sc, 1);
    CHECK_THROWS_AS(plan(tape, single, tape.constant(q), tape.constant(hist), TaskKind::AudioGoal), ContractError);
  }
}

TEST_CASE("action head") {
  const ModelConfig c = small_config();
  ModelParams p = make_model(c, 17);
  Rng rng(18);
  p.w_p.value = randn(c.d, c.d, 0.3, rng);
  Tape tape(false);
  const Matrix cq = randn(3, c.d, 1.0, rng);
  const Matrix v = randn(12, c.d, 1.0, rng), d = randn(12, c.d, 1.0, rng), a = randn(12, c.d, 1.0, rng);
  const HeadOutput out = action_head(tape, p, tape.constant(cq), tape.constant(v), tape.constant(d), tape.constant(a), TaskKind::ImageGoal);
  REQUIRE(out.logits.rows() == 1);
  REQUIRE(out.logits.cols() == 13);
  const RowVector c_bar = cq.colwise().mean();
  for (int i = 0; i < 12; ++i) {
    double expect = 0.0;
    for (int r = 0; r < c.d; ++r)
      for (int s = 0; s < c.d; ++s) expect += c_bar(r) * p.w_p.value(r, s) * (v(i, s) + d(i, s) + a(i, s)) / 3.0;
    CHECK(out.logits.value()(0, i) == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(out.logits.value()(0, 12) == 0.0);
  const Linear& vh = *p.value_head[0];
  CHECK(out.value.value()(0, 0) == doctest::Approx((c_bar * vh.weight.value)(0, 0) + vh.bias.value(0, 0)).epsilon(1e-12));

  SUBCASE("two stacked epochs") {
    const Matrix cq2 = randn(3, c.d, 1.0, rng);
    const Matrix v2 = randn(12, c.d, 1.0, rng);
    Matrix cc(6, c.d), vv(24, c.d), dd(24, c.d), aa(24, c.d);
    cc << cq, cq2;
    vv << v, v2;
    dd << d, d;
    aa << a, a;
    const HeadOutput two = action_head(tape, p, tape.constant(cc), tape.constant(vv), tape.constant(dd), tape.constant(aa), TaskKind::ImageGoal);
    const HeadOutput second = action_head(tape, p, tape.constant(cq2), tape.constant(v2), tape.constant(d), tape.constant(a), TaskKind::ImageGoal);
    CHECK(max_abs(two.logits.value().row(0) - out.logits.value()) < 1e-12);
    CHECK(max_abs(two.logits.value().row(1) - second.logits.value()) < 1e-12);
    CHECK(two.logits.value().col(12).isZero(0.0));
  }
  SUBCASE("zero bilinear map: uniform, greedy picks 0") {
    p.w_p.value.setZero();
    const HeadOutput z = action_head(tape, p, tape.constant(cq), tape.constant(v), tape.constant(d), tape.constant(a), TaskKind::ImageGoal);
    const RowVector probs = softmax(z.logits.value().row(0));
    CHECK(max_abs(probs.array() - 1.0 / 13.0) < 1e-15);
    CHECK(act_greedy(probs) == 0);
  }
  SUBCASE("greedy") {
    RowVector one_hot = RowVector::Zero(13);
    one_hot(5) = 1.0;
    CHECK(act_greedy(one_hot) == 5);
    const RowVector logits = out.logits.value().row(0);
    CHECK(act_greedy(softmax(logits)) == act_greedy(softmax((logits.array() + 7.5).matrix())));
    CHECK(softmax(logits)(12) > 0.0);
    CHECK_THROWS_AS(act_greedy(RowVector::Zero(13)), ContractError);
  }
  SUBCASE("non-finite logits") {
    Matrix bad = v;
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(action_head(tape, p, tape.constant(cq), tape.constant(bad), tape.constant(d), tape.constant(a), TaskKind::ImageGoal),
                    DivergenceError);
  }
}

TEST_CASE("policy: rollout runner matches the batched forward") {
  const ModelConfig c = small_config();
  ModelParams p = make_model(c, 19);
  Rng rng(20);
  p.w_p.value = randn(c.d, c.d, 0.3, rng);
  for (TaskKind task : kAllTasks) {
    CAPTURE(task_name(task));
    const TargetInput target = sample_target(task, c, rng);
    PolicyRunner runner(p, target);
    std::vector<Panorama> panos;
    std::vector<int> prev;
    std::vector<RowVector> logits;
    std::vector<double> values;
    int last = -1;
    for (int t = 0; t < 6; ++t) {
      panos.push_back(random_panorama(c, rng));
      prev.push_back(last);
      const PolicyRunner::Step s = runner.step(panos.back(), last);
      CHECK(std::abs(s.dist.probs.sum() - 1.0) < 1e-9);
      logits.push_back(s.dist.logits);
      values.push_back(s.dist.value);
      last = static_cast<int>(rng() % 13);
      if (task != TaskKind::AudioGoal) {
        CHECK(s.parse_weights.size() == 3);
        CHECK(s.parse_weights[0].size() == 4 * c.n_goal());
      }
    }
    CHECK(runner.epoch() == 6);
    const RawObservations obs = stack_observations(panos);
    Tape tape(false);
    const PolicyOutput full = forward_episode(tape, p, target, obs, prev, 0);
    const PolicyOutput tail = forward_episode(tape, p, target, obs, prev, 3);
    for (int t = 0; t < 6; ++t) {
      CHECK(max_abs(full.logits.value().row(t) - logits[static_cast<std::size_t>(t)]) < 1e-9);
      CHECK(std::abs(full.value.value()(t, 0) - values[static_cast<std::size_t>(t)]) < 1e-9);
    }
    CHECK(max_abs(tail.logits.value() - full.logits.value().bottomRows(3)) < 1e-9);
  }
}

TEST_CASE("policy: goal queries change as the episode unfolds") {
  const ModelConfig c = small_config();
  ModelParams p = make_model(c, 21);
  Rng rng(22);
  TargetInput target = sample_target(TaskKind::ObjectGoal, c, rng);
  PolicyRunner runner(p, target);
  std::vector<std::vector<RowVector>> weights;
  for (int t = 0; t < 4; ++t) weights.push_back(runner.step(random_panorama(c, rng), t == 0 ? -1 : t).parse_weights);
  CHECK(max_abs(weights[0][0] - weights[3][0]) > 0.0);
}

TEST_CASE("policy: modality ablation stays finite") {
  ModelConfig c = small_config();
  c.modalities = {true, false, false};
  ModelParams p = make_model(c, 23);
  Rng rng(24);
  PolicyRunner runner(p, sample_target(TaskKind::AudioGoal, c, rng));
  for (int t = 0; t < 3; ++t) CHECK(runner.step(random_panorama(c, rng), t - 1).dist.probs.allFinite());
}

TEST_CASE("policy: end-to-end gradients") {
  const ModelConfig c = small_config();
  Rng rng(25);
  for (TaskKind task : {TaskKind::VisionLanguage, TaskKind::AudioGoal, TaskKind::ImageGoal}) {
    CAPTURE(task_name(task));
    ModelParams p = make_model(c, 26);
    p.w_p.value = randn(c.d, c.d, 0.3, rng);
    const TargetInput target = sample_target(task, c, rng);
    std::vector<Panorama> panos;
    for (int t = 0; t < 3; ++t) panos.push_back(random_panorama(c, rng));
    const RawObservations obs = stack_observations(panos);
    const std::vector<int> prev{-1, 4, 12};
    const Matrix w = randn(2, 13, 1.0, rng);
    auto fn = [&](Tape& tape) {
      const PolicyOutput out = forward_episode(tape, p, target, obs, prev, 1);
      return add(sum_all(mul(log_softmax_rows(out.logits), tape.constant(w))), sum_all(square(out.value)));
    };
    const std::vector<NamedParam> params = p.named();
    std::string worst;
    const double err = max_param_grad_error(fn, params, rng, 3, 1e-5, &worst);
    CAPTURE(worst);
    CHECK(err < 1e-5);
  }
}

TEST_CASE("policy: rebuild after a parameter change matches a fresh forward") {
  const ModelConfig c = small_config();
  ModelParams p = make_model(c, 27);
  Rng rng(28);
  p.w_p.value = randn(c.d, c.d, 0.3, rng);
  for (TaskKind task : {TaskKind::AudioGoal, TaskKind::VisionLanguage}) {
    const TargetInput target = sample_target(task, c, rng);
    PolicyRunner runner(p, target);
    std::vector<Panorama> panos;
    std::vector<int> prev;
    for (int t = 0; t < 4; ++t) {
      panos.push_back(random_panorama(c, rng));
      prev.push_back(t == 0 ? -1 : t);
      runner.step(panos.back(), prev.back());
    }
    for (NamedParam& np : p.named()) np.param->value += randn(np.param->value.rows(), np.param->value.cols(), 0.01, rng);
    runner.rebuild(panos, prev);
    CHECK(runner.epoch() == 4);
    panos.push_back(random_panorama(c, rng));
    prev.push_back(12);
    const PolicyRunner::Step s = runner.step(panos.back(), prev.back());
    Tape tape(false);
    const PolicyOutput full = forward_episode(tape, p, target, stack_observations(panos), prev, 4);
    CHECK(max_abs(full.logits.value().row(0) - s.dist.logits) < 1e-9);
    CHECK(std::abs(full.value.value()(0, 0) - s.dist.value) < 1e-9);
  }
}
