#include "vienna/reward.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace vienna;

TEST_CASE("reward: hand-evaluated examples") {
  const RewardConfig cfg;
  SUBCASE("terminal success, no motion, revisited cell") {
    ExploreState ex;
    ex.visit({1.0, 1.0}, cfg.cell_size);
    const Transition t{2.0, 2.0, 7, true, {1.0, 1.0}};
    CHECK(reward(t, ex, cfg) == doctest::Approx(2.499).epsilon(1e-12));
  }
  SUBCASE("first action moves closer into a new cell") {
    ExploreState ex;
    const Transition t{3.0, 2.75, 0, false, {1.0, 1.0}};
    const RewardTerms r = reward_terms(t, ex, cfg);
    CHECK(ex.nu() == 1);
    CHECK(r.explore == 0.25);
    CHECK(r.total() == doctest::Approx(0.499).epsilon(1e-12));
  }
  SUBCASE("moving away inside an old cell") {
    ExploreState ex;
    ex.visit({1.0, 1.0}, cfg.cell_size);
    const Transition t{2.75, 3.0, 4, false, {1.2, 1.0}};
    CHECK(reward(t, ex, cfg) == doctest::Approx(-0.251).epsilon(1e-12));
  }
  SUBCASE("second new cell divides by two and decays") {
    ExploreState ex;
    ex.visit({1.0, 1.0}, cfg.cell_size);
    const RewardTerms r = reward_terms({2.0, 2.0, 3, false, {3.0, 1.0}}, ex, cfg);
    CHECK(r.explore == doctest::Approx(0.25 * std::pow(0.995, 3) / 2.0).epsilon(1e-15));
  }
  SUBCASE("toggles") {
    RewardConfig off = cfg;
    off.use_progress = off.use_slack = off.use_explore = false;
    ExploreState ex;
    CHECK(reward({3.0, 2.0, 0, false, {1, 1}}, ex, off) == 0.0);
    CHECK(reward({3.0, 2.0, 1, true, {1, 1}}, ex, off) == 2.5);
  }
  ExploreState ex;
  CHECK_THROWS_AS(reward({std::nan(""), 1.0, 0, false, {1, 1}}, ex, cfg), ContractError);
  CHECK_THROWS_AS(reward({1.0, std::numeric_limits<double>::infinity(), 0, false, {1, 1}}, ex, cfg), ContractError);
}

TEST_CASE("reward: progress telescopes and exploration pays once per cell") {
  const RewardConfig cfg;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int trial = 0; trial < 20; ++trial) {
    ExploreState ex;
    std::vector<double> geo{u(rng)};
    double progress = 0.0;
    std::set<std::pair<long, long>> paid;
    for (int t = 0; t < 40; ++t) {
      geo.push_back(u(rng));
      const Vec2 p(u(rng), u(rng));
      const RewardTerms r = reward_terms({geo[geo.size() - 2], geo.back(), t, false, p}, ex, cfg);
      progress += r.progress;
      const auto key = std::make_pair(static_cast<long>(std::floor(p.x() / 2.5)), static_cast<long>(std::floor(p.y() / 2.5)));
      CHECK((r.explore > 0.0) == paid.insert(key).second);
    }
    CHECK(std::abs(progress - (geo.front() - geo.back())) < 1e-9);
  }
}

TEST_CASE("score_episode and aggregate") {
  WorldParams p;
  p.rooms = 1;
  p.obstacles = 0;
  p.objects = 0;
  const World w = generate_world(1, p);
  EpisodeContext ctx;
  ctx.world = &w;
  ctx.episode.goal = {5.025, 4.025};
  ctx.episode.start = {{1.025, 4.025}, 0.0};
  ctx.goal_field = std::make_shared<DistanceField>(w, ctx.episode.goal);
  ctx.episode.shortest_length = ctx.goal_distance(ctx.episode.start.position);
  CHECK(ctx.episode.shortest_length == doctest::Approx(4.0));

  Trajectory exact;
  exact.poses.push_back(ctx.episode.start);
  for (int i = 0; i < 13; ++i) {
    exact.actions.push_back(0);
    exact.poses.push_back(step(w, exact.poses.back(), 0).pose);
  }
  exact.actions.push_back(kStopAction);
  exact.poses.push_back(exact.poses.back());
  EvalRecord rec = score_episode(ctx, exact);
  CHECK(rec.success);
  CHECK(rec.path_length == doctest::Approx(3.25));
  // Stopped early, so the path is shorter than l: SPL clamps to 1.
  CHECK(rec.spl() == 1.0);
  CHECK(rec.oracle_success);

  EvalRecord r45;
  r45.success = true;
  r45.shortest = 4.0;
  r45.path_length = 5.0;
  CHECK(r45.spl() == doctest::Approx(0.8));
  r45.success = false;
  CHECK(r45.spl() == 0.0);

  EvalRecord a, b;
  a.success = true;
  a.oracle_success = true;
  a.shortest = 2.0;
  a.path_length = 2.0;
  a.final_error = 0.5;
  b.final_error = 3.0;
  b.shortest = 2.0;
  b.path_length = 4.0;
  const std::vector<EvalRecord> pair{a, b};
  const auto rows = aggregate(pair);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].sr == 50.0);
  CHECK(rows[0].ne == doctest::Approx(1.75));
  CHECK(rows[0].oracle_rate == 50.0);
  CHECK(rows[0].spl == 50.0);
  CHECK(metrics_csv(rows).rfind("task,split,SR,NE,OR,SPL,episodes\n", 0) == 0);
  CHECK_THROWS_AS(aggregate(std::span<const EvalRecord>{}), ContractError);
}
