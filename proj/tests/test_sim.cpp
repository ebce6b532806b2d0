#include <cmath>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "flock/sim.hpp"
#include "support/helpers.hpp"

using namespace flock;
using testing_support::noiseless;
using testing_support::scenario_path;

TEST(Plant, FirstOrderLagMatchesAnalytic) {
  PlantConfig p;
  p.tau = 0.3;
  p.a_max = 1e6;
  p.v_max = 1e6;
  AgentTruth s;
  for (int k = 1; k <= 40; ++k) {
    integrate_plant(s, Vec2(2, 0), p, 0.05);
    ASSERT_NEAR(s.velocity.x(), 2.0 * (1.0 - std::exp(-0.05 * k / p.tau)), 1e-12);
  }
}

TEST(Plant, ZeroCommandStaysStatic) {
  AgentTruth s;
  s.position = Vec2(3, 4);
  for (int k = 0; k < 100; ++k) integrate_plant(s, Vec2::Zero(), PlantConfig{}, 0.1);
  EXPECT_EQ(s.position, Vec2(3, 4));
  EXPECT_EQ(s.velocity, Vec2::Zero());
}

TEST(Plant, AccelerationAndSpeedCaps) {
  PlantConfig p;
  AgentTruth s;
  integrate_plant(s, Vec2(100, 0), p, 0.1);
  EXPECT_NEAR(s.velocity.norm(), p.a_max * 0.1, 1e-12);
  for (int k = 0; k < 200; ++k) integrate_plant(s, Vec2(100, 0), p, 0.1);
  EXPECT_NEAR(s.velocity.norm(), p.v_max, 1e-12);
}

TEST(Collisions, Examples) {
  std::vector<AgentTruth> w(3);
  for (int i = 0; i < 3; ++i) w[static_cast<std::size_t>(i)].id = i;
  w[0].position = Vec2(0, 0);
  w[1].position = Vec2(1.9, 0);
  w[2].position = Vec2(10, 0);
  const auto c = detect_collisions(w, 2.0);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0], std::make_pair(AgentId{0}, AgentId{1}));
  w[1].position = Vec2(2.0, 0);
  EXPECT_TRUE(detect_collisions(w, 2.0).empty());
  EXPECT_THROW(detect_collisions(w, 0.0), PreconditionError);
}

TEST(Simulation, IdenticalSeedsGiveIdenticalLogs) {
  auto c = load_scenario(scenario_path("goal_approach.json"));
  c.duration = 5.0;
  const auto serial = run_log_text(c);
  EXPECT_EQ(serial, run_log_text(c));
  c.threads = 3;
  EXPECT_EQ(serial, run_log_text(c));
  c.threads = 1;
  c.seed += 1;
  EXPECT_NE(serial, run_log_text(c));
}

TEST(Simulation, SingleAgentFliesPureFeedforward) {
  ScenarioConfig c = noiseless(ScenarioConfig{});
  c.initial_positions = {Vec2::Zero()};
  c.target.kind = TargetKind::kStatic;
  c.target.position = Vec2(300, 0);
  c.duration = 20.0;
  const auto art = run_scenario(c);
  const auto& last = art.log.ticks.back().agents[0];
  EXPECT_NEAR(last.velocity.x(), c.gains.v_D, 0.05);
  EXPECT_NEAR(last.velocity.y(), 0.0, 1e-9);
  EXPECT_TRUE(last.neighbors.empty());
}

TEST(Simulation, HoverSettlesNearRest) {
  auto c = noiseless(load_scenario(scenario_path("hover.json")));
  const auto art = run_scenario(c);
  for (const auto& a : art.log.ticks.back().agents) EXPECT_LT(a.v_d.norm(), 0.1) << a.id;
  EXPECT_EQ(art.metrics.collision_samples, 0u);
}

TEST(Simulation, NoiselessTriangleHoldsDesiredSpacing) {
  ScenarioConfig c = noiseless(ScenarioConfig{});
  const double d = c.gains.d_des;
  c.initial_positions = {Vec2(0, 0), Vec2(d + 3, 1), Vec2(0.5 * d, 0.8 * d + 2)};
  c.duration = 40.0;
  const auto art = run_scenario(c);
  const auto& agents = art.log.ticks.back().agents;
  for (std::size_t i = 0; i < agents.size(); ++i)
    for (std::size_t j = i + 1; j < agents.size(); ++j) {
      EXPECT_NEAR((agents[i].position - agents[j].position).norm(), d, 0.1 * d) << i << "-" << j;
    }
}

TEST(Simulation, IntruderScenarioIsCollisionFree) {
  const auto art = run_scenario(load_scenario(scenario_path("agile.json")));
  EXPECT_EQ(art.metrics.collision_samples, 0u);
}

TEST(Simulation, MetricsRecomputedFromLogMatch) {
  auto c = load_scenario(scenario_path("goal_approach.json"));
  c.duration = 10.0;
  std::ostringstream os;
  const auto art = run_scenario(c, &os);
  std::istringstream in(os.str());
  const auto log = read_log(in);
  EXPECT_EQ(metrics_to_json(compute_metrics(log.header, log.ticks)).dump(), metrics_to_json(art.metrics).dump());
}

TEST(Simulation, NonFiniteStateRaisesFault) {
  ScenarioConfig c = noiseless(ScenarioConfig{});
  c.initial_positions = {Vec2(0, 0), Vec2(std::numeric_limits<double>::quiet_NaN(), 0.0)};
  c.duration = 1.0;
  EXPECT_THROW(run_scenario(c), SimulationFault);
}

TEST(ParallelFor, VisitsEveryIndexOnceAndRethrows) {
  std::vector<int> hits(37, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(5, 2, [](std::size_t i) {
                 if (i == 3) throw std::runtime_error("boom");
               }),
               std::runtime_error);
}
