#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "flock/sim.hpp"
#include "flock/velocity_estimation.hpp"

using namespace flock;

TEST(FitResponseModel, RecoversSyntheticCoefficients) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::vector<ResponseSample> s;
  for (int k = 0; k < 200; ++k) {
    const Vec2 v_e(u(rng), u(rng)), v_d(u(rng), u(rng));
    s.push_back({v_e, v_d, 0.8 * v_e + 0.2 * v_d});
  }
  const auto m = fit_response_model(s);
  EXPECT_NEAR(m.q1, 0.8, 1e-9);
  EXPECT_NEAR(m.q2, 0.2, 1e-9);
  EXPECT_LT(m.residual_norm, 1e-9);
  EXPECT_TRUE(m.plausible());
}

TEST(FitResponseModel, RecoversPlantLagFromNoiselessTraining) {
  ScenarioConfig c;
  c.dt = 0.1;
  c.plant.tau = 0.3;
  c.plant.a_max = 1e6;
  c.plant.v_max = 1e6;
  c.sensors.vio.sigma_velocity = 0.0;
  const auto m = fit_response_model(response_training_samples(c));
  const double ed = std::exp(-c.dt / c.plant.tau);
  EXPECT_NEAR(m.q1, ed, 1e-6);
  EXPECT_NEAR(m.q2, 1.0 - ed, 1e-6);
}

TEST(FitResponseModel, IdenticalRowsFail) {
  std::vector<ResponseSample> s(10, ResponseSample{Vec2(1, 1), Vec2(1, 1), Vec2(1, 1)});
  EXPECT_THROW(fit_response_model(s), FitFailure);
  EXPECT_THROW(fit_response_model({}), FitFailure);
}

TEST(EstimateVelocities, UnfittedModelIsConfigError) {
  VelocityEstimationInput in;
  EXPECT_THROW(estimate_velocities(in, ResponseModel{}, ControllerGains{}, ViewConfig{}, {}), ConfigError);
}

TEST(EstimateVelocities, NoObservedUavs) {
  VelocityEstimationInput in;
  const auto r = estimate_velocities(in, ResponseModel::with(0.8, 0.2), ControllerGains{}, ViewConfig{}, {});
  EXPECT_TRUE(r.estimates.empty());
  EXPECT_TRUE(r.state.empty());
}

TEST(ResponseModel, ConvergesGeometricallyToConstantCommand) {
  const auto m = ResponseModel::with(0.8, 0.2);
  const Vec2 v_d(3.0, -1.0);
  Vec2 v_e(-2.0, 4.0);
  const double e0 = (v_e - v_d).norm();
  for (int k = 1; k <= 60; ++k) {
    v_e = m.advance(v_e, v_d);
    ASSERT_NEAR((v_e - v_d).norm(), std::pow(0.8, k) * e0, 1e-12);
  }
}

TEST(EstimateVelocities, EquilateralTriangleAtRestCommandsZero) {
  ControllerGains g;
  const double d = g.d_des;
  // Focal at the origin; neighbors 1 and 2 complete an equilateral triangle.
  std::vector<TrackView> tracks = {{1, Vec2(d, 0), Vec2::Zero(), 0, 0},
                                   {2, Vec2(0.5 * d, 0.5 * std::sqrt(3.0) * d), Vec2::Zero(), 0, 0}};
  std::vector<AgentId> hood = {1, 2};
  VelocityEstimationInput in{tracks, hood, 0, Vec2::Zero(), std::nullopt, 0.3, 0.1};
  ViewConfig view;
  view.fov = 2.0 * kPi;
  const auto r = estimate_velocities(in, ResponseModel::with(0.8, 0.2), g, view, {});
  ASSERT_EQ(r.estimates.size(), 2u);
  for (const auto& e : r.estimates) {
    EXPECT_LT(e.v_d.norm(), 1e-9) << e.id;
    EXPECT_LT(e.v_e.norm(), 1e-9) << e.id;
  }
}

TEST(EstimateVelocities, ReplayConvergesForStaticView) {
  ControllerGains g;
  std::vector<TrackView> tracks = {{1, Vec2(20, 0), Vec2(1, 1), 0, 0}, {2, Vec2(20, 14), Vec2::Zero(), 0, 0}};
  std::vector<AgentId> hood = {1};
  VelocityEstimationInput in{tracks, hood, 0, Vec2::Zero(), Vec2(200, 0), 0.0, 0.1};
  CommlessVelocityEstimator est(ResponseModel::with(0.8, 0.2), g, ViewConfig{});
  Vec2 last_v_d = Vec2::Zero();
  for (int k = 0; k < 100; ++k) {
    const auto& r = est.update(in);
    last_v_d = r.front().v_d;
  }
  EXPECT_LT((est.last().front().v_e - last_v_d).norm(), 1e-6);
}

TEST(EstimateVelocities, PureFunctionOfArguments) {
  std::vector<TrackView> tracks = {{3, Vec2(18, -2), Vec2(4, 0.5), 0, 0},
                                   {1, Vec2(6, 11), Vec2(4.5, 0), 0, 0},
                                   {2, Vec2(-5, 13), Vec2(3, 1), 0, 0}};
  std::vector<AgentId> hood = {1, 3};
  VelocityEstimationInput in{tracks, hood, 0, Vec2::Zero(), Vec2(150, 30), 0.1, 0.1};
  const auto model = ResponseModel::with(0.82, 0.18);
  const auto a = estimate_velocities(in, model, ControllerGains{}, ViewConfig{}, {});
  const auto b = estimate_velocities(in, model, ControllerGains{}, ViewConfig{}, a.state);
  const auto c = estimate_velocities(in, model, ControllerGains{}, ViewConfig{}, a.state);
  ASSERT_EQ(b.estimates.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(b.estimates[i].id, static_cast<AgentId>(i + 1));
    EXPECT_EQ(b.estimates[i].v_d, c.estimates[i].v_d);
    EXPECT_EQ(b.estimates[i].v_e, c.estimates[i].v_e);
  }
}

TEST(NeighborNeighborhood, ExcludesFocalUnlessNeighbor) {
  std::vector<TrackView> tracks = {{1, Vec2(10, 0), Vec2::Zero(), 0, 0}};
  ViewConfig view;
  view.fov = 2.0 * kPi;
  EXPECT_TRUE(estimate_neighbor_neighborhood(tracks, 1, Vec2::Zero(), 0, false, 0.0, view).empty());
  const auto n = estimate_neighbor_neighborhood(tracks, 1, Vec2::Zero(), 0, true, 0.0, view);
  ASSERT_EQ(n.size(), 1u);
  EXPECT_EQ(n[0].id, 0);
  EXPECT_NEAR(n[0].distance, 10.0, 1e-12);
  EXPECT_THROW(estimate_neighbor_neighborhood(tracks, 7, Vec2::Zero(), 0, true, 0.0, view), PreconditionError);
}

TEST(NeighborNeighborhood, BlindSpotBehindHeading) {
  std::vector<TrackView> tracks = {{1, Vec2(10, 0), Vec2(3, 0), 0, 0}, {2, Vec2(0, 0), Vec2::Zero(), 0, 0}};
  // UAV 1 flies along +x; UAV 2 sits directly behind it.
  EXPECT_TRUE(estimate_neighbor_neighborhood(tracks, 1, Vec2(50, 50), 9, false, 0.0, ViewConfig{}).empty());
}
