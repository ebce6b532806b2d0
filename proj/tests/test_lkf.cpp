#include <random>

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "flock/lkf.hpp"
#include "support/helpers.hpp"
#include "support/oracle.hpp"

using namespace flock;
using testing_support::from_cov;
using testing_support::from_state;
using testing_support::max_abs_diff;

namespace {

const StateVector6 kQ = (StateVector6() << 1e-3, 1e-3, 1e-2, 1e-2, 0.25, 0.25).finished();

}  // namespace

TEST(Predict, PropagatesVelocity) {
  Estimate e;
  e.x << 0, 0, 1, 0, 0, 0;
  const auto out = predict(e, LkfModel::constant_acceleration(0.1, kQ));
  const StateVector6 expected = (StateVector6() << 0.1, 0, 1, 0, 0, 0).finished();
  EXPECT_LT((out.x - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Predict, PropagatesAcceleration) {
  Estimate e;
  e.x << 0, 0, 0, 0, 2, 0;
  const auto out = predict(e, LkfModel::constant_acceleration(0.1, kQ));
  const StateVector6 expected = (StateVector6() << 0.01, 0, 0.2, 0, 2, 0).finished();
  EXPECT_LT((out.x - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Predict, InputRequiredExactlyWhenBNonzero) {
  Estimate e;
  const auto focal = LkfModel::focal(0.1, 0.3, kQ);
  EXPECT_THROW(predict(e, focal), PreconditionError);
  EXPECT_THROW(predict(e, LkfModel::constant_acceleration(0.1, kQ), Vec2(1, 0)), PreconditionError);
  EXPECT_NO_THROW(predict(e, focal, Vec2(1, 0)));
}

TEST(Predict, NonFiniteInputIsNumericalFault) {
  Estimate e;
  e.x(0) = std::numeric_limits<double>::quiet_NaN();
  try {
    predict(e, LkfModel::constant_acceleration(0.1, kQ), std::nullopt, "track 3");
    FAIL();
  } catch (const NumericalFault& f) {
    EXPECT_EQ(f.filter(), "track 3");
  }
}

TEST(Predict, FiftyRandomStepsMatchOracle) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 20; ++trial) {
    Estimate e;
    for (int i = 0; i < 6; ++i) e.x(i) = u(rng);
    e.P = testing_support::random_spd(rng);
    const double dt = 0.02 + 0.1 * std::abs(u(rng)) / 5.0;
    const auto model = LkfModel::constant_acceleration(dt, kQ);
    oracle::Filter o{from_state(e.x), from_cov(e.P)};
    const auto A = oracle::transition(dt);
    const auto Q = oracle::diagonal({kQ(0), kQ(1), kQ(2), kQ(3), kQ(4), kQ(5)});
    for (int k = 0; k < 50; ++k) {
      e = predict(e, model);
      o.predict(A, Q);
    }
    EXPECT_EQ(max_abs_diff(e.x, o.x), 0.0);
  }
}

TEST(Correct, ZeroNoiseMeasurementDominates) {
  Estimate e;
  e.P = Covariance6::Identity() * 4.0;
  Measurement2 m = Measurement2::of(Channel::kPosition, Vec2(3, 4), 1e-6, 0.0);
  const auto out = correct(e, m);
  EXPECT_NEAR(out.x(kX), 3.0, 1e-6);
  EXPECT_NEAR(out.x(kY), 4.0, 1e-6);
}

TEST(Correct, RejectsZeroRowInH) {
  Estimate e;
  Measurement2 m = Measurement2::of(Channel::kPosition, Vec2(1, 1), 1.0, 0.0);
  m.H.row(1).setZero();
  EXPECT_THROW(correct(e, m), PreconditionError);
}

TEST(Correct, RejectsNonUnitEntry) {
  Estimate e;
  Measurement2 m = Measurement2::of(Channel::kVelocity, Vec2(1, 1), 1.0, 0.0);
  m.H(0, kVx) = 2.0;
  EXPECT_THROW(correct(e, m), PreconditionError);
}

TEST(Correct, ZeroMeasurementNoiseIsPrecondition) {
  Estimate e;
  Measurement2 m = Measurement2::of(Channel::kPosition, Vec2(1, 1), 1.0, 0.0);
  m.R.setZero();
  EXPECT_THROW(correct(e, m), PreconditionError);
}

TEST(Correct, SingularInnovationIsNumericalFault) {
  Estimate e;
  e.P = -Covariance6::Identity();
  const auto m = Measurement2::of(Channel::kPosition, Vec2(1, 1), 1.0, 0.0);
  EXPECT_THROW(correct(e, m), NumericalFault);
}

TEST(Correct, NeverIncreasesTraceAndKeepsPsd) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_int_distribution<int> ch(0, 2);
  const auto model = LkfModel::constant_acceleration(0.1, kQ);
  Estimate e;
  e.P = testing_support::random_spd(rng, 5.0);
  for (int k = 0; k < 10000; ++k) {
    e = predict(e, model);
    const double before = e.P.trace();
    const auto c = static_cast<Channel>(ch(rng));
    e = correct(e, Measurement2::of(c, Vec2(u(rng), u(rng)), 0.2 + std::abs(u(rng)), 0.0));
    ASSERT_LE(e.P.trace(), before + 1e-12);
    ASSERT_LT((e.P - e.P.transpose()).cwiseAbs().maxCoeff(), 1e-9);
    Eigen::SelfAdjointEigenSolver<Covariance6> es(e.P);
    ASSERT_GE(es.eigenvalues().minCoeff(), -1e-9);
  }
}

TEST(Correct, RandomSequenceMatchesOracle) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::uniform_int_distribution<int> ch(0, 2);
  const double dt = 0.1;
  const auto model = LkfModel::constant_acceleration(dt, kQ);
  Estimate e;
  e.P = testing_support::random_spd(rng, 3.0);
  oracle::Filter o{from_state(e.x), from_cov(e.P)};
  const auto A = oracle::transition(dt);
  const auto Q = oracle::diagonal({kQ(0), kQ(1), kQ(2), kQ(3), kQ(4), kQ(5)});
  double worst = 0.0;
  for (int k = 0; k < 2000; ++k) {
    e = predict(e, model);
    o.predict(A, Q);
    const int c = ch(rng);
    const std::array<double, 2> z{u(rng), u(rng)};
    const double sigma = 0.3 + std::abs(u(rng)) / 10.0;
    e = correct(e, Measurement2::of(static_cast<Channel>(c), Vec2(z[0], z[1]), sigma, 0.0));
    o.correct(static_cast<std::size_t>(2 * c), z, sigma);
    worst = std::max(worst, max_abs_diff(e.x, o.x));
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(Convergence, NoiselessTrajectoryRecovered) {
  const double dt = 0.1;
  const auto model = LkfModel::constant_acceleration(dt, StateVector6::Zero());
  StateVector6 truth;
  truth << 3, -2, 1.5, 0.5, 0.2, -0.1;
  Estimate e;
  e.P = Covariance6::Identity() * 100.0;
  for (int k = 0; k < 20; ++k) {
    truth = model.A * truth;
    e = predict(e, model);
    e = correct(e, Measurement2::of(Channel::kPosition, truth.head<2>(), 1e-7, 0.0));
    e = correct(e, Measurement2::of(Channel::kVelocity, truth.segment<2>(kVx), 1e-7, 0.0));
  }
  EXPECT_LT((e.x - truth).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Nees, ZeroError) {
  StateVector6 x;
  x << 1, 2, 3, 4, 5, 6;
  EXPECT_EQ(nees(x, Covariance6::Identity(), x), 0.0);
}

TEST(Nees, UnitQuadraticForm) {
  StateVector6 e = StateVector6::Zero();
  e(0) = 1.0;
  EXPECT_DOUBLE_EQ(nees(e, Covariance6::Identity(), StateVector6::Zero()), 1.0);
}

TEST(Nees, SingularCovarianceIsNumericalFault) {
  const StateVector6 zero = StateVector6::Zero();
  EXPECT_THROW(nees(zero, Covariance6(Covariance6::Zero()), zero), NumericalFault);
}

TEST(LkfModel, FocalModelEntries) {
  const auto m = LkfModel::focal(0.1, 0.3, kQ);
  const double ed = std::exp(-0.1 / 0.3);
  EXPECT_DOUBLE_EQ(m.A(kVx, kVx), ed);
  EXPECT_DOUBLE_EQ(m.B(kVx, 0), 1.0 - ed);
  EXPECT_DOUBLE_EQ(m.B(kVy, 1), 1.0 - ed);
  EXPECT_EQ(m.B.row(kX).norm() + m.B.row(kAx).norm(), 0.0);
}

TEST(LkfModel, RejectsBadParameters) {
  EXPECT_THROW(LkfModel::constant_acceleration(0.0, kQ), PreconditionError);
  StateVector6 neg = kQ;
  neg(2) = -1.0;
  EXPECT_THROW(LkfModel::constant_acceleration(0.1, neg), PreconditionError);
  EXPECT_THROW(LkfModel::focal(0.1, 0.0, kQ), PreconditionError);
}
