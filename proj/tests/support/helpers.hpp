#pragma once

#include <random>
#include <string>

#include "flock/lkf.hpp"
#include "flock/scenario.hpp"
#include "oracle.hpp"

namespace testing_support {

inline flock::StateVector6 to_state(const oracle::Dense& x) {
  flock::StateVector6 s;
  for (int i = 0; i < 6; ++i) s(i) = x(static_cast<std::size_t>(i), 0);
  return s;
}

inline oracle::Dense from_state(const flock::StateVector6& s) {
  oracle::Dense x(6, 1);
  for (int i = 0; i < 6; ++i) x(static_cast<std::size_t>(i), 0) = s(i);
  return x;
}

inline oracle::Dense from_cov(const flock::Covariance6& P) {
  oracle::Dense m(6, 6);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) m(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = P(r, c);
  return m;
}

inline double max_abs_diff(const flock::StateVector6& a, const oracle::Dense& b) {
  double m = 0.0;
  for (int i = 0; i < 6; ++i) m = std::max(m, std::abs(a(i) - b(static_cast<std::size_t>(i), 0)));
  return m;
}

/// Random symmetric positive definite covariance.
inline flock::Covariance6 random_spd(std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  flock::Matrix6 L;
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) L(r, c) = n(rng);
  flock::Covariance6 P = scale * (L * L.transpose() / 6.0 + 0.1 * flock::Matrix6::Identity());
  return 0.5 * (P + P.transpose());
}

/// Every sensor reduced to ground truth.
inline flock::ScenarioConfig noiseless(flock::ScenarioConfig c) {
  auto& s = c.sensors;
  s.sigma_bearing = 0.0;
  s.sigma_distance_rel = 0.0;
  s.dropout_prob = 0.0;
  s.sigma_imu = 0.0;
  s.sigma_target = 0.0;
  s.vio.sigma_position = 0.0;
  s.vio.sigma_velocity = 0.0;
  s.vio.sigma_acceleration = 0.0;
  s.vio.drift_rate = 0.0;
  s.vio.count_noise = 0.0;
  return c;
}

inline std::string scenario_path(const std::string& name) { return std::string(FLOCK_SCENARIO_DIR) + "/" + name; }

}  // namespace testing_support
