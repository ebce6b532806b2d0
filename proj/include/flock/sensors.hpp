#pragma once

// Seeded emulation of the onboard sensor suite: bearing/range mutual
// localization with a rear blind spot, a visual-inertial odometry stream
// whose feature count degrades with speed, IMU acceleration, and an optional
// velocity-sharing channel.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "flock/errors.hpp"
#include "flock/geometry.hpp"
#include "flock/mrse.hpp"
#include "flock/neighbor_tracker.hpp"

namespace flock {

enum class SensorStream : std::uint64_t { kRelative = 1, kVio = 2, kImu = 3, kComm = 4, kTarget = 5 };

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream per (master seed, agent, sensor).
class Rng {
 public:
  Rng() = default;
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t master, AgentId agent, SensorStream stream)
      : engine_(splitmix64(splitmix64(master) ^ splitmix64(static_cast<std::uint64_t>(agent) * 0x100 +
                                                            static_cast<std::uint64_t>(stream)))) {}

  double normal(double sigma) {
    if (sigma <= 0.0) return 0.0;
    return sigma * std::normal_distribution<double>(0.0, 1.0)(engine_);
  }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double exponential(double rate) { return std::exponential_distribution<double>(rate)(engine_); }
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_{0};
};

/// Ground truth of one agent in the world frame.
struct AgentTruth {
  AgentId id = 0;
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  Vec2 acceleration = Vec2::Zero();
  double heading = 0.0;
};

struct VioConfig {
  bool enabled = true;
  double sigma_position = 0.05;      // [m]
  double sigma_velocity = 0.05;      // [m/s]
  double sigma_acceleration = 0.2;   // [m/s^2]
  double drift_rate = 0.05;          // [m/sqrt(s)] random-walk intensity with full feature count
  double starved_drift_gain = 10.0;  // drift multiplier added in proportion to missing features
  int max_features = 150;            // C_f
  double speed_starve = 25.0;        // [m/s] speed at which no features remain
  double count_noise = 3.0;          // [features]
  double hazard_base = 0.5;          // [1/s] feature loss rate in hover
  double hazard_per_speed = 0.02;    // [1/m] additional loss rate per m/s of ground speed

  double nominal_track_age() const { return 1.0 / hazard_base; }
};

struct CommConfig {
  bool enabled = true;
  int latency_ticks = 0;
  double drop_prob = 0.0;
};

struct SensorConfig {
  double sigma_bearing = kPi / 180.0;   // [rad]
  double sigma_distance_rel = 0.1;      // fraction of range
  double dropout_prob = 0.1;            // per observation per tick
  double max_range = 60.0;              // [m]
  double fov = 320.0 * kPi / 180.0;     // [rad]
  double blind_spot = 40.0 * kPi / 180.0;
  VioConfig vio;
  double sigma_imu = 0.1;               // [m/s^2]
  double sigma_target = 0.3;            // [m] emulated target perception noise
  CommConfig comm;

  std::vector<std::string> violations() const {
    std::vector<std::string> out;
    if (std::abs(fov + blind_spot - 2.0 * kPi) > 1e-9) out.emplace_back("sensors: fov + blind_spot must equal 2*pi");
    for (double s : {sigma_bearing, sigma_distance_rel, sigma_imu, sigma_target, vio.sigma_position,
                     vio.sigma_velocity, vio.sigma_acceleration, vio.drift_rate, vio.count_noise}) {
      if (!(s >= 0.0)) {
        out.emplace_back("sensors: noise magnitudes must be non-negative");
        break;
      }
    }
    for (double p : {dropout_prob, comm.drop_prob}) {
      if (!(p >= 0.0 && p <= 1.0)) out.emplace_back("sensors: probabilities must lie in [0, 1]");
    }
    if (!(max_range > 0.0)) out.emplace_back("sensors: max_range must be positive");
    if (vio.max_features <= 0) out.emplace_back("sensors.vio: max_features must be positive");
    if (!(vio.speed_starve > 0.0)) out.emplace_back("sensors.vio: speed_starve must be positive");
    if (!(vio.hazard_base > 0.0) || !(vio.hazard_per_speed >= 0.0)) {
      out.emplace_back("sensors.vio: hazard_base must be positive and hazard_per_speed non-negative");
    }
    if (comm.latency_ticks < 0) out.emplace_back("sensors.comm: latency_ticks must be non-negative");
    return out;
  }
};

/// True bearing of `to` seen from `from`, relative to the observer heading.
inline double body_bearing(const AgentTruth& from, const AgentTruth& to) {
  return wrap_angle(bearing_of(to.position - from.position) - from.heading);
}

inline bool in_field_of_view(double body_bearing_rad, const SensorConfig& cfg) {
  return std::abs(body_bearing_rad) <= 0.5 * cfg.fov;
}

/// Observations of every other agent in range and outside the rear blind spot.
inline std::vector<RelativeObservation> observe(std::span<const AgentTruth> world, std::size_t observer,
                                                const SensorConfig& cfg, Rng& rng, double stamp) {
  std::vector<RelativeObservation> out;
  const AgentTruth& self = world[observer];
  for (std::size_t j = 0; j < world.size(); ++j) {
    if (j == observer) continue;
    const AgentTruth& other = world[j];
    const double distance = (other.position - self.position).norm();
    const double bearing = body_bearing(self, other);
    if (!(distance > 0.0) || distance > cfg.max_range || !in_field_of_view(bearing, cfg)) continue;
    if (cfg.dropout_prob > 0.0 && rng.bernoulli(cfg.dropout_prob)) continue;
    RelativeObservation obs;
    obs.observer_id = self.id;
    obs.observed_id = other.id;
    obs.bearing = wrap_angle(bearing + rng.normal(cfg.sigma_bearing));
    obs.distance = std::max(1e-3, distance * (1.0 + rng.normal(cfg.sigma_distance_rel)));
    obs.stamp = stamp;
    out.push_back(obs);
  }
  return out;
}

/// Emulated VIO: drifting pose and a feature pool whose size shrinks with
/// ground speed and whose features are lost at a speed-dependent rate.
class VioSimulator {
 public:
  VioSimulator() = default;
  VioSimulator(VioConfig config, Vec2 origin, Rng rng) : config_(config), origin_(origin), rng_(rng) {
    if (config_.enabled) {
      ages_.reserve(static_cast<std::size_t>(config_.max_features));
      for (int i = 0; i < config_.max_features; ++i) ages_.push_back(rng_.exponential(config_.hazard_base));
    }
  }

  VioSample sample(const AgentTruth& truth, double dt) {
    VioSample s;
    s.max_features = config_.max_features;
    s.average_track_age = config_.nominal_track_age();
    if (!config_.enabled) {
      s.position = truth.position - origin_ + drift_;
      return s;
    }
    const double speed = truth.velocity.norm();
    const double hazard = config_.hazard_base + config_.hazard_per_speed * speed;
    const double survive = std::exp(-hazard * dt);
    std::vector<double> kept;
    kept.reserve(ages_.size());
    for (double age : ages_) {
      if (rng_.uniform() < survive) kept.push_back(age + dt);
    }
    const double cap = static_cast<double>(config_.max_features);
    const double expected = cap * std::max(0.0, 1.0 - speed / config_.speed_starve);
    const auto target =
        static_cast<std::size_t>(std::clamp(std::round(expected + rng_.normal(config_.count_noise)), 0.0, cap));
    if (kept.size() > target) {
      // The youngest features are the least established; they go first.
      std::stable_sort(kept.begin(), kept.end(), std::greater<>());
      kept.resize(target);
    }
    while (kept.size() < target) kept.push_back(0.0);
    ages_ = std::move(kept);

    const double missing = 1.0 - static_cast<double>(ages_.size()) / cap;
    const double drift_sigma = config_.drift_rate * std::sqrt(dt) * (1.0 + config_.starved_drift_gain * missing);
    drift_ += Vec2(rng_.normal(drift_sigma), rng_.normal(drift_sigma));

    s.position = truth.position - origin_ + drift_ + Vec2(rng_.normal(config_.sigma_position), rng_.normal(config_.sigma_position));
    s.velocity = truth.velocity + Vec2(rng_.normal(config_.sigma_velocity), rng_.normal(config_.sigma_velocity));
    s.acceleration =
        truth.acceleration + Vec2(rng_.normal(config_.sigma_acceleration), rng_.normal(config_.sigma_acceleration));
    s.feature_count = static_cast<int>(ages_.size());
    s.track_ages = ages_;
    return s;
  }

  const Vec2& drift() const { return drift_; }

 private:
  VioConfig config_;
  Vec2 origin_ = Vec2::Zero();
  Rng rng_;
  Vec2 drift_ = Vec2::Zero();
  std::vector<double> ages_;
};

struct VelocityMessage {
  AgentId sender = 0;
  AgentId receiver = 0;
  Vec2 velocity = Vec2::Zero();
  double stamp = 0.0;
  long deliver_tick = 0;
};

/// Per-receiver mailbox with fixed latency and independent message drops.
class CommChannel {
 public:
  CommChannel() = default;
  explicit CommChannel(CommConfig config) : config_(config) {}

  /// Messages surviving the drop draw, in ascending receiver order. Uses the sender's stream.
  std::vector<VelocityMessage> send(AgentId sender, std::span<const AgentId> receivers, const Vec2& velocity,
                                    double stamp, long tick, Rng& rng) const {
    std::vector<VelocityMessage> out;
    if (!config_.enabled) return out;
    for (AgentId r : receivers) {
      if (r == sender) continue;
      if (config_.drop_prob > 0.0 && rng.bernoulli(config_.drop_prob)) continue;
      out.push_back({sender, r, velocity, stamp, tick + config_.latency_ticks});
    }
    return out;
  }

  void post(std::span<const VelocityMessage> messages) {
    for (const auto& m : messages) pending_.push_back(m);
  }

  /// Removes and returns everything due for `receiver` at `tick`, ordered by (stamp, sender).
  std::vector<VelocityMessage> deliver(AgentId receiver, long tick) {
    std::vector<VelocityMessage> out;
    std::deque<VelocityMessage> rest;
    for (auto& m : pending_) {
      if (m.receiver == receiver && m.deliver_tick <= tick) {
        out.push_back(m);
      } else {
        rest.push_back(m);
      }
    }
    pending_ = std::move(rest);
    std::stable_sort(out.begin(), out.end(), [](const VelocityMessage& a, const VelocityMessage& b) {
      return a.stamp != b.stamp ? a.stamp < b.stamp : a.sender < b.sender;
    });
    return out;
  }

  bool enabled() const { return config_.enabled; }
  std::size_t pending() const { return pending_.size(); }

 private:
  CommConfig config_;
  std::deque<VelocityMessage> pending_;
};

}  // namespace flock
