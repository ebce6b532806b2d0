#pragma once

// Bank of linear Kalman filters, one per observable neighbor, fed by
// relative bearing/range observations and neighbor velocities.

#include <algorithm>
#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "flock/geometry.hpp"
#include "flock/lkf.hpp"

namespace flock {

using AgentId = int;

/// Bearing is measured in the observer's body frame (0 = observer heading).
struct RelativeObservation {
  AgentId observer_id = 0;
  AgentId observed_id = 0;
  double bearing = 0.0;
  double distance = 0.0;
  double stamp = 0.0;

  /// Observed offset expressed with the axes of the observer's local frame.
  Vec2 offset(double observer_heading) const {
    return distance * unit(wrap_angle(bearing + observer_heading));
  }
};

struct Pose2 {
  Vec2 position = Vec2::Zero();
  double heading = 0.0;
};

struct TrackerConfig {
  double sigma_position = 1.5;     // [m] relative-position measurement noise
  double sigma_velocity = 0.3;     // [m/s] communicated velocity noise
  StateVector6 q_diag = (StateVector6() << 1e-3, 1e-3, 1e-2, 1e-2, 0.25, 0.25).finished();
  double drop_after = 2.0;         // [s] staleness beyond which a track is removed
  double init_var_velocity = 25.0;
  double init_var_acceleration = 10.0;
};

struct NeighborTrack {
  AgentId id = 0;
  Estimate estimate;
  double last_pos_stamp = -1.0;
  double last_vel_stamp = -1.0;
  double staleness = 0.0;
};

/// Read-only track summary handed to the controller and velocity estimator.
struct TrackView {
  AgentId id = 0;
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  double staleness = 0.0;
  double last_pos_stamp = -1.0;
};

class TrackBank {
 public:
  TrackBank() = default;
  explicit TrackBank(TrackerConfig config) : config_(config) {}

  const TrackerConfig& config() const { return config_; }

  /// Converts an observation into an absolute position in the observer's local frame.
  static Vec2 observation_to_local(const RelativeObservation& obs, const Pose2& observer) {
    return observer.position + obs.offset(observer.heading);
  }

  /// Returns false when the observation is dropped as out of order.
  bool ingest_position(const RelativeObservation& obs, const Pose2& observer) {
    if (!(obs.distance > 0.0)) throw PreconditionError("ingest_position: distance must be positive");
    const Vec2 z = observation_to_local(obs, observer);
    auto it = tracks_.find(obs.observed_id);
    if (it == tracks_.end()) {
      NeighborTrack t;
      t.id = obs.observed_id;
      t.estimate.x.setZero();
      t.estimate.x.head<2>() = z;
      const double sp = config_.sigma_position * config_.sigma_position;
      t.estimate.P = (StateVector6() << sp, sp, config_.init_var_velocity, config_.init_var_velocity,
                      config_.init_var_acceleration, config_.init_var_acceleration)
                         .finished()
                         .asDiagonal();
      t.last_pos_stamp = obs.stamp;
      tracks_.emplace(t.id, t);
      return true;
    }
    NeighborTrack& t = it->second;
    if (obs.stamp < t.last_pos_stamp) {
      ++dropped_stale_;
      return false;
    }
    t.estimate = correct(t.estimate, Measurement2::of(Channel::kPosition, z, config_.sigma_position, obs.stamp),
                         "track");
    t.last_pos_stamp = obs.stamp;
    t.staleness = 0.0;
    return true;
  }

  /// Applies a tick's observations in ascending observed-id order.
  void ingest_positions(std::span<const RelativeObservation> observations, const Pose2& observer) {
    std::vector<RelativeObservation> sorted(observations.begin(), observations.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
      return a.observed_id != b.observed_id ? a.observed_id < b.observed_id : a.stamp < b.stamp;
    });
    for (const auto& obs : sorted) ingest_position(obs, observer);
  }

  /// Velocity for an unknown id is dropped (counted) and the bank is left unchanged.
  bool ingest_velocity(AgentId id, const Vec2& v, double stamp) {
    return ingest_velocity(id, v, stamp, config_.sigma_velocity);
  }

  bool ingest_velocity(AgentId id, const Vec2& v, double stamp, double sigma) {
    auto it = tracks_.find(id);
    if (it == tracks_.end()) {
      ++dropped_unknown_;
      return false;
    }
    NeighborTrack& t = it->second;
    t.estimate = correct(t.estimate, Measurement2::of(Channel::kVelocity, v, sigma, stamp), "track");
    t.last_vel_stamp = std::max(t.last_vel_stamp, stamp);
    t.staleness = 0.0;
    return true;
  }

  /// Predicts every track forward and drops the ones stale beyond the threshold.
  void step(double dt) {
    if (!(dt > 0.0)) throw PreconditionError("TrackBank::step: dt must be positive");
    if (tracks_.empty()) return;
    if (model_.dt != dt) model_ = LkfModel::constant_acceleration(dt, config_.q_diag);
    for (auto it = tracks_.begin(); it != tracks_.end();) {
      NeighborTrack& t = it->second;
      t.estimate = predict(t.estimate, model_, std::nullopt, "track");
      t.staleness += dt;
      if (t.staleness > config_.drop_after) {
        it = tracks_.erase(it);
      } else {
        ++it;
      }
    }
  }

  /// Sorted by ascending id.
  std::vector<TrackView> snapshot() const {
    std::vector<TrackView> out;
    out.reserve(tracks_.size());
    for (const auto& [id, t] : tracks_) {
      out.push_back({id, t.estimate.x.head<2>(), t.estimate.x.segment<2>(kVx), t.staleness, t.last_pos_stamp});
    }
    return out;
  }

  const NeighborTrack* find(AgentId id) const {
    auto it = tracks_.find(id);
    return it == tracks_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return tracks_.size(); }
  bool empty() const { return tracks_.empty(); }
  std::size_t dropped_stale() const { return dropped_stale_; }
  std::size_t dropped_unknown() const { return dropped_unknown_; }

 private:
  TrackerConfig config_;
  LkfModel model_;
  std::map<AgentId, NeighborTrack> tracks_;
  std::size_t dropped_stale_ = 0;
  std::size_t dropped_unknown_ = 0;
};

}  // namespace flock
