#pragma once

// Enhanced multi-robot state estimation for the focal UAV: a full lateral
// state filter driven by the commanded velocity, corrected by positions
// derived from observed neighbors and by IMU acceleration, then blended with
// visual-inertial odometry through an adaptive fusion parameter.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "flock/geometry.hpp"
#include "flock/lkf.hpp"
#include "flock/neighbor_tracker.hpp"

namespace flock {

struct MrseConfig {
  double tau = 0.3;                 // [s] velocity time constant of the focal model
  StateVector6 q_diag = (StateVector6() << 1e-3, 1e-3, 2e-2, 2e-2, 0.5, 0.5).finished();
  double sigma_fix = 1.0;           // [m] neighbor-derived position fix noise
  double sigma_accel = 0.3;         // [m/s^2] IMU noise assumed by the filter
  double q_lambda = 0.2;            // [1/s] slew rate of the fusion parameter
  double sigma_fused_position = 0.5;  // [m] static covariance attached to the fused output
  double init_sigma_position = 0.1;
  double init_sigma_velocity = 0.1;
  double init_sigma_acceleration = 0.5;

  void validate() const {
    if (!(tau > 0.0)) throw PreconditionError("mrse: tau must be positive");
    if (!(sigma_fix > 0.0) || !(sigma_accel > 0.0)) throw PreconditionError("mrse: sigmas must be positive");
    if (!(q_lambda > 0.0)) throw PreconditionError("mrse: q_lambda must be positive");
    for (int i = 0; i < 6; ++i) {
      if (!(q_diag(i) >= 0.0)) throw PreconditionError("mrse: q_diag must be non-negative");
    }
  }

  Estimate initial_estimate(const Vec2& position = Vec2::Zero()) const {
    Estimate e;
    e.x.setZero();
    e.x.head<2>() = position;
    const double sp = init_sigma_position * init_sigma_position;
    const double sv = init_sigma_velocity * init_sigma_velocity;
    const double sa = init_sigma_acceleration * init_sigma_acceleration;
    e.P = (StateVector6() << sp, sp, sv, sv, sa, sa).finished().asDiagonal();
    return e;
  }
};

/// Mean of (tracked neighbor position - observed offset) over neighbors that
/// have both a live track and an observation this tick.
inline std::optional<Vec2> mrse_position_fix(std::span<const TrackView> tracks,
                                             std::span<const RelativeObservation> observations,
                                             double observer_heading) {
  Vec2 sum = Vec2::Zero();
  int count = 0;
  for (const auto& obs : observations) {
    auto it = std::find_if(tracks.begin(), tracks.end(), [&](const TrackView& t) { return t.id == obs.observed_id; });
    if (it == tracks.end()) continue;
    sum += it->position - obs.offset(observer_heading);
    ++count;
  }
  if (count == 0) return std::nullopt;
  return sum / count;
}

/// Full-state focal filter.
class FocalEstimator {
 public:
  FocalEstimator() = default;
  FocalEstimator(MrseConfig config, Estimate initial) : config_(config), estimate_(initial) { config_.validate(); }

  /// Predicts with the command as input, then corrects with the position fix
  /// followed by the acceleration measurement.
  const StateVector6& step(const std::optional<Vec2>& fix, const std::optional<Vec2>& accel, const Vec2& command,
                           double dt, double stamp = 0.0) {
    if (!(dt > 0.0)) throw PreconditionError("FocalEstimator::step: dt must be positive");
    if (model_.dt != dt) model_ = LkfModel::focal(dt, config_.tau, config_.q_diag);
    estimate_ = predict(estimate_, model_, command, "mrse");
    if (fix) estimate_ = correct(estimate_, Measurement2::of(Channel::kPosition, *fix, config_.sigma_fix, stamp), "mrse");
    if (accel) {
      estimate_ = correct(estimate_, Measurement2::of(Channel::kAcceleration, *accel, config_.sigma_accel, stamp), "mrse");
    }
    return estimate_.x;
  }

  const Estimate& estimate() const { return estimate_; }
  const StateVector6& state() const { return estimate_.x; }
  const LkfModel& model() const { return model_; }

 private:
  MrseConfig config_;
  Estimate estimate_;
  LkfModel model_;
};

/// Reference estimator that recovers only velocity (from consecutive
/// position fixes, IMU and the command) and integrates it into position.
class VelocityIntegrationEstimator {
 public:
  VelocityIntegrationEstimator() = default;
  VelocityIntegrationEstimator(MrseConfig config, Estimate initial)
      : config_(config), estimate_(initial), position_(initial.x.head<2>()) {
    config_.validate();
  }

  const Vec2& step(const std::optional<Vec2>& fix, const std::optional<Vec2>& accel, const Vec2& command, double dt,
                   double stamp = 0.0) {
    if (!(dt > 0.0)) throw PreconditionError("VelocityIntegrationEstimator::step: dt must be positive");
    if (model_.dt != dt) model_ = LkfModel::focal(dt, config_.tau, config_.q_diag);
    estimate_ = predict(estimate_, model_, command, "velocity-only");
    if (fix && previous_fix_) {
      const double sigma = std::sqrt(2.0) * config_.sigma_fix / dt;
      estimate_ = correct(estimate_, Measurement2::of(Channel::kVelocity, (*fix - *previous_fix_) / dt, sigma, stamp),
                          "velocity-only");
    }
    if (accel) {
      estimate_ = correct(estimate_, Measurement2::of(Channel::kAcceleration, *accel, config_.sigma_accel, stamp),
                          "velocity-only");
    }
    previous_fix_ = fix;
    position_ += estimate_.x.segment<2>(kVx) * dt;
    return position_;
  }

  const Vec2& position() const { return position_; }
  Vec2 velocity() const { return estimate_.x.segment<2>(kVx); }

 private:
  MrseConfig config_;
  Estimate estimate_;
  LkfModel model_;
  Vec2 position_ = Vec2::Zero();
  std::optional<Vec2> previous_fix_;
};

struct VioSample {
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  Vec2 acceleration = Vec2::Zero();
  int feature_count = 0;            // c_f
  int max_features = 150;           // C_f
  std::vector<double> track_ages;   // t_i of the c_f current features [s]
  double average_track_age = 1.0;   // t_A [s]
};

/// Product of the feature-count ratio and the feature-age quality ratio, clamped to [0, 1].
inline double lambda_estimate(const VioSample& vio) {
  if (vio.max_features <= 0) throw PreconditionError("lambda_estimate: max feature count must be positive");
  if (!(vio.average_track_age > 0.0)) return 0.0;
  double age_sum = 0.0;
  for (double t : vio.track_ages) age_sum += t;
  const double cf = static_cast<double>(vio.feature_count);
  const double Cf = static_cast<double>(vio.max_features);
  const double value = cf * age_sum / (vio.average_track_age * Cf * Cf);
  return std::clamp(value, 0.0, 1.0);
}

/// Slews lambda toward the estimate by q*dt per tick, landing exactly on the
/// estimate when it is within one step.
inline double lambda_update(double lambda_prev, double lambda_e, double q, double dt) {
  if (!(q > 0.0)) throw PreconditionError("lambda_update: q must be positive");
  const double slew = q * dt;
  double next;
  if (std::abs(lambda_prev - lambda_e) <= slew) {
    next = lambda_e;
  } else if (lambda_prev > lambda_e) {
    next = lambda_prev - slew;
  } else {
    next = lambda_prev + slew;
  }
  return std::clamp(next, 0.0, 1.0);
}

struct FusionState {
  double lambda = 1.0;
  double lambda_e = 1.0;
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  Vec2 acceleration = Vec2::Zero();
  Vec2 previous_vio_position = Vec2::Zero();
  Vec2 previous_mrse_position = Vec2::Zero();
  bool initialized = false;
};

/// Position advances by the lambda-blend of both sources' increments; velocity
/// and acceleration are lambda-convex combinations.
inline FusionState fuse(const FusionState& state, const VioSample& vio, const StateVector6& mrse, double lambda) {
  lambda = std::clamp(lambda, 0.0, 1.0);
  FusionState out = state;
  out.lambda = lambda;
  const Vec2 p_mrse = mrse.head<2>();
  if (!state.initialized) {
    out.position = lambda * vio.position + (1.0 - lambda) * p_mrse;
    out.initialized = true;
  } else {
    const Vec2 dp_vio = vio.position - state.previous_vio_position;
    const Vec2 dp_mrse = p_mrse - state.previous_mrse_position;
    out.position = state.position + lambda * dp_vio + (1.0 - lambda) * dp_mrse;
  }
  out.velocity = lambda * vio.velocity + (1.0 - lambda) * mrse.segment<2>(kVx);
  out.acceleration = lambda * vio.acceleration + (1.0 - lambda) * mrse.segment<2>(kAx);
  out.previous_vio_position = vio.position;
  out.previous_mrse_position = p_mrse;
  return out;
}

}  // namespace flock
