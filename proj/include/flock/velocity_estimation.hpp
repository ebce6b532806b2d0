#pragma once

// Communication-less estimation of observed UAVs' velocities: the focal UAV
// replays the shared flocking law from each observed UAV's estimated
// viewpoint and passes the resulting desired velocity through a fitted
// first-order response model v_e(k+1) = q1 v_e(k) + q2 v_d(k+1).

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "flock/errors.hpp"
#include "flock/flocking_controller.hpp"
#include "flock/geometry.hpp"
#include "flock/neighbor_tracker.hpp"

namespace flock {

struct ResponseModel {
  double q1 = 0.0;
  double q2 = 0.0;
  double residual_norm = 0.0;
  bool fitted = false;

  static ResponseModel with(double q1, double q2) { return {q1, q2, 0.0, true}; }

  /// Declared plausibility bounds 0 < q1 < 1, q2 > 0.
  bool plausible() const { return q1 > 0.0 && q1 < 1.0 && q2 > 0.0; }

  Vec2 advance(const Vec2& v_e, const Vec2& v_d_next) const { return q1 * v_e + q2 * v_d_next; }
};

/// One training step: estimated velocity at k, desired velocity at k+1, estimated velocity at k+1.
struct ResponseSample {
  Vec2 v_e = Vec2::Zero();
  Vec2 v_d_next = Vec2::Zero();
  Vec2 v_e_next = Vec2::Zero();
};

/// Least-squares fit of (q1, q2); both velocity components contribute one row each.
inline ResponseModel fit_response_model(std::span<const ResponseSample> samples) {
  const Eigen::Index rows = static_cast<Eigen::Index>(2 * samples.size());
  Eigen::MatrixX2d M(rows, 2);
  Eigen::VectorXd y(rows);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    for (int c = 0; c < 2; ++c) {
      const auto r = static_cast<Eigen::Index>(2 * k + static_cast<std::size_t>(c));
      M(r, 0) = samples[k].v_e(c);
      M(r, 1) = samples[k].v_d_next(c);
      y(r) = samples[k].v_e_next(c);
    }
  }
  if (rows < 2) throw FitFailure("fit_response_model: need at least two independent rows");
  Eigen::ColPivHouseholderQR<Eigen::MatrixX2d> qr(M);
  qr.setThreshold(1e-10);
  if (qr.rank() < 2) throw FitFailure("fit_response_model: rank-deficient training data");
  const Eigen::Vector2d q = qr.solve(y);
  ResponseModel model;
  model.q1 = q(0);
  model.q2 = q(1);
  model.residual_norm = (M * q - y).norm();
  model.fitted = true;
  return model;
}

/// What the focal UAV assumes an observed UAV can perceive.
struct ViewConfig {
  double max_range = 60.0;           // [m]
  double fov = 2.0 * kPi - 40.0 * kPi / 180.0;
  std::size_t n_max = 4;
  double min_speed_for_heading = 0.5;  // [m/s] below this the fallback heading is used
};

/// Heading of an observed UAV: direction of its tracked velocity, or the fallback.
inline double estimated_heading(const TrackView& track, double fallback, double min_speed) {
  return track.velocity.norm() >= min_speed ? bearing_of(track.velocity) : fallback;
}

inline bool within_view(const Vec2& offset, double heading, const ViewConfig& view) {
  const double d = offset.norm();
  if (!(d > 0.0) || d > view.max_range) return false;
  return angular_distance(bearing_of(offset), heading) <= 0.5 * view.fov;
}

/// Neighborhood of observed UAV `target` as believed by the focal UAV, with
/// offsets relative to that UAV. The focal UAV is a candidate when
/// `include_focal` holds (the observed UAV is one of the focal's neighbors).
inline Neighborhood estimate_neighbor_neighborhood(std::span<const TrackView> surroundings, AgentId target,
                                                   const Vec2& focal_position, AgentId focal_id, bool include_focal,
                                                   double fallback_heading, const ViewConfig& view) {
  auto self = std::find_if(surroundings.begin(), surroundings.end(), [&](const TrackView& t) { return t.id == target; });
  if (self == surroundings.end()) throw PreconditionError("estimate_neighbor_neighborhood: unknown observed UAV");
  const double heading = estimated_heading(*self, fallback_heading, view.min_speed_for_heading);
  std::vector<NeighborMember> candidates;
  for (const auto& t : surroundings) {
    if (t.id == target) continue;
    const Vec2 offset = t.position - self->position;
    if (within_view(offset, heading, view)) {
      candidates.push_back(NeighborMember::from_offset(t.id, offset, t.velocity - self->velocity));
    }
  }
  if (include_focal) {
    const Vec2 offset = focal_position - self->position;
    if (within_view(offset, heading, view)) candidates.push_back(NeighborMember::from_offset(focal_id, offset));
  }
  return select_neighbors(candidates, view.n_max);
}

/// Memory the replay keeps per observed UAV between ticks.
struct ReplayState {
  Vec2 v_e = Vec2::Zero();
  Vec2 previous_r_d = Vec2::Zero();
  Vec2 rdot = Vec2::Zero();
  double heading = 0.0;
  bool has_previous = false;
};

struct NeighborVelocityEstimate {
  AgentId id = 0;
  Vec2 v_d = Vec2::Zero();
  Vec2 v_e = Vec2::Zero();
};

struct VelocityEstimationInput {
  std::span<const TrackView> surroundings;   // currently observed UAVs (positions in the focal local frame)
  std::span<const AgentId> neighborhood;     // ids in the focal UAV's neighborhood
  AgentId focal_id = 0;
  Vec2 focal_position = Vec2::Zero();
  std::optional<Vec2> r_target;              // target relative to the focal UAV, if any
  double focal_heading = 0.0;                // group heading of the focal UAV, fallback for unknown headings
  double dt = 0.1;
};

struct VelocityEstimationResult {
  std::vector<NeighborVelocityEstimate> estimates;  // ascending id
  std::map<AgentId, ReplayState> state;
};

/// One pass of the replay over all observed UAVs. Pure: the output depends
/// only on the arguments.
inline VelocityEstimationResult estimate_velocities(const VelocityEstimationInput& in, const ResponseModel& model,
                                                    const ControllerGains& gains, const ViewConfig& view,
                                                    const std::map<AgentId, ReplayState>& previous) {
  if (!model.fitted) throw ConfigError("estimate_velocities: response model has not been fitted");
  if (!(in.dt > 0.0)) throw PreconditionError("estimate_velocities: dt must be positive");
  std::vector<TrackView> observed(in.surroundings.begin(), in.surroundings.end());
  std::sort(observed.begin(), observed.end(), [](const TrackView& a, const TrackView& b) { return a.id < b.id; });

  VelocityEstimationResult result;
  const double rc = 1.0 / (2.0 * kPi * gains.rdot_cutoff_hz);
  const double alpha = in.dt / (in.dt + rc);
  for (const auto& track : observed) {
    ReplayState st;
    if (auto it = previous.find(track.id); it != previous.end()) {
      st = it->second;
    } else {
      st.v_e = track.velocity;
      st.heading = in.focal_heading;
    }
    const bool is_neighbor =
        std::find(in.neighborhood.begin(), in.neighborhood.end(), track.id) != in.neighborhood.end();
    const Neighborhood view_members = estimate_neighbor_neighborhood(observed, track.id, in.focal_position, in.focal_id,
                                                                     is_neighbor, in.focal_heading, view);
    std::optional<Vec2> r_target;
    if (in.r_target) {
      r_target = *in.r_target - (track.position - in.focal_position);
      if (auto psi = group_heading(geometric_center(view_members), *r_target)) st.heading = *psi;
    }

    const auto members = formation_members(view_members, r_target, gains);
    const Vec2 r_d = desired_position(members, st.heading, gains);
    if (st.has_previous) st.rdot += alpha * ((r_d - st.previous_r_d) / in.dt - st.rdot);
    st.previous_r_d = r_d;
    st.has_previous = true;

    const FlockingCommand cmd = compute_command(view_members, st.heading, r_target, st.rdot, gains);
    st.v_e = model.advance(st.v_e, cmd.v_d);
    result.estimates.push_back({track.id, cmd.v_d, st.v_e});
    result.state.emplace(track.id, st);
  }
  return result;
}

/// Stateful wrapper owned by one focal agent.
class CommlessVelocityEstimator {
 public:
  CommlessVelocityEstimator() = default;
  CommlessVelocityEstimator(ResponseModel model, ControllerGains gains, ViewConfig view)
      : model_(model), gains_(gains), view_(view) {}

  const std::vector<NeighborVelocityEstimate>& update(const VelocityEstimationInput& in) {
    auto result = estimate_velocities(in, model_, gains_, view_, state_);
    state_ = std::move(result.state);
    last_ = std::move(result.estimates);
    return last_;
  }

  const std::vector<NeighborVelocityEstimate>& last() const { return last_; }
  const ResponseModel& model() const { return model_; }

 private:
  ResponseModel model_;
  ControllerGains gains_;
  ViewConfig view_;
  std::map<AgentId, ReplayState> state_;
  std::vector<NeighborVelocityEstimate> last_;
};

}  // namespace flock
