#pragma once

// State-feedback flocking law with group-velocity feedforward.
//
// All vectors are expressed with the axes of the focal UAV's local frame and
// are relative to the focal UAV (the origin).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "flock/geometry.hpp"
#include "flock/lkf.hpp"
#include "flock/neighbor_tracker.hpp"

namespace flock {

/// Id used when the target is appended to a neighborhood.
inline constexpr AgentId kTargetId = -1;

struct ControllerGains {
  double k_p = 0.5;                   // [1/s]
  double k_v = 0.3;                   // [-]
  double v_D = 5.0;                   // [m/s] maximal group speed
  double d_min = 15.0;                // [m]
  double d_max = 40.0;                // [m]
  double d_des = 13.0;                // [m]
  double theta_tri = kPi / 3.0;       // [rad] pairing threshold on bearing separation
  double theta_scale = kPi / 4.0;     // [rad] weight decay scale
  double pair_distance_tolerance = 2.0;  // [m] max range difference for a triangle pair
  std::size_t n_max = 4;
  double v_max_factor = 1.2;          // output clamp as a multiple of v_D
  double rdot_cutoff_hz = 2.0;

  double v_max() const { return v_max_factor * v_D; }

  void validate() const {
    if (!(k_p > 0.0) || !(k_v > 0.0)) throw PreconditionError("gains: k_p and k_v must be positive");
    if (!(d_min > 0.0) || !(d_min < d_max)) throw PreconditionError("gains: require 0 < d_min < d_max");
    if (!(v_D > 0.0)) throw PreconditionError("gains: v_D must be positive");
    if (!(d_des > 0.0)) throw PreconditionError("gains: d_des must be positive");
    if (!(theta_tri > 0.0) || !(theta_scale > 0.0)) throw PreconditionError("gains: angles must be positive");
    if (!(pair_distance_tolerance > 0.0)) throw PreconditionError("gains: pair_distance_tolerance must be positive");
    if (n_max == 0) throw PreconditionError("gains: n_max must be at least 1");
    if (!(v_max_factor >= 1.0)) throw PreconditionError("gains: v_max_factor must be >= 1");
    if (!(rdot_cutoff_hz > 0.0)) throw PreconditionError("gains: rdot_cutoff_hz must be positive");
  }
};

/// One member of a neighborhood: bearing in the local-frame axes, distance, relative velocity.
struct NeighborMember {
  AgentId id = 0;
  double bearing = 0.0;
  double distance = 0.0;
  Vec2 rel_velocity = Vec2::Zero();

  Vec2 offset() const { return distance * unit(bearing); }

  static NeighborMember from_offset(AgentId id, const Vec2& offset, const Vec2& rel_velocity = Vec2::Zero()) {
    return {id, bearing_of(offset), offset.norm(), rel_velocity};
  }
};

using Neighborhood = std::vector<NeighborMember>;

struct FlockingCommand {
  Vec2 v_d = Vec2::Zero();
  Vec2 position_term = Vec2::Zero();
  Vec2 velocity_term = Vec2::Zero();
  Vec2 feedforward = Vec2::Zero();
  Vec2 r_d = Vec2::Zero();
  double heading = 0.0;
  bool saturated = false;
};

/// Nearest n_max members by distance, ties broken by ascending id.
inline Neighborhood select_neighbors(std::span<const NeighborMember> surroundings, std::size_t n_max) {
  Neighborhood sorted(surroundings.begin(), surroundings.end());
  std::sort(sorted.begin(), sorted.end(), [](const NeighborMember& a, const NeighborMember& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
  });
  if (sorted.size() > n_max) sorted.resize(n_max);
  return sorted;
}

/// Relative tracks seen from a pose; distances of zero are skipped.
inline std::vector<NeighborMember> to_members(std::span<const TrackView> tracks, const Vec2& own_position,
                                              const Vec2& own_velocity = Vec2::Zero()) {
  std::vector<NeighborMember> out;
  out.reserve(tracks.size());
  for (const auto& t : tracks) {
    const Vec2 offset = t.position - own_position;
    if (offset.norm() <= 0.0) continue;
    out.push_back(NeighborMember::from_offset(t.id, offset, t.velocity - own_velocity));
  }
  return out;
}

/// Center of the neighborhood; the focal UAV's own position (origin) when empty.
inline Vec2 geometric_center(std::span<const NeighborMember> members) {
  if (members.empty()) return Vec2::Zero();
  Vec2 sum = Vec2::Zero();
  for (const auto& m : members) sum += m.offset();
  return sum / static_cast<double>(members.size());
}

/// Angle of the center-to-goal line; empty when the two coincide.
inline std::optional<double> group_heading(const Vec2& center, const Vec2& goal) {
  const Vec2 d = goal - center;
  if (d.norm() <= 1e-9) return std::nullopt;
  return wrap_angle(bearing_of(d));
}

/// Normalized exp(-theta_i / theta_scale) with theta_i = |wrap(phi_i - psi)|.
inline std::vector<double> weights(std::span<const double> bearings, double psi, double theta_scale) {
  if (bearings.empty()) throw PreconditionError("weights: at least one bearing required");
  std::vector<double> w(bearings.size());
  // Shift by the smallest angle so the largest exponent is exactly zero.
  double theta_min = kPi;
  for (double b : bearings) theta_min = std::min(theta_min, angular_distance(b, psi));
  double total = 0.0;
  for (std::size_t i = 0; i < bearings.size(); ++i) {
    w[i] = std::exp(-(angular_distance(bearings[i], psi) - theta_min) / theta_scale);
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

namespace detail {

/// Apex of the triangle with side d_des on the pair, on the focal UAV's side of the pair axis.
inline Vec2 triangle_apex(const Vec2& a, const Vec2& b, double d_des) {
  const Vec2 mid = 0.5 * (a + b);
  const Vec2 axis = b - a;
  const double s = axis.norm();
  if (s <= 0.0) return mid - d_des * mid.normalized();
  Vec2 normal(-axis.y() / s, axis.x() / s);
  if (normal.dot(-mid) < 0.0) normal = -normal;

  const double half = 0.5 * s;
  const double h = half < d_des ? std::sqrt(d_des * d_des - half * half) : 0.0;
  return mid + h * normal;
}

/// Greedy pairing of members whose bearing separation is below theta_tri and
/// whose ranges differ by less than range_tol, closest separations first.
/// Returns partner index or -1 per member.
inline std::vector<int> pair_members(std::span<const NeighborMember> members, double theta_tri,
                                     double range_tol) {
  struct Candidate {
    double separation;
    std::size_t i, j;
  };
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < members.size(); ++i) {
    for (std::size_t j = i + 1; j < members.size(); ++j) {
      const double sep = angular_distance(members[i].bearing, members[j].bearing);
      const double dd = std::abs(members[i].distance - members[j].distance);
      if (sep < theta_tri && dd < range_tol) candidates.push_back({sep, i, j});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.separation < b.separation; });
  std::vector<int> partner(members.size(), -1);
  for (const auto& c : candidates) {
    if (partner[c.i] < 0 && partner[c.j] < 0) {
      partner[c.i] = static_cast<int>(c.j);
      partner[c.j] = static_cast<int>(c.i);
    }
  }
  return partner;
}

}  // namespace detail

/// Desired position of the focal UAV relative to itself for one member.
/// Paired members share the triangle apex; isolated members pull to d_des
/// along the line of sight.
inline std::vector<Vec2> formation_offsets(std::span<const NeighborMember> members, const ControllerGains& gains) {
  const auto partner = detail::pair_members(members, gains.theta_tri, gains.pair_distance_tolerance);
  std::vector<Vec2> g(members.size());
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (partner[i] >= 0) {
      const auto& other = members[static_cast<std::size_t>(partner[i])];
      // Order the pair by index so both members get bitwise-identical apexes.
      const bool first = i < static_cast<std::size_t>(partner[i]);
      g[i] = first ? detail::triangle_apex(members[i].offset(), other.offset(), gains.d_des)
                   : detail::triangle_apex(other.offset(), members[i].offset(), gains.d_des);
    } else {
      g[i] = unit(members[i].bearing) * (members[i].distance - gains.d_des);
    }
  }
  return g;
}

inline Vec2 desired_position(std::span<const NeighborMember> members, double psi, const ControllerGains& gains) {
  if (members.empty()) return Vec2::Zero();
  std::vector<double> bearings;
  bearings.reserve(members.size());
  for (const auto& m : members) bearings.push_back(m.bearing);
  const auto w = weights(bearings, psi, gains.theta_scale);
  const auto g = formation_offsets(members, gains);
  Vec2 r = Vec2::Zero();
  for (std::size_t i = 0; i < members.size(); ++i) r += w[i] * g[i];
  return r;
}

/// Magnitude of the group-velocity feedforward for a target distance.
inline double group_speed(double target_distance, const ControllerGains& gains) {
  if (target_distance <= gains.d_min) return 0.0;
  if (target_distance > gains.d_max) return gains.v_D;
  return gains.v_D * (target_distance - gains.d_min) / (gains.d_max - gains.d_min);
}

inline Vec2 group_velocity(const Vec2& r_target, double psi, const ControllerGains& gains) {
  return group_speed(r_target.norm(), gains) * unit(psi);
}

/// Neighborhood used by the formation term: the target joins once within d_min.
inline Neighborhood formation_members(std::span<const NeighborMember> neighborhood,
                                      const std::optional<Vec2>& r_target, const ControllerGains& gains) {
  Neighborhood members(neighborhood.begin(), neighborhood.end());
  if (r_target) {
    const double dist = r_target->norm();
    if (dist <= gains.d_min && dist > 0.0) members.push_back(NeighborMember::from_offset(kTargetId, *r_target));
  }
  return members;
}

/// v_d = k_p r_d + k_v rdot_d + v_G, clamped to v_max. Without a target the
/// feedforward is zero.
inline FlockingCommand compute_command(std::span<const NeighborMember> neighborhood, double psi,
                                       const std::optional<Vec2>& r_target, const Vec2& rdot_d,
                                       const ControllerGains& gains) {
  FlockingCommand cmd;
  const auto members = formation_members(neighborhood, r_target, gains);
  cmd.r_d = desired_position(members, psi, gains);
  cmd.heading = psi;
  cmd.position_term = gains.k_p * cmd.r_d;
  cmd.velocity_term = gains.k_v * rdot_d;
  cmd.feedforward = r_target ? group_velocity(*r_target, psi, gains) : Vec2::Zero();
  cmd.v_d = cmd.position_term + cmd.velocity_term + cmd.feedforward;
  const double norm = cmd.v_d.norm();
  if (norm > gains.v_max()) {
    cmd.v_d *= gains.v_max() / norm;
    cmd.saturated = true;
  }
  return cmd;
}

inline FlockingCommand compute_command(std::span<const NeighborMember> neighborhood, double psi, const Vec2& r_target,
                                       const Vec2& rdot_d, const ControllerGains& gains) {
  return compute_command(neighborhood, psi, std::optional<Vec2>(r_target), rdot_d, gains);
}

/// Per-agent controller holding one tick of memory: previous r_d, filtered
/// derivative of r_d, and the last valid group heading.
class FlockingController {
 public:
  FlockingController() = default;
  explicit FlockingController(ControllerGains gains, double initial_heading = 0.0)
      : gains_(gains), heading_(initial_heading) {
    gains_.validate();
  }

  const ControllerGains& gains() const { return gains_; }
  double heading() const { return heading_; }
  const Neighborhood& neighborhood() const { return neighborhood_; }

  /// `surroundings` and `r_target` are relative to the focal UAV. Without a
  /// target the group heading holds its last value.
  FlockingCommand update(std::span<const NeighborMember> surroundings, const std::optional<Vec2>& r_target,
                         double dt) {
    if (!(dt > 0.0)) throw PreconditionError("FlockingController: dt must be positive");
    neighborhood_ = select_neighbors(surroundings, gains_.n_max);
    if (r_target) {
      if (auto psi = group_heading(geometric_center(neighborhood_), *r_target)) heading_ = *psi;
    }

    const auto members = formation_members(neighborhood_, r_target, gains_);
    const Vec2 r_d = desired_position(members, heading_, gains_);
    if (has_previous_) {
      const Vec2 raw = (r_d - previous_r_d_) / dt;
      const double rc = 1.0 / (2.0 * kPi * gains_.rdot_cutoff_hz);
      const double alpha = dt / (dt + rc);
      rdot_filtered_ += alpha * (raw - rdot_filtered_);
    }
    previous_r_d_ = r_d;
    has_previous_ = true;
    return compute_command(neighborhood_, heading_, r_target, rdot_filtered_, gains_);
  }

  Vec2 rdot() const { return rdot_filtered_; }

 private:
  ControllerGains gains_;
  double heading_ = 0.0;
  Neighborhood neighborhood_;
  Vec2 previous_r_d_ = Vec2::Zero();
  Vec2 rdot_filtered_ = Vec2::Zero();
  bool has_previous_ = false;
};

}  // namespace flock
