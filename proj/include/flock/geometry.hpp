#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Core>

namespace flock {

using Vec2 = Eigen::Vector2d;

inline constexpr double kPi = std::numbers::pi;

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

inline Vec2 unit(double angle) { return {std::cos(angle), std::sin(angle)}; }

inline Vec2 rotate(const Vec2& v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

inline double bearing_of(const Vec2& v) { return std::atan2(v.y(), v.x()); }

/// Absolute angular separation in [0, pi].
inline double angular_distance(double a, double b) { return std::abs(wrap_angle(a - b)); }

inline bool all_finite(const Vec2& v) { return std::isfinite(v.x()) && std::isfinite(v.y()); }

}  // namespace flock
