#pragma once

// Linear Kalman filter over the 6-dimensional lateral state
// (x, y, vx, vy, ax, ay) with 2-dimensional measurements.

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>

#include "flock/errors.hpp"
#include "flock/geometry.hpp"

namespace flock {

using StateVector6 = Eigen::Matrix<double, 6, 1>;
using Matrix6 = Eigen::Matrix<double, 6, 6>;
using Covariance6 = Matrix6;
using InputMatrix = Eigen::Matrix<double, 6, 2>;
using MeasurementMatrix = Eigen::Matrix<double, 2, 6>;
using Matrix2 = Eigen::Matrix2d;

/// Index layout of the lateral state.
enum StateIndex : int { kX = 0, kY = 1, kVx = 2, kVy = 3, kAx = 4, kAy = 5 };

struct Estimate {
  StateVector6 x = StateVector6::Zero();
  Covariance6 P = Covariance6::Identity();
};

struct LkfModel {
  Matrix6 A = Matrix6::Identity();
  InputMatrix B = InputMatrix::Zero();
  Covariance6 Q = Covariance6::Zero();
  double dt = 0.0;

  bool has_input() const { return !B.isZero(0.0); }

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw PreconditionError("LkfModel: dt must be positive");
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 6; ++c) {
        if (r != c && Q(r, c) != 0.0) throw PreconditionError("LkfModel: Q must be diagonal");
      }
      if (!(Q(r, r) >= 0.0)) throw PreconditionError("LkfModel: Q diagonal must be non-negative");
    }
    if (!A.allFinite() || !B.allFinite()) throw PreconditionError("LkfModel: non-finite A or B");
  }

  /// Decoupled constant-acceleration point mass used for observed neighbors.
  static LkfModel constant_acceleration(double dt, const StateVector6& q_diag) {
    LkfModel m;
    m.dt = dt;
    m.A = Matrix6::Identity();
    m.A(kX, kVx) = dt;
    m.A(kY, kVy) = dt;
    m.A(kX, kAx) = 0.5 * dt * dt;
    m.A(kY, kAy) = 0.5 * dt * dt;
    m.A(kVx, kAx) = dt;
    m.A(kVy, kAy) = dt;
    m.Q = q_diag.asDiagonal();
    m.validate();
    return m;
  }

  /// Focal-vehicle model: the velocity relaxes toward the commanded velocity
  /// with time constant tau, driven through B.
  static LkfModel focal(double dt, double tau, const StateVector6& q_diag) {
    if (!(tau > 0.0)) throw PreconditionError("focal model: tau must be positive");
    LkfModel m = constant_acceleration(dt, q_diag);
    const double decay = std::exp(-dt / tau);
    m.A(kVx, kVx) = decay;
    m.A(kVy, kVy) = decay;
    m.B.setZero();
    m.B(kVx, 0) = 1.0 - decay;
    m.B(kVy, 1) = 1.0 - decay;
    return m;
  }
};

enum class Channel { kPosition, kVelocity, kAcceleration };

/// 2x6 selection matrix; exactly one unit entry per row.
inline MeasurementMatrix selection_matrix(Channel ch) {
  MeasurementMatrix H = MeasurementMatrix::Zero();
  const int offset = ch == Channel::kPosition ? kX : ch == Channel::kVelocity ? kVx : kAx;
  H(0, offset) = 1.0;
  H(1, offset + 1) = 1.0;
  return H;
}

struct Measurement2 {
  Vec2 z = Vec2::Zero();
  MeasurementMatrix H = MeasurementMatrix::Zero();
  Matrix2 R = Matrix2::Identity();
  double stamp = 0.0;

  static Measurement2 of(Channel ch, const Vec2& z, double sigma, double stamp) {
    return {z, selection_matrix(ch), Matrix2::Identity() * (sigma * sigma), stamp};
  }

  void validate() const {
    for (int r = 0; r < 2; ++r) {
      int nonzero = 0;
      bool unit_entry = false;
      for (int c = 0; c < 6; ++c) {
        if (H(r, c) != 0.0) {
          ++nonzero;
          unit_entry = H(r, c) == 1.0;
        }
      }
      if (nonzero != 1 || !unit_entry) {
        throw PreconditionError("Measurement2: each row of H needs exactly one entry equal to 1");
      }
    }
    if (std::abs(R(0, 1) - R(1, 0)) > 1e-12 * (1.0 + R.cwiseAbs().maxCoeff()) ||
        Eigen::LLT<Matrix2>(R).info() != Eigen::Success) {
      throw PreconditionError("Measurement2: R must be symmetric positive definite");
    }
    if (!all_finite(z)) throw PreconditionError("Measurement2: non-finite z");
  }
};

namespace detail {

inline void symmetrize(Covariance6& P) { P = 0.5 * (P + P.transpose()).eval(); }

inline void check_finite(const Estimate& e, std::string_view tag, const char* stage) {
  if (!e.x.allFinite() || !e.P.allFinite()) {
    throw NumericalFault(std::string(tag), std::string("non-finite ") + stage + " result");
  }
}

}  // namespace detail

/// x' = A x + B u, P' = A P A^T + Q.
inline Estimate predict(const Estimate& in, const LkfModel& model,
                        const std::optional<Vec2>& input = std::nullopt,
                        std::string_view tag = "lkf") {
  if (input.has_value() != model.has_input()) {
    throw PreconditionError("predict: input must be given exactly when B is nonzero");
  }
  detail::check_finite(in, tag, "input");
  Estimate out;
  out.x = model.A * in.x;
  if (input) out.x += model.B * *input;
  out.P = model.A * in.P * model.A.transpose() + model.Q;
  detail::symmetrize(out.P);
  detail::check_finite(out, tag, "prediction");
  return out;
}

/// Kalman correction with the simple covariance form P - K H P.
inline Estimate correct(const Estimate& in, const Measurement2& meas, std::string_view tag = "lkf") {
  meas.validate();
  detail::check_finite(in, tag, "input");
  const MeasurementMatrix& H = meas.H;
  const Matrix2 S = H * in.P * H.transpose() + meas.R;
  Eigen::FullPivLU<Matrix2> lu(S);
  if (!lu.isInvertible() || !S.allFinite()) {
    throw NumericalFault(std::string(tag), "singular innovation covariance");
  }
  const Eigen::Matrix<double, 6, 2> K = in.P * H.transpose() * S.inverse();
  Estimate out;
  out.x = in.x + K * (meas.z - H * in.x);
  out.P = in.P - K * H * in.P;
  detail::symmetrize(out.P);
  detail::check_finite(out, tag, "correction");
  return out;
}

/// Normalized estimation error squared e^T P^-1 e.
inline double nees(const StateVector6& estimate, const Covariance6& P, const StateVector6& truth) {
  Eigen::FullPivLU<Covariance6> lu(P);
  if (!lu.isInvertible()) throw NumericalFault("nees", "singular covariance");
  const StateVector6 e = estimate - truth;
  const double value = e.dot(lu.solve(e));
  if (!std::isfinite(value)) throw NumericalFault("nees", "non-finite value");
  return std::max(0.0, value);
}

/// NEES restricted to a 2-dimensional channel (position, velocity or acceleration).
inline double nees(const Vec2& estimate, const Matrix2& P, const Vec2& truth) {
  Eigen::FullPivLU<Matrix2> lu(P);
  if (!lu.isInvertible()) throw NumericalFault("nees", "singular covariance");
  const Vec2 e = estimate - truth;
  return std::max(0.0, e.dot(lu.solve(e)));
}

}  // namespace flock
