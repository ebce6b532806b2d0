#pragma once

// Textbook Kalman recursion on plain row-major arrays. Deliberately shares no
// code with the library so it can serve as a reference.

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

struct Dense {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;

  Dense() = default;
  Dense(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return a[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return a[r * cols + c]; }

  static Dense identity(std::size_t n) {
    Dense m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

inline Dense mul(const Dense& x, const Dense& y) {
  Dense out(x.rows, y.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < y.cols; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < x.cols; ++k) s += x(i, k) * y(k, j);
      out(i, j) = s;
    }
  return out;
}

inline Dense add(const Dense& x, const Dense& y, double sign = 1.0) {
  Dense out = x;
  for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] += sign * y.a[i];
  return out;
}

inline Dense transpose(const Dense& x) {
  Dense out(x.cols, x.rows);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) out(j, i) = x(i, j);
  return out;
}

inline Dense inverse2(const Dense& s) {
  const double det = s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0);
  Dense out(2, 2);
  out(0, 0) = s(1, 1) / det;
  out(0, 1) = -s(0, 1) / det;
  out(1, 0) = -s(1, 0) / det;
  out(1, 1) = s(0, 0) / det;
  return out;
}

inline void symmetrize(Dense& p) {
  for (std::size_t i = 0; i < p.rows; ++i)
    for (std::size_t j = i + 1; j < p.cols; ++j) {
      const double m = 0.5 * (p(i, j) + p(j, i));
      p(i, j) = m;
      p(j, i) = m;
    }
}

struct Filter {
  Dense x{6, 1};
  Dense P{6, 6};

  void predict(const Dense& A, const Dense& Q) {
    x = mul(A, x);
    P = add(mul(mul(A, P), transpose(A)), Q);
    symmetrize(P);
  }

  void predict(const Dense& A, const Dense& B, const std::array<double, 2>& u, const Dense& Q) {
    Dense uu(2, 1);
    uu(0, 0) = u[0];
    uu(1, 0) = u[1];
    x = add(mul(A, x), mul(B, uu));
    P = add(mul(mul(A, P), transpose(A)), Q);
    symmetrize(P);
  }

  /// `offset` selects the measured pair: 0 position, 2 velocity, 4 acceleration.
  void correct(std::size_t offset, const std::array<double, 2>& z, double sigma) {
    Dense H(2, 6);
    H(0, offset) = 1.0;
    H(1, offset + 1) = 1.0;
    Dense R(2, 2);
    R(0, 0) = R(1, 1) = sigma * sigma;
    const Dense Ht = transpose(H);
    const Dense S = add(mul(mul(H, P), Ht), R);
    const Dense K = mul(mul(P, Ht), inverse2(S));
    Dense zz(2, 1);
    zz(0, 0) = z[0];
    zz(1, 0) = z[1];
    x = add(x, mul(K, add(zz, mul(H, x), -1.0)));
    P = add(P, mul(mul(K, H), P), -1.0);
    symmetrize(P);
  }
};

/// Constant-acceleration transition; with tau > 0 the velocity decays
/// toward the input instead (focal model).
inline Dense transition(double dt, double tau = 0.0) {
  Dense A = Dense::identity(6);
  A(0, 2) = A(1, 3) = dt;
  A(0, 4) = A(1, 5) = 0.5 * dt * dt;
  A(2, 4) = A(3, 5) = dt;
  if (tau > 0.0) A(2, 2) = A(3, 3) = std::exp(-dt / tau);
  return A;
}

inline Dense input_matrix(double dt, double tau) {
  Dense B(6, 2);
  B(2, 0) = B(3, 1) = 1.0 - std::exp(-dt / tau);
  return B;
}

inline Dense diagonal(const std::array<double, 6>& d) {
  Dense m(6, 6);
  for (std::size_t i = 0; i < 6; ++i) m(i, i) = d[i];
  return m;
}

}  // namespace oracle
