#pragma once

// Test-side helpers and independent oracles. Nothing here calls the library
// routine it is meant to check.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "sse/lti.hpp"

namespace sse::testing {

inline MatrixXd random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  MatrixXd M(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) M(i, j) = g(rng);
  }
  return M;
}

/// Random matrix rescaled to the requested spectral radius.
inline MatrixXd random_with_radius(int n, double radius, std::mt19937_64& rng) {
  MatrixXd A = random_matrix(n, n, rng);
  const double r = spectral_radius(A);
  return r > 0.0 ? MatrixXd(A * (radius / r)) : A;
}

/// Random stable system (spectral radius in [0.3, 0.9)).
inline LtiSystem random_stable_system(int n, int l, int m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> radius(0.3, 0.9);
  return LtiSystem(random_with_radius(n, radius(rng), rng), random_matrix(n, l, rng),
                   random_matrix(m, n, rng), random_matrix(m, l, rng));
}

/// X = A X A^T + Q by the Kronecker linear system (I - A (x) A) vec X = vec Q.
inline MatrixXd kronecker_lyapunov(const MatrixXd& A, const MatrixXd& Q) {
  const auto n = A.rows();
  MatrixXd K = MatrixXd::Identity(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) K.block(i * n, j * n, n, n) -= A(i, j) * A;
  }
  const VectorXd q = Eigen::Map<const VectorXd>(Q.data(), n * n);
  const VectorXd x = K.partialPivLu().solve(q);
  return Eigen::Map<const MatrixXd>(x.data(), n, n);
}

/// Filter Riccati recursion P <- A P A^T + Q - A P C^T (C P C^T + R)^-1 C P A^T
/// from P = Q until it stops moving.
inline MatrixXd riccati_recursion(const MatrixXd& A, const MatrixXd& C, const MatrixXd& Q,
                                  const MatrixXd& R, int steps = 200000) {
  MatrixXd P = Q;
  for (int k = 0; k < steps; ++k) {
    const MatrixXd S = C * P * C.transpose() + R;
    const MatrixXd next = A * P * A.transpose() + Q -
                          A * P * C.transpose() * S.inverse() * C * P * A.transpose();
    const double diff = (next - P).norm();
    P = 0.5 * (next + next.transpose());
    if (diff <= 1e-14 * std::max(1.0, P.norm())) break;
  }
  return P;
}

/// Impulse-response taps h(0) = D, h(t) = C A^{t-1} B, t = 1..taps-1.
inline std::vector<MatrixXd> impulse_taps(const LtiSystem& sys, int taps) {
  std::vector<MatrixXd> h;
  h.push_back(sys.D());
  MatrixXd CA = sys.C();
  for (int t = 1; t < taps; ++t) {
    h.push_back(CA * sys.B());
    CA = CA * sys.A();
  }
  return h;
}

/// Output sequence of the system from x(0) = 0.
inline std::vector<VectorXd> drive(const LtiSystem& sys, const std::vector<VectorXd>& w) {
  std::vector<VectorXd> y;
  VectorXd x = VectorXd::Zero(sys.n());
  for (const auto& wt : w) {
    y.push_back(sys.C() * x + sys.D() * wt);
    x = sys.A() * x + sys.B() * wt;
  }
  return y;
}

inline double sum_of_squares_norm(const std::vector<VectorXd>& x) {
  double s = 0.0;
  for (const auto& v : x) s += v.squaredNorm();
  return std::sqrt(s);
}

inline double max_abs_norm(const std::vector<VectorXd>& x) {
  double s = 0.0;
  for (const auto& v : x) {
    for (Eigen::Index i = 0; i < v.size(); ++i) s = std::max(s, std::abs(v(i)));
  }
  return s;
}

inline LtiSystem scalar_system(double a, double b, double c, double d) {
  return LtiSystem(MatrixXd::Constant(1, 1, a), MatrixXd::Constant(1, 1, b),
                   MatrixXd::Constant(1, 1, c), MatrixXd::Constant(1, 1, d));
}

}  // namespace sse::testing
