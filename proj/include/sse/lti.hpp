#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "sse/errors.hpp"

namespace sse {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Eigenvalues within this distance of the unit circle count as unstable.
inline constexpr double kStabilityMargin = 1e-9;
/// Singular values below this fraction of the largest count as zero.
inline constexpr double kRankTolerance = 1e-8;
inline constexpr int kDareIterationCap = 10'000;
inline constexpr double kDareResidualTolerance = 1e-9;
inline constexpr double kLyapunovResidualTolerance = 1e-10;

namespace internal {

inline bool all_finite(const Eigen::Ref<const MatrixXd>& M) {
  return M.size() == 0 || M.allFinite();
}

inline void require_square(const Eigen::Ref<const MatrixXd>& M,
                           const char* who) {
  if (M.rows() != M.cols()) {
    throw DimensionError(std::string(who) + ": matrix must be square, got " +
                         std::to_string(M.rows()) + "x" +
                         std::to_string(M.cols()));
  }
  if (!all_finite(M)) {
    throw DimensionError(std::string(who) + ": matrix has non-finite entries");
  }
}

inline double relative_residual(const MatrixXd& residual,
                                 const MatrixXd& reference) {
  const double scale = reference.norm();
  const double r = residual.norm();
  return scale > 0.0 ? r / scale : r;
}

}  // namespace internal

/// A set of sensor indices, 1-based and strictly increasing.
class SensorSet {
 public:
  SensorSet() = default;

  explicit SensorSet(std::vector<int> indices) : indices_(std::move(indices)) {
    for (std::size_t k = 0; k < indices_.size(); ++k) {
      if (indices_[k] < 1) {
        throw DimensionError("SensorSet: indices are 1-based, got " +
                             std::to_string(indices_[k]));
      }
      if (k > 0 && indices_[k] <= indices_[k - 1]) {
        throw DimensionError(
            "SensorSet: indices must be strictly increasing without "
            "duplicates");
      }
    }
  }

  /// Builds a set from arbitrary order, removing nothing: duplicates throw.
  static SensorSet from_unsorted(std::vector<int> indices) {
    std::sort(indices.begin(), indices.end());
    return SensorSet(std::move(indices));
  }

  static SensorSet full(int m) {
    std::vector<int> all(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) all[static_cast<std::size_t>(i)] = i + 1;
    return SensorSet(std::move(all));
  }

  const std::vector<int>& indices() const { return indices_; }
  int size() const { return static_cast<int>(indices_.size()); }
  bool empty() const { return indices_.empty(); }
  int max_index() const { return indices_.empty() ? 0 : indices_.back(); }

  bool contains(int index) const {
    return std::binary_search(indices_.begin(), indices_.end(), index);
  }

  bool is_subset_of(const SensorSet& other) const {
    return std::includes(other.indices_.begin(), other.indices_.end(),
                         indices_.begin(), indices_.end());
  }

  SensorSet intersect(const SensorSet& other) const {
    std::vector<int> out;
    std::set_intersection(indices_.begin(), indices_.end(),
                          other.indices_.begin(), other.indices_.end(),
                          std::back_inserter(out));
    return SensorSet(std::move(out));
  }

  SensorSet unite(const SensorSet& other) const {
    std::vector<int> out;
    std::set_union(indices_.begin(), indices_.end(), other.indices_.begin(),
                   other.indices_.end(), std::back_inserter(out));
    return SensorSet(std::move(out));
  }

  /// {1..m} minus this set.
  SensorSet complement(int m) const {
    std::vector<int> out;
    for (int i = 1; i <= m; ++i) {
      if (!contains(i)) out.push_back(i);
    }
    return SensorSet(std::move(out));
  }

  /// "{1,3}" style rendering used in reports.
  std::string to_string() const {
    std::string s = "{";
    for (std::size_t k = 0; k < indices_.size(); ++k) {
      if (k > 0) s += ",";
      s += std::to_string(indices_[k]);
    }
    return s + "}";
  }

  auto operator<=>(const SensorSet&) const = default;

 private:
  std::vector<int> indices_;
};

/// All size-k subsets of {1..m} in lexicographic order.
inline std::vector<SensorSet> combinations(int m, int k) {
  std::vector<SensorSet> out;
  if (k < 0 || k > m) return out;
  std::vector<int> current(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) current[static_cast<std::size_t>(i)] = i + 1;
  while (true) {
    out.emplace_back(current);
    int pos = k - 1;
    while (pos >= 0 &&
           current[static_cast<std::size_t>(pos)] == m - k + pos + 1) {
      --pos;
    }
    if (pos < 0) break;
    ++current[static_cast<std::size_t>(pos)];
    for (int j = pos + 1; j < k; ++j) {
      current[static_cast<std::size_t>(j)] =
          current[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
  return out;
}

/// Row selector P_I mapping R^m onto the coordinates listed in a SensorSet.
class ProjectionMap {
 public:
  ProjectionMap(const SensorSet& subset, int source_dim)
      : subset_(subset), source_dim_(source_dim) {
    if (source_dim < 0 || subset.max_index() > source_dim) {
      throw DimensionError("projection: sensor index " +
                           std::to_string(subset.max_index()) +
                           " out of range 1.." + std::to_string(source_dim));
    }
  }

  int source_dim() const { return source_dim_; }
  int target_dim() const { return subset_.size(); }
  const SensorSet& subset() const { return subset_; }

  MatrixXd matrix() const {
    MatrixXd P = MatrixXd::Zero(target_dim(), source_dim_);
    for (int r = 0; r < target_dim(); ++r) {
      P(r, subset_.indices()[static_cast<std::size_t>(r)] - 1) = 1.0;
    }
    return P;
  }

  /// Selects rows of a matrix (or vector) with source_dim rows.
  template <class Derived>
  Eigen::Matrix<double, Eigen::Dynamic, Derived::ColsAtCompileTime == 1 ? 1 : Eigen::Dynamic>
  apply(const Eigen::MatrixBase<Derived>& M) const {
    if (M.rows() != source_dim_) {
      throw DimensionError("projection: expected " +
                           std::to_string(source_dim_) + " rows, got " +
                           std::to_string(M.rows()));
    }
    Eigen::Matrix<double, Eigen::Dynamic,
                  Derived::ColsAtCompileTime == 1 ? 1 : Eigen::Dynamic>
        out(target_dim(), M.cols());
    for (int r = 0; r < target_dim(); ++r) {
      out.row(r) = M.row(subset_.indices()[static_cast<std::size_t>(r)] - 1);
    }
    return out;
  }

 private:
  SensorSet subset_;
  int source_dim_;
};

inline ProjectionMap projection(const SensorSet& subset, int m) {
  return ProjectionMap(subset, m);
}

/// P_{K,I}: the |K| x |I| selector with P_K = P_{K,I} P_I.
inline MatrixXd partial_projection(const SensorSet& inner,
                                   const SensorSet& outer) {
  if (!inner.is_subset_of(outer)) {
    throw SubsetViolation("partial_projection: " + inner.to_string() +
                          " is not a subset of " + outer.to_string());
  }
  MatrixXd P = MatrixXd::Zero(inner.size(), outer.size());
  const auto& outer_idx = outer.indices();
  for (int r = 0; r < inner.size(); ++r) {
    const int sensor = inner.indices()[static_cast<std::size_t>(r)];
    const auto it = std::lower_bound(outer_idx.begin(), outer_idx.end(), sensor);
    P(r, static_cast<int>(it - outer_idx.begin())) = 1.0;
  }
  return P;
}

/// Discrete-time plant x(t+1) = A x + B w, y = C x + D w.
class LtiSystem {
 public:
  LtiSystem(MatrixXd A, MatrixXd B, MatrixXd C, MatrixXd D)
      : A_(std::move(A)), B_(std::move(B)), C_(std::move(C)), D_(std::move(D)) {
    const auto n = A_.rows();
    if (n < 1 || A_.cols() != n) {
      throw DimensionError("LtiSystem: A must be square with n >= 1");
    }
    if (B_.rows() != n) throw DimensionError("LtiSystem: B must have n rows");
    if (C_.cols() != n) throw DimensionError("LtiSystem: C must have n columns");
    if (D_.rows() != C_.rows() || D_.cols() != B_.cols()) {
      throw DimensionError("LtiSystem: D must be m x l");
    }
    if (!internal::all_finite(A_) || !internal::all_finite(B_) ||
        !internal::all_finite(C_) || !internal::all_finite(D_)) {
      throw DimensionError("LtiSystem: non-finite entries");
    }
  }

  const MatrixXd& A() const { return A_; }
  const MatrixXd& B() const { return B_; }
  const MatrixXd& C() const { return C_; }
  const MatrixXd& D() const { return D_; }
  int n() const { return static_cast<int>(A_.rows()); }
  int l() const { return static_cast<int>(B_.cols()); }
  int m() const { return static_cast<int>(C_.rows()); }

  /// Whether the disturbance reaches every state direction (rank B = n).
  bool disturbance_full_row_rank() const {
    if (B_.cols() < B_.rows()) return false;
    Eigen::JacobiSVD<MatrixXd> svd(B_);
    const auto& s = svd.singularValues();
    return s.size() > 0 && s(s.size() - 1) > kRankTolerance * s(0);
  }

 private:
  MatrixXd A_, B_, C_, D_;
};

/// Same A and B, measurement rows restricted to the subset.
inline LtiSystem restrict_sensors(const LtiSystem& sys,
                                  const SensorSet& subset) {
  const ProjectionMap P(subset, sys.m());
  return LtiSystem(sys.A(), sys.B(), P.apply(sys.C()), P.apply(sys.D()));
}

inline Eigen::VectorXcd eigenvalues(const Eigen::Ref<const MatrixXd>& M) {
  internal::require_square(M, "eigenvalues");
  if (M.rows() == 0) return Eigen::VectorXcd();
  Eigen::EigenSolver<MatrixXd> solver(M, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    throw NoConvergence("eigenvalues: eigen-decomposition failed");
  }
  return solver.eigenvalues();
}

inline double spectral_radius(const Eigen::Ref<const MatrixXd>& M) {
  const Eigen::VectorXcd ev = eigenvalues(M);
  return ev.size() == 0 ? 0.0 : ev.cwiseAbs().maxCoeff();
}

inline bool is_strictly_stable(const Eigen::Ref<const MatrixXd>& M) {
  return spectral_radius(M) < 1.0 - kStabilityMargin;
}

struct DetectabilityResult {
  bool detectable = true;
  std::optional<std::complex<double>> witness;
  explicit operator bool() const { return detectable; }
};

namespace internal {

/// Eigenvalues of A on or outside the unit circle (within the margin).
inline std::vector<std::complex<double>> unstable_modes(
    const Eigen::Ref<const MatrixXd>& A) {
  std::vector<std::complex<double>> out;
  const Eigen::VectorXcd ev = eigenvalues(A);
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (std::abs(ev(k)) >= 1.0 - kStabilityMargin) out.push_back(ev(k));
  }
  return out;
}

/// [A - lambda I; C] as a complex matrix.
inline Eigen::MatrixXcd pbh_matrix(const Eigen::Ref<const MatrixXd>& A,
                                   const Eigen::Ref<const MatrixXd>& C,
                                   std::complex<double> lambda) {
  const auto n = A.rows();
  Eigen::MatrixXcd M(n + C.rows(), n);
  M.topRows(n) = A.cast<std::complex<double>>();
  M.topRows(n).diagonal().array() -= lambda;
  if (C.rows() > 0) M.bottomRows(C.rows()) = C.cast<std::complex<double>>();
  return M;
}

inline bool pbh_full_rank(const Eigen::Ref<const MatrixXd>& A,
                          const Eigen::Ref<const MatrixXd>& C,
                          std::complex<double> lambda) {
  const Eigen::MatrixXcd M = pbh_matrix(A, C, lambda);
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(M);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return false;
  int rank = 0;
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    if (s(k) > kRankTolerance * s(0)) ++rank;
  }
  return rank == A.rows();
}

inline DetectabilityResult pbh_check(
    const Eigen::Ref<const MatrixXd>& A, const Eigen::Ref<const MatrixXd>& C,
    const std::vector<std::complex<double>>& modes) {
  for (const auto& lambda : modes) {
    if (!pbh_full_rank(A, C, lambda)) return {false, lambda};
  }
  return {true, std::nullopt};
}

}  // namespace internal

/// PBH detectability of (A, C). C may have zero rows.
inline DetectabilityResult is_detectable(const Eigen::Ref<const MatrixXd>& A,
                                         const Eigen::Ref<const MatrixXd>& C) {
  internal::require_square(A, "is_detectable");
  if (C.cols() != A.rows()) {
    throw DimensionError("is_detectable: C must have n columns");
  }
  return internal::pbh_check(A, C, internal::unstable_modes(A));
}

struct ChiDetectabilityResult {
  bool detectable = true;
  std::optional<SensorSet> violating;  // retained sensors that fail PBH
  std::optional<std::complex<double>> witness;
  explicit operator bool() const { return detectable; }
};

/// Detectability after removing any chi sensors. On failure reports the
/// lexicographically first retained set of size m - chi that fails.
inline ChiDetectabilityResult chi_detectable(const LtiSystem& sys, int chi) {
  if (chi < 0 || chi > sys.m()) {
    throw DimensionError("chi_detectable: chi must lie in 0..m");
  }
  const auto modes = internal::unstable_modes(sys.A());
  if (modes.empty()) return {};
  for (const SensorSet& kept : combinations(sys.m(), sys.m() - chi)) {
    const MatrixXd CK = projection(kept, sys.m()).apply(sys.C());
    const auto r = internal::pbh_check(sys.A(), CK, modes);
    if (!r.detectable) return {false, kept, r.witness};
  }
  return {};
}

/// Solution of X = A X A^T + Q for strictly stable A, by squared Smith
/// iteration with a few rounds of residual refinement.
inline MatrixXd solve_discrete_lyapunov(const Eigen::Ref<const MatrixXd>& A,
                                        const Eigen::Ref<const MatrixXd>& Q) {
  internal::require_square(A, "solve_discrete_lyapunov");
  internal::require_square(Q, "solve_discrete_lyapunov");
  if (A.rows() != Q.rows()) {
    throw DimensionError("solve_discrete_lyapunov: A and Q sizes differ");
  }
  if (!is_strictly_stable(A)) {
    throw Unstable("solve_discrete_lyapunov: A is not strictly stable");
  }
  auto smith = [&](const MatrixXd& rhs) {
    MatrixXd X = rhs;
    MatrixXd Ak = A;
    for (int it = 0; it < 200; ++it) {
      const MatrixXd step = Ak * X * Ak.transpose();
      X += step;
      Ak = Ak * Ak;
      if (step.norm() <= 1e-17 * X.norm() || Ak.norm() < 1e-300) break;
    }
    return X;
  };
  const MatrixXd Qs = 0.5 * (Q + Q.transpose());
  MatrixXd X = smith(Qs);
  for (int refine = 0; refine < 3; ++refine) {
    const MatrixXd residual = Qs + A * X * A.transpose() - X;
    if (internal::relative_residual(residual, X) <= 0.1 *
                                                        kLyapunovResidualTolerance) {
      break;
    }
    X += smith(residual);
  }
  X = 0.5 * (X + X.transpose()).eval();
  const MatrixXd residual = Qs + A * X * A.transpose() - X;
  if (internal::relative_residual(residual, X) > kLyapunovResidualTolerance) {
    throw NoConvergence("solve_discrete_lyapunov: residual above tolerance");
  }
  return X;
}

/// Stabilizing solution of the filter Riccati equation
///   P = A (P - P C^T (C P C^T + D D^T)^-1 C P) A^T + B B^T
/// and the predictor gain L = A P C^T (C P C^T + D D^T)^-1, so that the
/// closed loop A - L C is strictly stable.
struct DareSolution {
  MatrixXd P;
  MatrixXd gain;
  MatrixXd closed_loop;
};

namespace internal {

inline MatrixXd dare_fixed_point_residual(const MatrixXd& A, const MatrixXd& C,
                                          const MatrixXd& Q, const MatrixXd& R,
                                          const MatrixXd& P) {
  if (C.rows() == 0) return A * P * A.transpose() + Q - P;
  const MatrixXd S = C * P * C.transpose() + R;
  const MatrixXd PCt = P * C.transpose();
  const MatrixXd corr = PCt * S.ldlt().solve(PCt.transpose());
  return A * (P - corr) * A.transpose() + Q - P;
}

// Structured doubling on the dual (control-form) Riccati equation.
inline std::optional<MatrixXd> dare_doubling(const MatrixXd& A,
                                             const MatrixXd& C,
                                             const MatrixXd& Q,
                                             const MatrixXd& R) {
  const auto n = A.rows();
  MatrixXd Ak = A.transpose();
  MatrixXd G = MatrixXd::Zero(n, n);
  if (C.rows() > 0) {
    Eigen::LDLT<MatrixXd> Rfac(R);
    if (Rfac.info() != Eigen::Success || !Rfac.isPositive()) return std::nullopt;
    G = C.transpose() * Rfac.solve(C);
  }
  MatrixXd H = Q;
  const MatrixXd I = MatrixXd::Identity(n, n);
  for (int it = 0; it < kDareIterationCap; ++it) {
    Eigen::PartialPivLU<MatrixXd> W(I + G * H);
    const MatrixXd WA = W.solve(Ak);
    const MatrixXd WG = W.solve(G);
    const MatrixXd Hn = H + Ak.transpose() * H * WA;
    const MatrixXd Gn = G + Ak * WG * Ak.transpose();
    const MatrixXd An = Ak * WA;
    if (!Hn.allFinite() || !Gn.allFinite() || !An.allFinite()) {
      return std::nullopt;
    }
    const double change = (Hn - H).norm();
    H = 0.5 * (Hn + Hn.transpose());
    G = 0.5 * (Gn + Gn.transpose());
    Ak = An;
    if (change <= 1e-15 * std::max(H.norm(), 1e-300) || Ak.norm() == 0.0) {
      return H;
    }
  }
  return std::nullopt;
}

// Plain Riccati recursion from P = Q, used when D D^T is singular.
inline std::optional<MatrixXd> dare_recursion(const MatrixXd& A,
                                              const MatrixXd& C,
                                              const MatrixXd& Q,
                                              const MatrixXd& R) {
  MatrixXd P = Q;
  for (int it = 0; it < kDareIterationCap; ++it) {
    MatrixXd Pn = P + dare_fixed_point_residual(A, C, Q, R, P);
    Pn = 0.5 * (Pn + Pn.transpose()).eval();
    if (!Pn.allFinite()) return std::nullopt;
    const double change = (Pn - P).norm();
    P = std::move(Pn);
    if (change <= 1e-14 * std::max(P.norm(), 1e-300)) return P;
  }
  return std::nullopt;
}

}  // namespace internal

/// Solves the filter DARE for a (possibly sensor-restricted) system.
inline DareSolution solve_dare(const LtiSystem& sys) {
  const MatrixXd& A = sys.A();
  const MatrixXd& C = sys.C();
  const auto detect = is_detectable(A, C);
  if (!detect) {
    throw NotDetectable("solve_dare: (A, C) is not detectable", *detect.witness);
  }
  const MatrixXd Q = sys.B() * sys.B().transpose();
  const MatrixXd R = sys.D() * sys.D().transpose();

  std::optional<MatrixXd> P = internal::dare_doubling(A, C, Q, R);
  auto accurate = [&](const MatrixXd& cand) {
    return internal::relative_residual(
               internal::dare_fixed_point_residual(A, C, Q, R, cand), cand) <=
           kDareResidualTolerance;
  };
  if (!P || !accurate(*P)) P = internal::dare_recursion(A, C, Q, R);
  if (!P || !accurate(*P)) {
    throw NoConvergence("solve_dare: no convergence within " +
                        std::to_string(kDareIterationCap) + " iterations");
  }

  DareSolution sol;
  sol.P = std::move(*P);
  if (C.rows() == 0) {
    sol.gain = MatrixXd::Zero(sys.n(), 0);
  } else {
    const MatrixXd S = C * sol.P * C.transpose() + R;
    // L = A P C^T S^-1, computed as (S^-1 C P A^T)^T with S symmetric.
    sol.gain = S.ldlt().solve(C * sol.P * A.transpose()).transpose();
  }
  sol.closed_loop = A - sol.gain * C;
  if (!is_strictly_stable(sol.closed_loop)) {
    throw NoConvergence(
        "solve_dare: Riccati solution is not stabilizing (check that the "
        "disturbance excites every marginal mode)");
  }
  return sol;
}

/// Observer gain K with A + K C_I strictly stable (K = -L from solve_dare).
inline MatrixXd stabilizing_gain(const LtiSystem& sys, const SensorSet& subset) {
  const LtiSystem restricted = restrict_sensors(sys, subset);
  try {
    return -solve_dare(restricted).gain;
  } catch (const NotDetectable& e) {
    throw NotDetectable(std::string(e.what()) + " for sensors " +
                            subset.to_string(),
                        e.witness(), subset.to_string());
  }
}

}  // namespace sse
