#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sse/errors.hpp"
#include "sse/lti.hpp"

namespace sse {

/// Signal norm over a truncated sequence: sum of squares (kTwo) or
/// max over time and coordinates of |x_i(t)| (kInf).
enum class SignalNorm { kTwo, kInf };

inline std::string to_string(SignalNorm q) {
  return q == SignalNorm::kTwo ? "2" : "inf";
}

/// One of the three (input p, output q) regimes: (2,2) H-infinity,
/// (2,inf) H2 and (inf,inf) l1. No other pair can be constructed.
class NormPair {
 public:
  static constexpr NormPair two_two() {
    return NormPair(SignalNorm::kTwo, SignalNorm::kTwo);
  }
  static constexpr NormPair two_inf() {
    return NormPair(SignalNorm::kTwo, SignalNorm::kInf);
  }
  static constexpr NormPair inf_inf() {
    return NormPair(SignalNorm::kInf, SignalNorm::kInf);
  }
  static constexpr std::array<NormPair, 3> all() {
    return {two_two(), two_inf(), inf_inf()};
  }

  /// Accepts "2,2", "2,inf" and "inf,inf".
  static NormPair parse(const std::string& text) {
    for (const NormPair pair : all()) {
      if (pair.name() == text) return pair;
    }
    throw ParseError("unknown norm pair '" + text +
                     "' (expected 2,2 | 2,inf | inf,inf)");
  }

  constexpr SignalNorm p() const { return p_; }
  constexpr SignalNorm q() const { return q_; }
  std::string name() const { return to_string(p_) + "," + to_string(q_); }
  /// File-name friendly label.
  std::string slug() const { return to_string(p_) + "_" + to_string(q_); }

  constexpr auto operator<=>(const NormPair&) const = default;

 private:
  constexpr NormPair(SignalNorm p, SignalNorm q) : p_(p), q_(q) {}
  SignalNorm p_;
  SignalNorm q_;
};

/// Declared disturbance size per input norm. Thresholds and error bounds
/// derived for ||w||_p <= 1 scale linearly with it.
struct DisturbanceBound {
  double two = 1.0;
  double inf = 1.0;
  double operator[](SignalNorm p) const {
    return p == SignalNorm::kTwo ? two : inf;
  }
  bool operator==(const DisturbanceBound&) const = default;
};

/// Streaming ||x(0:t)||_q.
class SignalAccumulator {
 public:
  explicit SignalAccumulator(SignalNorm q) : q_(q) {}

  void add(const VectorXd& sample) {
    if (q_ == SignalNorm::kTwo) {
      sum_squares_ += sample.squaredNorm();
    } else if (sample.size() > 0) {
      max_abs_ = std::max(max_abs_, sample.cwiseAbs().maxCoeff());
    }
    ++count_;
  }

  double value() const {
    return q_ == SignalNorm::kTwo ? std::sqrt(sum_squares_) : max_abs_;
  }
  SignalNorm norm() const { return q_; }
  long count() const { return count_; }

 private:
  SignalNorm q_;
  double sum_squares_ = 0.0;
  double max_abs_ = 0.0;
  long count_ = 0;
};

inline double signal_norm(const std::vector<VectorXd>& x, SignalNorm q) {
  SignalAccumulator acc(q);
  for (const auto& sample : x) acc.add(sample);
  return acc.value();
}

/// Induced matrix norm: largest singular value (p = 2) or max absolute row
/// sum (p = inf).
inline double matrix_induced_norm(const Eigen::Ref<const MatrixXd>& M,
                                  SignalNorm p) {
  if (!internal::all_finite(M)) {
    throw DimensionError("matrix_induced_norm: non-finite entries");
  }
  if (M.size() == 0) return 0.0;
  if (p == SignalNorm::kInf) return M.cwiseAbs().rowwise().sum().maxCoeff();
  Eigen::JacobiSVD<MatrixXd> svd(M);
  return svd.singularValues()(0);
}

namespace internal {

inline void require_stable(const LtiSystem& sys, const char* who) {
  if (!is_strictly_stable(sys.A())) {
    throw Unstable(std::string(who) + ": A is not strictly stable");
  }
}

}  // namespace internal

/// sqrt(trace(C X C^T + D D^T)) with X the controllability Gramian.
inline double h2_norm(const LtiSystem& sys) {
  internal::require_stable(sys, "h2_norm");
  const MatrixXd X =
      solve_discrete_lyapunov(sys.A(), sys.B() * sys.B().transpose());
  const double tr = (sys.C() * X * sys.C().transpose()).trace() +
                    (sys.D() * sys.D().transpose()).trace();
  return std::sqrt(std::max(tr, 0.0));
}

/// sigma_max(C (e^{i theta} I - A)^{-1} B + D).
inline double frequency_gain(const LtiSystem& sys, double theta) {
  using cd = std::complex<double>;
  const cd z = std::polar(1.0, theta);
  Eigen::MatrixXcd zIA = -sys.A().cast<cd>();
  zIA.diagonal().array() += z;
  const Eigen::MatrixXcd G =
      sys.C().cast<cd>() * zIA.partialPivLu().solve(sys.B().cast<cd>()) +
      sys.D().cast<cd>();
  if (G.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(G);
  return svd.singularValues()(0);
}

/// Largest frequency gain over `points` equally spaced angles in [0, pi].
inline double hinf_norm_grid(const LtiSystem& sys, int points) {
  internal::require_stable(sys, "hinf_norm_grid");
  double best = 0.0;
  for (int k = 0; k < points; ++k) {
    const double theta =
        points == 1 ? 0.0 : std::numbers::pi * k / (points - 1);
    best = std::max(best, frequency_gain(sys, theta));
  }
  return best;
}

namespace internal {

// Continuous-time image of the system under z = (1 + s) / (1 - s); the
// unit circle maps onto the imaginary axis with s = i tan(theta / 2).
struct BilinearImage {
  MatrixXd A, B, C, D;
};

inline BilinearImage bilinear_image(const LtiSystem& sys) {
  const auto n = sys.n();
  const MatrixXd ApI = sys.A() + MatrixXd::Identity(n, n);
  const Eigen::PartialPivLU<MatrixXd> lu(ApI);
  BilinearImage c;
  c.A = lu.solve(sys.A() - MatrixXd::Identity(n, n));
  const MatrixXd invB = lu.solve(sys.B());
  c.B = std::sqrt(2.0) * invB;
  c.C = std::sqrt(2.0) * sys.C() * lu.inverse();
  c.D = sys.D() - sys.C() * invB;
  return c;
}

// Angles in [0, pi] at which gamma is a singular value of the frequency
// response, read off the imaginary-axis eigenvalues of the Hamiltonian.
inline std::vector<double> crossing_angles(const BilinearImage& c,
                                           double gamma) {
  const auto n = c.A.rows();
  const auto l = c.B.cols();
  const auto p = c.C.rows();
  const MatrixXd R = c.D.transpose() * c.D - gamma * gamma * MatrixXd::Identity(l, l);
  const MatrixXd S = c.D * c.D.transpose() - gamma * gamma * MatrixXd::Identity(p, p);
  const Eigen::PartialPivLU<MatrixXd> Rlu(R);
  const Eigen::PartialPivLU<MatrixXd> Slu(S);
  const MatrixXd RinvDtC = Rlu.solve(c.D.transpose() * c.C);
  const MatrixXd RinvBt = Rlu.solve(c.B.transpose());
  MatrixXd H(2 * n, 2 * n);
  H.topLeftCorner(n, n) = c.A - c.B * RinvDtC;
  H.topRightCorner(n, n) = -gamma * c.B * RinvBt;
  H.bottomLeftCorner(n, n) = gamma * c.C.transpose() * Slu.solve(c.C);
  H.bottomRightCorner(n, n) = -c.A.transpose() + c.C.transpose() * c.D * RinvBt;
  const Eigen::VectorXcd ev = eigenvalues(H);
  const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
  std::vector<double> angles;
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (std::abs(ev(k).real()) <= 1e-8 * scale) {
      angles.push_back(2.0 * std::atan(std::abs(ev(k).imag())));
    }
  }
  std::sort(angles.begin(), angles.end());
  return angles;
}

}  // namespace internal

/// H-infinity norm (the 2->2 induced norm) by bisection on gamma. A level is
/// an upper bound when the Hamiltonian has no imaginary-axis eigenvalues;
/// otherwise the frequency response is evaluated between the crossings,
/// which either lifts the lower bound or exposes a spurious crossing.
inline double hinf_norm(const LtiSystem& sys, double tol = 1e-10) {
  internal::require_stable(sys, "hinf_norm");
  if (!(tol > 0.0)) throw DimensionError("hinf_norm: tol must be positive");
  if (sys.B().isZero(0.0) || sys.C().isZero(0.0)) {
    return matrix_induced_norm(sys.D(), SignalNorm::kTwo);
  }
  // Seed the lower bound on a coarse grid plus the eigenvalue angles.
  std::vector<double> seeds;
  for (int k = 0; k <= 64; ++k) seeds.push_back(std::numbers::pi * k / 64.0);
  const Eigen::VectorXcd ev = eigenvalues(sys.A());
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    seeds.push_back(std::abs(std::arg(ev(k))));
  }
  double lo = 0.0;
  for (double theta : seeds) lo = std::max(lo, frequency_gain(sys, theta));
  if (lo == 0.0) return 0.0;

  const internal::BilinearImage image = internal::bilinear_image(sys);
  // Largest gain found between crossings at level gamma, if above gamma.
  auto probe = [&](double gamma) -> std::optional<double> {
    std::vector<double> angles = internal::crossing_angles(image, gamma);
    if (angles.empty()) return std::nullopt;
    angles.insert(angles.begin(), 0.0);
    angles.push_back(std::numbers::pi);
    double best = 0.0;
    for (std::size_t k = 0; k < angles.size(); ++k) {
      best = std::max(best, frequency_gain(sys, angles[k]));
      if (k + 1 < angles.size()) {
        best = std::max(best,
                        frequency_gain(sys, 0.5 * (angles[k] + angles[k + 1])));
      }
    }
    if (best > gamma) return best;
    return std::nullopt;
  };

  double hi = 2.0 * lo;
  for (int it = 0; it < 200; ++it) {
    const auto found = probe(hi);
    if (!found) break;
    lo = std::max(lo, *found);
    hi = 2.0 * std::max(hi, *found);
  }
  for (int it = 0; it < 500 && hi - lo > tol * lo; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (const auto found = probe(mid)) {
      lo = std::max(lo, *found);
      if (lo > hi) hi = 2.0 * lo;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// Enclosure of the l1 norm max_i sum_j sum_t |h_ij(t)| from a truncated
/// impulse response and a geometric tail bound.
struct L1Enclosure {
  double lower = 0.0;
  double upper = 0.0;
  long horizon = 0;  // impulse taps t = 0..horizon were summed exactly
  double midpoint() const { return 0.5 * (lower + upper); }
};

/// Exact row-wise absolute sums of the taps h(0..horizon), maximised.
inline double l1_truncated(const LtiSystem& sys, long horizon) {
  VectorXd rows = sys.D().cwiseAbs().rowwise().sum();
  MatrixXd CA = sys.C();  // C A^{t-1}
  for (long t = 1; t <= horizon; ++t) {
    rows += (CA * sys.B()).cwiseAbs().rowwise().sum();
    CA = CA * sys.A();
  }
  return rows.size() == 0 ? 0.0 : rows.maxCoeff();
}

inline L1Enclosure l1_norm_enclosure(const LtiSystem& sys, double tol = 1e-9) {
  internal::require_stable(sys, "l1_norm");
  if (!(tol > 0.0)) throw DimensionError("l1_norm: tol must be positive");
  auto inf_norm = [](const MatrixXd& M) {
    return M.size() == 0 ? 0.0 : M.cwiseAbs().rowwise().sum().maxCoeff();
  };
  // Smallest power k with ||A^k||_inf <= 1/2.
  MatrixXd Ak = sys.A();
  long k = 1;
  while (inf_norm(Ak) > 0.5) {
    Ak = Ak * sys.A();
    if (++k > 10'000'000) throw Unstable("l1_norm: no contracting power of A");
  }
  const double contraction = inf_norm(Ak);
  const double b_norm = inf_norm(sys.B());

  // Sliding window over ||C A^s||_inf, s = T..T+k-1, bounds the tail
  // sum_{s >= T} ||C A^s|| <= window / (1 - ||A^k||).
  std::vector<VectorXd> tap_rows;  // |C A^s B| row sums, s = 0, 1, ...
  std::vector<double> cs_norms;    // ||C A^s||_inf
  MatrixXd CA = sys.C();
  VectorXd partial = sys.D().cwiseAbs().rowwise().sum();
  double window = 0.0;
  for (long s = 0;; ++s) {
    cs_norms.push_back(inf_norm(CA));
    tap_rows.push_back((CA * sys.B()).cwiseAbs().rowwise().sum());
    window += cs_norms.back();
    if (s >= k) window -= cs_norms[static_cast<std::size_t>(s - k)];
    CA = CA * sys.A();
    if (s + 1 < k) continue;
    const long T = s - k + 1;  // taps C A^{t-1} B with t <= T are summed
    if (T >= 1) partial += tap_rows[static_cast<std::size_t>(T - 1)];
    const double tail = window * b_norm / (1.0 - contraction);
    if (tail <= tol) {
      const double lower = partial.size() == 0 ? 0.0 : partial.maxCoeff();
      return {lower, lower + tail, T};
    }
  }
}

/// l1 norm (the inf->inf induced norm); absolute error at most tol.
inline double l1_norm(const LtiSystem& sys, double tol = 1e-9) {
  return l1_norm_enclosure(sys, tol).midpoint();
}

inline double default_tolerance(NormPair pair) {
  return pair == NormPair::two_two() ? 1e-10 : 1e-9;
}

/// ||G||_{p->q}: (2,2) H-infinity, (2,inf) H2, (inf,inf) l1.
inline double induced_norm(const LtiSystem& sys, NormPair pair,
                           std::optional<double> tol = std::nullopt) {
  const double t = tol.value_or(default_tolerance(pair));
  if (pair == NormPair::two_two()) return hinf_norm(sys, t);
  if (pair == NormPair::two_inf()) return h2_norm(sys);
  return l1_norm(sys, t);
}

}  // namespace sse
