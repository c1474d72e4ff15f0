#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sse/errors.hpp"
#include "sse/fusion.hpp"
#include "sse/lti.hpp"
#include "sse/matrix_io.hpp"
#include "sse/norms.hpp"
#include "sse/observer.hpp"

namespace sse {

/// Induced norm of the divergence system (A + G C_K, [I G], I, 0) at the
/// Riccati gain G for the sensors in K. The true quantity is an infimum over
/// all stabilizing gains; any stabilizing gain gives an upper bound.
inline double alpha(const LtiSystem& sys, const SensorSet& K, NormPair pair) {
  const MatrixXd G = stabilizing_gain(sys, K);
  const MatrixXd CK = projection(K, sys.m()).apply(sys.C());
  const int n = sys.n();
  MatrixXd input(n, n + K.size());
  input << MatrixXd::Identity(n, n), G;
  const LtiSystem divergence(sys.A() + G * CK, std::move(input),
                             MatrixXd::Identity(n, n),
                             MatrixXd::Zero(n, n + K.size()));
  return induced_norm(divergence, pair);
}

/// ||[-K^I; P_{K,I}]||_{p->p} times a bound on ||r^I(0:T)||_p.
inline double beta(const Eigen::Ref<const MatrixXd>& gain, const SensorSet& I,
                   const SensorSet& K, SignalNorm p, double residual_bound) {
  if (gain.cols() != I.size()) {
    throw DimensionError("beta: gain must have |I| columns");
  }
  const MatrixXd PKI = partial_projection(K, I);
  MatrixXd stacked(gain.rows() + PKI.rows(), I.size());
  stacked << -gain, PKI;
  return matrix_induced_norm(stacked, p) * residual_bound;
}

/// Largest ||r(0:T)||_p a still-valid observer can show. Uses the (p, p)
/// validity threshold, which the simultaneous residual test enforces when
/// that regime is active; otherwise the norm is computed on the spot and
/// `enforced` reports false.
struct ResidualBound {
  double value = 0.0;
  bool enforced = true;
};

inline ResidualBound residual_bound(const LocalObserver& obs, SignalNorm p,
                                    const DisturbanceBound& w_bound) {
  const NormPair same = p == SignalNorm::kTwo ? NormPair::two_two()
                                              : NormPair::inf_inf();
  if (const auto t = obs.threshold(same)) return {*t * w_bound[p], true};
  const double f = induced_norm(residual_system(obs.restricted(), obs.gain()), same);
  return {f * w_bound[p], false};
}

/// alpha^{I cap J} (beta^{I, I cap J} + beta^{J, I cap J}).
inline double divergence_bound(const LtiSystem& sys, const LocalObserver& I,
                               const LocalObserver& J, NormPair pair,
                               const DisturbanceBound& w_bound = {}) {
  const SensorSet K = I.subset().intersect(J.subset());
  const auto detect = is_detectable(sys.A(), projection(K, sys.m()).apply(sys.C()));
  if (!detect) {
    throw NotDetectable("divergence_bound: intersection " + K.to_string() +
                            " is not detectable",
                        *detect.witness, K.to_string());
  }
  const double a = alpha(sys, K, pair);
  const double bI = beta(I.gain(), I.subset(), K, pair.p(),
                         residual_bound(I, pair.p(), w_bound).value);
  const double bJ = beta(J.gain(), J.subset(), K, pair.p(),
                         residual_bound(J, pair.p(), w_bound).value);
  return a * (bI + bJ);
}

/// Every ingredient of the worst-case error bound for one regime.
struct BoundReport {
  struct PairTerm {
    std::size_t i = 0;
    std::size_t j = 0;
    SensorSet intersection;
    double alpha = 0.0;
    double beta_i = 0.0;
    double beta_j = 0.0;
    double divergence = 0.0;
  };

  NormPair pair = NormPair::two_two();
  DisturbanceBound w_bound;
  std::vector<SensorSet> subsets;
  std::vector<double> error_norms;      // ||E^I(K^I)||_{p->q}, unit disturbance
  std::vector<double> residual_bounds;  // scaled by w_bound
  std::map<SensorSet, double> alphas;   // per intersection
  std::vector<PairTerm> pairs;          // i < j
  bool prerequisite = true;             // plant is 2 rho-detectable
  bool residual_bound_enforced = true;
  double total = 0.0;

  /// Divergence bound for subsets i and j (0 when i == j).
  double divergence(std::size_t i, std::size_t j) const {
    if (i == j) return 0.0;
    if (i > j) std::swap(i, j);
    for (const auto& p : pairs) {
      if (p.i == i && p.j == j) return p.divergence;
    }
    throw DimensionError("BoundReport: unknown subset pair");
  }

  /// Recomputes the total from the stored parts:
  ///   (2,2):          max_I ||E^I|| w + sqrt(log|V| / 2) max_{I,J} D^{I,J}
  ///   (2,inf),(inf,inf): max_{I,J} (||E^I|| w + D^{I,J} / 2)
  double assemble() const {
    const double w = w_bound[pair.p()];
    double e_max = 0.0;
    for (double e : error_norms) e_max = std::max(e_max, e * w);
    if (pairs.empty()) return e_max;
    if (pair == NormPair::two_two()) {
      double d_max = 0.0;
      for (const auto& p : pairs) d_max = std::max(d_max, p.divergence);
      return e_max +
             std::sqrt(0.5 * std::log(static_cast<double>(subsets.size()))) * d_max;
    }
    double best = 0.0;
    for (const auto& p : pairs) {
      const double e = std::max(error_norms[p.i], error_norms[p.j]) * w;
      best = std::max(best, e + 0.5 * p.divergence);
    }
    return best;
  }

  /// "key: value" lines.
  void write_text(std::ostream& os) const {
    os << "regime: " << pair.name() << '\n';
    os << "w_bound_p: " << format_real(w_bound[pair.p()]) << '\n';
    os << "subsets: " << subsets.size() << '\n';
    os << "prerequisite_2rho_detectable: " << (prerequisite ? "true" : "false") << '\n';
    os << "residual_bound_enforced: " << (residual_bound_enforced ? "true" : "false")
       << '\n';
    double e_max = 0.0, d_max = 0.0;
    for (double e : error_norms) e_max = std::max(e_max, e);
    for (const auto& p : pairs) d_max = std::max(d_max, p.divergence);
    os << "max_error_norm: " << format_real(e_max) << '\n';
    os << "max_divergence: " << format_real(d_max) << '\n';
    for (std::size_t k = 0; k < subsets.size(); ++k) {
      os << "error_norm " << subsets[k].to_string() << ": "
         << format_real(error_norms[k]) << '\n';
    }
    os << "total: " << format_real(total) << '\n';
  }

  /// One row per unordered subset pair.
  void write_csv(std::ostream& os) const {
    os << "subset_i,subset_j,intersection,error_norm_i,error_norm_j,alpha,"
          "beta_i,beta_j,divergence\n";
    auto quoted = [](const SensorSet& s) { return "\"" + s.to_string() + "\""; };
    for (const auto& p : pairs) {
      os << quoted(subsets[p.i]) << ',' << quoted(subsets[p.j]) << ','
         << quoted(p.intersection) << ',' << format_real(error_norms[p.i]) << ','
         << format_real(error_norms[p.j]) << ',' << format_real(p.alpha) << ','
         << format_real(p.beta_i) << ',' << format_real(p.beta_j) << ','
         << format_real(p.divergence) << '\n';
    }
  }
};

/// Worst-case estimation error bound of the bank for one regime. Throws
/// PrerequisiteFailure naming the first undetectable pairwise intersection.
inline BoundReport worst_case_bound(const EstimatorBank& bank, NormPair pair) {
  const LtiSystem& sys = bank.system();
  const auto& observers = bank.observers();
  BoundReport report;
  report.pair = pair;
  report.w_bound = bank.options().w_bound;
  report.prerequisite = bank.two_rho_detectability().detectable;
  const SignalNorm p = pair.p();

  for (const auto& obs : observers) {
    report.subsets.push_back(obs.subset());
    report.error_norms.push_back(
        induced_norm(error_system(obs.restricted(), obs.gain()), pair));
    const ResidualBound rb = residual_bound(obs, p, report.w_bound);
    report.residual_bounds.push_back(rb.value);
    report.residual_bound_enforced = report.residual_bound_enforced && rb.enforced;
  }

  for (std::size_t i = 0; i < observers.size(); ++i) {
    for (std::size_t j = i + 1; j < observers.size(); ++j) {
      const SensorSet K = observers[i].subset().intersect(observers[j].subset());
      auto it = report.alphas.find(K);
      if (it == report.alphas.end()) {
        const auto detect =
            is_detectable(sys.A(), projection(K, sys.m()).apply(sys.C()));
        if (!detect) {
          throw PrerequisiteFailure(
              "error bound needs every pairwise intersection detectable; " +
                  K.to_string() + " = " + observers[i].subset().to_string() +
                  " cap " + observers[j].subset().to_string() + " is not",
              K.to_string());
        }
        it = report.alphas.emplace(K, alpha(sys, K, pair)).first;
      }
      BoundReport::PairTerm term;
      term.i = i;
      term.j = j;
      term.intersection = K;
      term.alpha = it->second;
      term.beta_i = beta(observers[i].gain(), observers[i].subset(), K, p,
                         report.residual_bounds[i]);
      term.beta_j = beta(observers[j].gain(), observers[j].subset(), K, p,
                         report.residual_bounds[j]);
      term.divergence = term.alpha * (term.beta_i + term.beta_j);
      report.pairs.push_back(std::move(term));
    }
  }
  report.total = report.assemble();
  return report;
}

/// delta (1/4 + sum_{i=2}^n 1/(2i+1)), the optimum of
///   min sum lambda_i  s.t.  sum_{i<=j} delta / lambda_i <= (j+1)^2.
inline double d1_analytic(int n, double delta) {
  if (n < 1) throw DimensionError("d1_analytic: n must be >= 1");
  if (delta < 0.0) throw DimensionError("d1_analytic: delta must be >= 0");
  double sum = 0.25;
  for (int i = 2; i <= n; ++i) sum += 1.0 / (2.0 * i + 1.0);
  return delta * sum;
}

struct D1Solution {
  double value = 0.0;
  VectorXd lambda;
  int newton_steps = 0;
};

/// Numerical solution of the same program by a log-barrier interior-point
/// method (Newton centering with backtracking), for delta = 1, scaled by
/// delta afterwards (the program is homogeneous in delta).
inline D1Solution d1_oracle(int n, double delta, double tol = 1e-7) {
  if (n < 1) throw DimensionError("d1_oracle: n must be >= 1");
  if (delta < 0.0) throw DimensionError("d1_oracle: delta must be >= 0");

  auto slack = [n](const VectorXd& lam) {
    VectorXd s(n);
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
      acc += 1.0 / lam(j);
      s(j) = (j + 2.0) * (j + 2.0) - acc;
    }
    return s;
  };
  auto feasible = [&](const VectorXd& lam) {
    return (lam.array() > 0.0).all() && (slack(lam).array() > 0.0).all();
  };
  auto barrier = [&](const VectorXd& lam, double t) {
    const VectorXd s = slack(lam);
    return t * lam.sum() - s.array().log().sum() - lam.array().log().sum();
  };

  VectorXd lam = VectorXd::Ones(n);  // strictly feasible: j < (j+1)^2
  const double constraints = 2.0 * n;
  double t = 1.0;
  int steps = 0;
  for (int outer = 0; outer < 100; ++outer) {
    for (int inner = 0; inner < 200; ++inner) {
      const VectorXd s = slack(lam);
      VectorXd grad = VectorXd::Constant(n, t) - lam.cwiseInverse();
      MatrixXd hess = lam.array().square().inverse().matrix().asDiagonal();
      for (int j = 0; j < n; ++j) {
        VectorXd a = VectorXd::Zero(n);
        for (int i = 0; i <= j; ++i) a(i) = 1.0 / (lam(i) * lam(i));
        grad -= a / s(j);
        hess += a * a.transpose() / (s(j) * s(j));
        for (int i = 0; i <= j; ++i) {
          hess(i, i) += 2.0 / (s(j) * lam(i) * lam(i) * lam(i));
        }
      }
      const VectorXd dir = -hess.ldlt().solve(grad);
      const double decrement = -grad.dot(dir);
      ++steps;
      if (decrement / 2.0 <= 1e-14) break;
      double step = 1.0;
      const double f0 = barrier(lam, t);
      while (step > 1e-20) {
        const VectorXd cand = lam + step * dir;
        if (feasible(cand) && barrier(cand, t) <= f0 - 0.25 * step * decrement) {
          lam = cand;
          break;
        }
        step *= 0.5;
      }
      if (step <= 1e-20) break;
    }
    if (constraints / t <= 1e-3 * tol * lam.sum()) {
      return {delta * lam.sum(), delta * lam, steps};
    }
    t *= 10.0;
  }
  throw NoConvergence("d1_oracle: barrier method did not reach tolerance");
}

/// |z - z_i| <= max_j |z_j - z_i| / 2 for every i, with z the midpoint of
/// the extremes.
inline bool midpoint_bound_check(std::span<const double> values) {
  if (values.empty()) return true;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double z = 0.5 * (*lo + *hi);
  const double slack = 1e-12 * std::max(1.0, std::max(std::abs(*lo), std::abs(*hi)));
  for (double zi : values) {
    double spread = 0.0;
    for (double zj : values) spread = std::max(spread, std::abs(zj - zi));
    if (std::abs(z - zi) > 0.5 * spread + slack) return false;
  }
  return true;
}

/// sum_i 1 / lambda_i <= 1.
inline bool reciprocal_sum_at_most_one(const VectorXd& lambda) {
  return (lambda.array() > 0.0).all() && lambda.cwiseInverse().sum() <= 1.0;
}

/// diag(lambda) - 1 1^T is positive semidefinite (eigenvalues >= -tol).
inline bool diagonal_minus_ones_psd(const VectorXd& lambda, double tol = 1e-9) {
  const auto n = lambda.size();
  const MatrixXd M = MatrixXd(lambda.asDiagonal()) - MatrixXd::Ones(n, n);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(M, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff() >= -tol;
}

}  // namespace sse
