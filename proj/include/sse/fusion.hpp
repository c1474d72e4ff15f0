#pragma once

#include <algorithm>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sse/errors.hpp"
#include "sse/lti.hpp"
#include "sse/matrix_io.hpp"
#include "sse/norms.hpp"
#include "sse/observer.hpp"

namespace sse {

/// Every size-(m - rho) sensor set that contains all protected sensors, in
/// lexicographic order.
inline std::vector<SensorSet> enumerate_subsets(int m, int rho,
                                                const SensorSet& protected_sensors = {}) {
  if (rho < 0 || rho >= m) {
    throw DimensionError("enumerate_subsets: need 0 <= rho < m");
  }
  if (protected_sensors.max_index() > m ||
      protected_sensors.size() > m - rho) {
    throw DimensionError(
        "enumerate_subsets: protected sensors must fit inside m - rho");
  }
  std::vector<SensorSet> out;
  for (SensorSet& s : combinations(m, m - rho)) {
    if (protected_sensors.is_subset_of(s)) out.push_back(std::move(s));
  }
  return out;
}

/// Coordinatewise midpoint of min and max (q = inf) or mean (q = 2).
inline VectorXd fuse(std::span<const VectorXd> estimates, SignalNorm q) {
  if (estimates.empty()) {
    throw NoValidEstimators("fuse: no valid local estimates");
  }
  const auto n = estimates.front().size();
  if (q == SignalNorm::kTwo) {
    VectorXd sum = VectorXd::Zero(n);
    for (const auto& e : estimates) sum += e;
    return sum / static_cast<double>(estimates.size());
  }
  VectorXd lo = estimates.front();
  VectorXd hi = estimates.front();
  for (const auto& e : estimates) {
    lo = lo.cwiseMin(e);
    hi = hi.cwiseMax(e);
  }
  return 0.5 * (lo + hi);
}

enum class BankMode {
  kStrict,   // all C(m, rho) subsets, each must be detectable
  kLenient,  // only detectable subsets that keep every protected sensor
};

struct BankOptions {
  int rho = 1;
  std::vector<NormPair> pairs{NormPair::two_two(), NormPair::two_inf(),
                              NormPair::inf_inf()};
  SignalNorm fusion = SignalNorm::kInf;
  BankMode mode = BankMode::kStrict;
  SensorSet protected_sensors;
  DisturbanceBound w_bound;
};

/// Fused estimate at time t together with the validity ledger.
struct GlobalEstimate {
  long t = 0;
  VectorXd estimate;
  int valid_count = 0;
  std::vector<std::size_t> valid_observers;  // indices into the bank
  std::vector<VectorXd> local_estimates;     // xhat^I(t) of valid_observers
  std::vector<SensorSet> newly_invalidated;
};

/// The bank of local observers with its shrinking validity ledger V(t).
class EstimatorBank {
 public:
  static EstimatorBank build(const LtiSystem& sys, BankOptions options) {
    return EstimatorBank(sys, std::move(options));
  }

  const LtiSystem& system() const { return sys_; }
  const BankOptions& options() const { return options_; }
  const std::vector<LocalObserver>& observers() const { return observers_; }
  /// Subsets left out in lenient mode because they are not detectable.
  const std::vector<SensorSet>& dropped() const { return dropped_; }
  const ChiDetectabilityResult& rho_detectability() const { return rho_detect_; }
  const ChiDetectabilityResult& two_rho_detectability() const {
    return two_rho_detect_;
  }
  long time() const { return time_; }

  int valid_count() const {
    return static_cast<int>(std::count_if(
        observers_.begin(), observers_.end(),
        [](const LocalObserver& o) { return o.valid(); }));
  }

  /// One tick: residual test on every currently valid observer, then fusion
  /// of the surviving xhat^I(t) (estimates before the time-t update).
  GlobalEstimate step(const VectorXd& y) {
    if (y.size() != sys_.m()) {
      throw DimensionError("bank_step: expected " + std::to_string(sys_.m()) +
                           " measurements");
    }
    if (!y.allFinite()) throw DimensionError("bank_step: non-finite measurement");
    GlobalEstimate g;
    g.t = time_;
    for (std::size_t k = 0; k < observers_.size(); ++k) {
      LocalObserver& obs = observers_[k];
      if (!obs.valid()) continue;
      VectorXd before = obs.estimate();
      obs.step(projections_[k].apply(y));
      if (obs.check_validity(time_, options_.w_bound)) {
        g.valid_observers.push_back(k);
        g.local_estimates.push_back(std::move(before));
      } else {
        g.newly_invalidated.push_back(obs.subset());
      }
    }
    ++time_;
    g.valid_count = static_cast<int>(g.valid_observers.size());
    if (g.valid_count == 0) {
      throw NoValidEstimators("bank_step: every local estimator invalidated at t=" +
                              std::to_string(g.t));
    }
    g.estimate = fuse(g.local_estimates, options_.fusion);
    return g;
  }

 private:
  EstimatorBank(const LtiSystem& sys, BankOptions options)
      : sys_(sys), options_(std::move(options)) {
    const int m = sys_.m();
    const int rho = options_.rho;
    if (options_.pairs.empty()) {
      throw DimensionError("build_bank: at least one norm pair is required");
    }
    rho_detect_ = chi_detectable(sys_, rho);
    if (2 * rho <= m) {
      two_rho_detect_ = chi_detectable(sys_, 2 * rho);
    } else {
      two_rho_detect_ = {false, std::nullopt, std::nullopt};
    }
    const bool strict = options_.mode == BankMode::kStrict;
    const SensorSet keep = strict ? SensorSet{} : options_.protected_sensors;
    for (const SensorSet& subset : enumerate_subsets(m, rho, keep)) {
      const MatrixXd CI = projection(subset, m).apply(sys_.C());
      const auto detect = is_detectable(sys_.A(), CI);
      if (!detect) {
        if (strict) {
          throw NotDetectable("build_bank: sensor subset " + subset.to_string() +
                                  " is not detectable",
                              *detect.witness, subset.to_string());
        }
        dropped_.push_back(subset);
        continue;
      }
      observers_.push_back(make_observer(sys_, subset, options_.pairs));
      projections_.emplace_back(subset, m);
    }
    if (observers_.empty()) {
      throw NoViableSubsets("build_bank: no detectable subset of size " +
                            std::to_string(m - rho) + " keeps sensors " +
                            keep.to_string());
    }
  }

  LtiSystem sys_;
  BankOptions options_;
  std::vector<LocalObserver> observers_;
  std::vector<ProjectionMap> projections_;
  std::vector<SensorSet> dropped_;
  ChiDetectabilityResult rho_detect_;
  ChiDetectabilityResult two_rho_detect_;
  long time_ = 0;
};

inline EstimatorBank build_bank(const LtiSystem& sys, BankOptions options) {
  return EstimatorBank::build(sys, std::move(options));
}

inline GlobalEstimate bank_step(EstimatorBank& bank, const VectorXd& y) {
  return bank.step(y);
}

/// Per-step record of a bank run.
struct EstimateTrace {
  std::vector<GlobalEstimate> steps;

  /// Columns: t, xhat_1..xhat_n, valid_count, invalidated_subsets. Each
  /// invalidated subset is written as space-separated indices; subsets
  /// invalidated at the same step are joined with ';'.
  void write_csv(std::ostream& os, int n) const {
    os << "t";
    for (int i = 1; i <= n; ++i) os << ",xhat_" << i;
    os << ",valid_count,invalidated_subsets\n";
    for (const auto& g : steps) {
      os << g.t;
      for (int i = 0; i < n; ++i) os << ',' << format_real(g.estimate(i));
      os << ',' << g.valid_count << ',';
      for (std::size_t k = 0; k < g.newly_invalidated.size(); ++k) {
        if (k > 0) os << ';';
        const auto& idx = g.newly_invalidated[k].indices();
        for (std::size_t j = 0; j < idx.size(); ++j) {
          if (j > 0) os << ' ';
          os << idx[j];
        }
      }
      os << '\n';
    }
  }
};

/// Runs the bank over a measurement sequence. NoValidEstimators propagates.
inline EstimateTrace run_bank(EstimatorBank& bank,
                              const std::vector<VectorXd>& measurements) {
  EstimateTrace trace;
  trace.steps.reserve(measurements.size());
  for (const auto& y : measurements) trace.steps.push_back(bank.step(y));
  return trace;
}

}  // namespace sse
