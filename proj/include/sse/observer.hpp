#pragma once

#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sse/errors.hpp"
#include "sse/lti.hpp"
#include "sse/norms.hpp"

namespace sse {

/// Slack applied to residual-threshold comparisons to absorb round-off in
/// the threshold computation.
inline constexpr double kValidityRelativeSlack = 1e-9;

namespace internal {

inline void require_gain_shape(const LtiSystem& restricted,
                               const Eigen::Ref<const MatrixXd>& K) {
  if (K.rows() != restricted.n() || K.cols() != restricted.m()) {
    throw DimensionError("observer gain must be n x |I|");
  }
}

}  // namespace internal

/// E(K): error dynamics from w to e = x - xhat, state matrix A + K C_I and
/// input B + K D_I, identity output.
inline LtiSystem error_system(const LtiSystem& restricted,
                              const Eigen::Ref<const MatrixXd>& K) {
  internal::require_gain_shape(restricted, K);
  MatrixXd Acl = restricted.A() + K * restricted.C();
  if (!is_strictly_stable(Acl)) {
    throw Unstable("error_system: A + K C is not strictly stable");
  }
  const int n = restricted.n();
  return LtiSystem(std::move(Acl), restricted.B() + K * restricted.D(),
                   MatrixXd::Identity(n, n), MatrixXd::Zero(n, restricted.l()));
}

/// F(K): residual dynamics from w to r, same state equation as E(K) with
/// output (C_I, D_I).
inline LtiSystem residual_system(const LtiSystem& restricted,
                                 const Eigen::Ref<const MatrixXd>& K) {
  internal::require_gain_shape(restricted, K);
  MatrixXd Acl = restricted.A() + K * restricted.C();
  if (!is_strictly_stable(Acl)) {
    throw Unstable("residual_system: A + K C is not strictly stable");
  }
  return LtiSystem(std::move(Acl), restricted.B() + K * restricted.D(),
                   restricted.C(), restricted.D());
}

/// Luenberger estimator driven by one sensor subset. It accumulates the
/// residual norm for every requested (p, q) regime and invalidates itself
/// permanently once any of them exceeds ||F(K)||_{p->q} times the declared
/// disturbance bound.
class LocalObserver {
 public:
  struct Threshold {
    NormPair pair;
    double value;  // ||F(K)||_{p->q} for a unit disturbance
  };

  struct StepResult {
    VectorXd next_estimate;
    VectorXd residual;
  };

  LocalObserver(const LtiSystem& sys, SensorSet subset,
                const std::vector<NormPair>& pairs)
      : subset_(std::move(subset)),
        restricted_(restrict_sensors(sys, subset_)),
        gain_(stabilizing_gain(sys, subset_)),
        estimate_(VectorXd::Zero(sys.n())) {
    const LtiSystem F = residual_system(restricted_, gain_);
    for (const NormPair pair : pairs) {
      thresholds_.push_back({pair, induced_norm(F, pair)});
      accumulators_.emplace_back(pair.q());
    }
  }

  const SensorSet& subset() const { return subset_; }
  const LtiSystem& restricted() const { return restricted_; }
  const MatrixXd& gain() const { return gain_; }
  const VectorXd& estimate() const { return estimate_; }
  const std::vector<Threshold>& thresholds() const { return thresholds_; }
  bool valid() const { return valid_; }
  std::optional<long> invalidated_at() const { return invalidated_at_; }
  long time() const { return time_; }

  std::optional<double> threshold(NormPair pair) const {
    for (const auto& t : thresholds_) {
      if (t.pair == pair) return t.value;
    }
    return std::nullopt;
  }

  /// ||r(0:t)||_q accumulated so far for the given regime.
  std::optional<double> residual_norm(NormPair pair) const {
    for (std::size_t k = 0; k < thresholds_.size(); ++k) {
      if (thresholds_[k].pair == pair) return accumulators_[k].value();
    }
    return std::nullopt;
  }

  /// r(t) = y_I(t) - C_I xhat(t), then xhat(t+1) = A xhat(t) - K r(t).
  StepResult step(const VectorXd& y_subset) {
    if (y_subset.size() != subset_.size()) {
      throw DimensionError("observer_step: expected " +
                           std::to_string(subset_.size()) + " measurements");
    }
    VectorXd residual = y_subset - restricted_.C() * estimate_;
    for (auto& acc : accumulators_) acc.add(residual);
    estimate_ = restricted_.A() * estimate_ - gain_ * residual;
    ++time_;
    return {estimate_, std::move(residual)};
  }

  /// Compares every accumulated residual norm with its threshold scaled by
  /// the disturbance bound. Invalidation is permanent.
  bool check_validity(long t, const DisturbanceBound& w_bound = {}) {
    if (!valid_) return false;
    for (std::size_t k = 0; k < thresholds_.size(); ++k) {
      const double limit = thresholds_[k].value * w_bound[thresholds_[k].pair.p()];
      if (accumulators_[k].value() > limit * (1.0 + kValidityRelativeSlack)) {
        valid_ = false;
        invalidated_at_ = t;
        return false;
      }
    }
    return true;
  }

 private:
  SensorSet subset_;
  LtiSystem restricted_;
  MatrixXd gain_;
  VectorXd estimate_;
  std::vector<Threshold> thresholds_;
  std::vector<SignalAccumulator> accumulators_;
  bool valid_ = true;
  std::optional<long> invalidated_at_;
  long time_ = 0;
};

inline LocalObserver make_observer(const LtiSystem& sys, const SensorSet& subset,
                                   const std::vector<NormPair>& pairs) {
  return LocalObserver(sys, subset, pairs);
}

}  // namespace sse
