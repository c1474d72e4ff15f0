#pragma once

#include <complex>
#include <optional>
#include <stdexcept>
#include <string>

namespace sse {

/// Base class for every failure raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent matrix/vector shapes or non-finite input.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A matrix expected to be strictly stable is not.
class Unstable : public Error {
 public:
  using Error::Error;
};

/// An iterative solver hit its iteration cap or produced an inaccurate result.
class NoConvergence : public Error {
 public:
  using Error::Error;
};

/// (A, C) fails the PBH test. Carries the offending eigenvalue and, when
/// known, the sensor subset (as a printable string) that lost detectability.
class NotDetectable : public Error {
 public:
  NotDetectable(const std::string& what, std::complex<double> witness,
                std::string subset = {})
      : Error(what), witness_(witness), subset_(std::move(subset)) {}

  std::complex<double> witness() const { return witness_; }
  const std::string& subset() const { return subset_; }

 private:
  std::complex<double> witness_;
  std::string subset_;
};

/// A sensor set is not contained in the one it must be a subset of.
class SubsetViolation : public Error {
 public:
  using Error::Error;
};

/// Every local estimator of a bank has been invalidated.
class NoValidEstimators : public Error {
 public:
  using Error::Error;
};

/// Lenient bank construction dropped every candidate subset.
class NoViableSubsets : public Error {
 public:
  using Error::Error;
};

/// An attack touches more sensors than the declared budget.
class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

/// The error-bound calculator needs every pairwise subset intersection to be
/// detectable; this reports the first one that is not.
class PrerequisiteFailure : public Error {
 public:
  PrerequisiteFailure(const std::string& what, std::string witness_subset)
      : Error(what), witness_subset_(std::move(witness_subset)) {}
  const std::string& witness_subset() const { return witness_subset_; }

 private:
  std::string witness_subset_;
};

/// The indistinguishable-trajectory construction was requested on a system
/// that is 2*rho-detectable, where no such construction exists.
class PreconditionHolds : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration or matrix file.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace sse
