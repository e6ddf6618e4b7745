#pragma once

#include <stdexcept>
#include <string>

namespace spikefluct {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on the arguments was violated (dimensions, ranges, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// An argument lies outside the domain where a function is defined.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An iterative or factorization routine failed to produce an answer.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A supercritical quantity was requested for a subcritical population spike.
class SubcriticalError : public DomainError {
 public:
  SubcriticalError(const std::string& what, double threshold)
      : DomainError(what), threshold_(threshold) {}
  double threshold() const noexcept { return threshold_; }

 private:
  double threshold_;
};

/// A spectral denominator sigma_tilde - sigma_i is (numerically) zero.
class SingularityError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// The dense covariance input has an eigenvalue below the PSD tolerance.
class NonPsdError : public InvalidArgument {
 public:
  NonPsdError(const std::string& what, double eigenvalue)
      : InvalidArgument(what), eigenvalue_(eigenvalue) {}
  double eigenvalue() const noexcept { return eigenvalue_; }

 private:
  double eigenvalue_;
};

/// The noise law does not support the requested operation (e.g. no cf).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// Eigenvalue-ratio statistic with a vanishing denominator.
class DegenerateSpectrumError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// A resolvent evaluated too close to the sample spectrum.
class ConditioningError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace spikefluct
