#pragma once

#include <stdexcept>
#include <string>

namespace mkc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed arguments: dimension mismatch, out-of-range parameters, bad files.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Argument is well formed but outside the region where the operation is defined
/// (cut locus, outside a chart, rate evaluated at h >= rho, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Request would exceed the configured memory/size caps.
class ResourceError : public Error {
 public:
  using Error::Error;
};

/// A construction that is expected to succeed did not (e.g. chart radius search).
class ConstructionError : public Error {
 public:
  using Error::Error;
};

/// Covariance model is not positive semidefinite on the requested points.
class ModelRejection : public Error {
 public:
  ModelRejection(const std::string& what, double smallest_eigenvalue)
      : Error(what), smallest_eigenvalue_(smallest_eigenvalue) {}

  double smallest_eigenvalue() const noexcept { return smallest_eigenvalue_; }

 private:
  double smallest_eigenvalue_;
};

/// Not enough levels, replicates or pairs to compute an estimate.
class InsufficientData : public Error {
 public:
  using Error::Error;
};

}  // namespace mkc
