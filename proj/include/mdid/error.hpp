#pragma once

#include <stdexcept>
#include <string>

namespace mdid {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid input: malformed data, inadmissible parameters, violated
/// preconditions. The CLI maps these to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Mismatch between objects that are individually valid (e.g. an assignment
/// built on the wrong feature set for the requested estimator).
class ConfigurationError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Singular or ill-conditioned linear algebra. The CLI maps these to exit
/// code 2.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace mdid
