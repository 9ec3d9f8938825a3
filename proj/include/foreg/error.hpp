#pragma once

#include <stdexcept>
#include <string>

namespace foreg {

/// Bad arguments, shape mismatches and violated preconditions.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The requested (loss, exponent, representation) combination has no
/// tractable projection or proximal operator.
class UnsupportedError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Solver divergence, failed factorizations.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace foreg
