#pragma once

#include <stdexcept>
#include <string>

namespace vwsgibbs {

// Error kinds map one-to-one onto CLI exit codes (2, 3, 4).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LinearAlgebraError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Raised when a truncated draw is requested on an interval whose mass
// underflows; callers treat the region as having zero mass.
class DegenerateIntervalError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace vwsgibbs
