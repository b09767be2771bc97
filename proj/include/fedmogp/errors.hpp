#pragma once

#include <stdexcept>
#include <string>

namespace fedmogp {

// Raised when a caller violates an argument contract (shape mismatch,
// out-of-range value, unknown enum string, ...).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a computation produces or receives non-finite values.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a matrix cannot be factorized even after jitter escalation.
// The message names the offending matrix.
class SingularMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised on malformed configuration, manifest, or CSV input. The message
// carries file and, where applicable, line context.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fedmogp
