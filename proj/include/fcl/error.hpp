#pragma once

#include <stdexcept>
#include <string>

namespace fcl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid input: bad shapes, out-of-range configuration, violated preconditions.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Shape disagreement between an operand and the layer or buffer it feeds.
class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// File system or serialization failure. Carries the offending path in the message.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace fcl
