#pragma once

#include <stdexcept>
#include <string>

namespace dmtl {

/// Base for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes passed to an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A precondition on arguments (ranges, modes, sizes) was violated.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Pipeline stages were invoked out of order.
class StageError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable configuration / artifact files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace dmtl
