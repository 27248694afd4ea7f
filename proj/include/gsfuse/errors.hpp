#pragma once

#include <stdexcept>
#include <string>

namespace gsfuse {

/// Base for every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or extent mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or a violated call contract.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or invalid input data (dataset files, token ids, checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or an undefined numerical quantity.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace gsfuse
