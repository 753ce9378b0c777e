#pragma once

#include <stdexcept>
#include <string>

namespace introspect {

// Base for every error the library raises. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension mismatch between a network, a trace, or a dataset.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid argument value (rates, counts, ridge, etc).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Invalid run configuration (unknown key, wrong type, bad value).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed file content. Messages carry byte offsets where meaningful.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public NumericError {
 public:
  DivergenceError(int epoch, const std::string& what)
      : NumericError("diverged at epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace introspect
