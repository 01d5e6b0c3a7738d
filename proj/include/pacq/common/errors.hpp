#pragma once

#include <stdexcept>
#include <string>

namespace pacq {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration or CLI arguments. CLI exit code 2.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Data / file format problems. CLI exit code 3.
class DataError : public Error {
 public:
  enum class Kind { Magic, Version, Truncated, Checksum, Dimension, Other };

  DataError(Kind kind, const std::string& msg) : Error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Numerical failures (NaN/Inf, divergence, degenerate inputs). CLI exit code 4.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Tensor shape / dimension mismatches.
class ShapeError : public NumericError {
 public:
  explicit ShapeError(const std::string& msg) : NumericError(msg) {}
};

// Covariance matrix not symmetric positive definite.
class CovarianceError : public NumericError {
 public:
  explicit CovarianceError(const std::string& msg) : NumericError(msg) {}
};

// Class label outside the configured range.
class LabelError : public Error {
 public:
  explicit LabelError(const std::string& msg) : Error(msg) {}
};

// Illegal environment action (e.g. selecting an already-acquired view).
class InvalidActionError : public Error {
 public:
  explicit InvalidActionError(const std::string& msg) : Error(msg) {}
};

}  // namespace pacq
