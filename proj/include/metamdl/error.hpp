#pragma once

#include <stdexcept>
#include <string>

namespace metamdl {

/// Invalid configuration or argument values (bad hyperparameters, malformed
/// experiment configs, rule/kind mismatches).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Dimension or layout mismatch between tensors, parameter vectors, models.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A metric is undefined for the given inputs (e.g. AUC with one class).
class MetricError : public std::runtime_error {
 public:
  explicit MetricError(const std::string& msg) : std::runtime_error(msg) {}
};

/// File I/O failure or corrupt/unrecognized on-disk format.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A non-finite loss or gradient was produced during optimization.  Carries
/// the training step at which the blow-up was detected (-1 if not inside a
/// training loop).
class DivergedError : public std::runtime_error {
 public:
  explicit DivergedError(const std::string& msg, int step = -1)
      : std::runtime_error(msg), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

}  // namespace metamdl
