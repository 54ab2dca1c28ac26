#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sscope {

// Caller passed something the contract forbids (bad sizes, empty inputs).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Statistic undefined for the given data (zero variance, collinear design).
class DegenerateError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A non-finite value appeared; `block()` names the network block.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::size_t block, const std::string& what)
      : std::runtime_error(what + " (block " + std::to_string(block) + ")"),
        block_(block) {}
  std::size_t block() const noexcept { return block_; }

 private:
  std::size_t block_;
};

/// Training aborted at `step()`; wraps the underlying numeric failure.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(std::size_t step, const std::string& what)
      : std::runtime_error("training failed at step " + std::to_string(step) +
                           ": " + what),
        step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace sscope
