#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vbmix {

/// Argument outside the mathematical domain of a function (x <= 0 for log_gamma, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Caller broke a documented precondition.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input exceeds what an exact enumeration routine is willing to handle.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Malformed or inconsistent input data. `line` is 1-based, 0 when not applicable.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Non-finite objective or a sampler that cannot move.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, int sweep = -1)
      : std::runtime_error(sweep >= 0 ? what + " (sweep " + std::to_string(sweep) + ")" : what),
        sweep_(sweep) {}

  int sweep() const noexcept { return sweep_; }

 private:
  int sweep_;
};

}  // namespace vbmix
