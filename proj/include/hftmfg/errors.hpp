#pragma once

#include <stdexcept>
#include <string>

namespace hftmfg {

/// Malformed input file (I/O or JSON syntax or wrong value type).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model invariant is violated. `field()` names the offending config key.
class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// LT schedule violates xi0 + sum(xi) = 0.
class InfeasibleScheduleError : public std::runtime_error {
 public:
  InfeasibleScheduleError(double residual, const std::string& what)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Numerical failure inside a solver (positivity loss, box violation,
/// singular shooting system, non-concave deviation problem, ...).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hftmfg
