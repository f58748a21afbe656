#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gcy {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on arguments was violated (axis out of range, shape mismatch, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A tensor that must be positive (a metric, or g-tilde inside the solvable
/// cone) is not. Carries the worst grid point and the offending eigenvalue so
/// callers can backtrack.
class ConeViolation : public Error {
 public:
  ConeViolation(const std::string& what, std::size_t worst_point, double min_eigenvalue)
      : Error(what + " (point " + std::to_string(worst_point) +
              ", min eigenvalue " + std::to_string(min_eigenvalue) + ")"),
        worst_point_(worst_point),
        min_eigenvalue_(min_eigenvalue) {}

  std::size_t worst_point() const noexcept { return worst_point_; }
  double min_eigenvalue() const noexcept { return min_eigenvalue_; }

 private:
  std::size_t worst_point_;
  double min_eigenvalue_;
};

/// The Gauduchon conformal factor changed sign (numerical failure).
class NonPositiveFactor : public Error {
 public:
  NonPositiveFactor(std::size_t point, double value)
      : Error("conformal factor is not positive at point " + std::to_string(point) +
              " (value " + std::to_string(value) + ")"),
        point_(point) {}
  std::size_t point() const noexcept { return point_; }

 private:
  std::size_t point_;
};

class NoConvergence : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace gcy
