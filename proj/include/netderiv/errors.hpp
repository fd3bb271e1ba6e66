#pragma once

#include <stdexcept>
#include <string>

namespace netderiv {

// Dimension or layout mismatch between operands.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Rejected input values: bad enums, non-one-hot labels, out-of-range knobs.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Work refused because it would exceed a configured resource budget.
class ResourceError : public std::runtime_error {
 public:
  explicit ResourceError(const std::string& what) : std::runtime_error(what) {}
};

// A perturbation bound was requested but the output Jacobian is zero.
class DegenerateBoundError : public std::runtime_error {
 public:
  explicit DegenerateBoundError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical routine could not reach its accuracy contract.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace netderiv
