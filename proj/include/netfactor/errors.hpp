#pragma once

#include <stdexcept>
#include <string>

namespace netfactor {

/// Invalid input data or configuration (bad file, dimension mismatch, out-of-range parameter).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure inside an algorithm (non-positive-definite conditional, singular design).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace netfactor
