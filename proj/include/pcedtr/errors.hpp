#pragma once

#include <stdexcept>
#include <string>

namespace pcedtr {

/// Malformed or inconsistent input data (bad CSV, invariant violations).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numeric failure inside a sampler or a linear-algebra routine.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace pcedtr
