#pragma once

#include <stdexcept>
#include <string>

namespace fairsynth {

/// Bad input: malformed files, schema violations, invalid configuration.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure at run time (non-finite loss, gradient or parameter).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fairsynth
