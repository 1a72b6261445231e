#pragma once

#include <stdexcept>
#include <string>

namespace evmost {

// Invalid parameters, malformed inputs, inconsistent dimensions.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Failed reads/writes, missing files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite losses, non-converged quadrature.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace evmost
