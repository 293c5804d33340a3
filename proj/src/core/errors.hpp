#pragma once

#include <stdexcept>
#include <string>

namespace monofbf {

// Base of every error thrown by the library. The C API maps the concrete
// subclass onto an mfb_status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or size mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value or malformed request.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Unreadable, unwritable or malformed file.
class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, failed step searches, degenerate iterations.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Armijo backtracking exhausted its trial budget.
class StepSearchError : public NumericalError {
 public:
  StepSearchError(const std::string& what, double last_gamma, int trials, double lhs, double rhs)
      : NumericalError(what), last_gamma_(last_gamma), trials_(trials), lhs_(lhs), rhs_(rhs) {}

  double last_gamma() const { return last_gamma_; }
  int trials() const { return trials_; }
  // Last evaluated sides of gamma*|B(z)-B(x)| <= theta*|z-x|.
  double lhs() const { return lhs_; }
  double rhs() const { return rhs_; }

 private:
  double last_gamma_;
  int trials_;
  double lhs_;
  double rhs_;
};

}  // namespace monofbf
