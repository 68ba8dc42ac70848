#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace cavqed {

/// Raised when a configuration or input violates its declared schema.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised by numerical kernels that cannot deliver a result at the requested accuracy.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnstableResonatorError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class FrameInconsistencyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class SingularSteadyStateError : public SolverError {
 public:
  using SolverError::SolverError;
};

class StepSizeUnderflowError : public SolverError {
 public:
  StepSizeUnderflowError(const std::string& what, double fastest_rate)
      : SolverError(what), fastest_rate_(fastest_rate) {}
  /// Largest |eigenvalue| estimate of the generator at failure (rad/s).
  double fastest_rate() const noexcept { return fastest_rate_; }

 private:
  double fastest_rate_;
};

class FitNotConvergedError : public SolverError {
 public:
  FitNotConvergedError(const std::string& what, double final_cost)
      : SolverError(what), final_cost_(final_cost) {}
  double final_cost() const noexcept { return final_cost_; }

 private:
  double final_cost_;
};

// Non-fatal validity warnings (adiabatic elimination, Lamb-Dicke regime, pulse overlap).
using WarningHandler = std::function<void(const std::string&)>;

/// Installs a handler and returns the previous one. The default writes to stderr.
WarningHandler set_warning_handler(WarningHandler handler);
void warn(const std::string& message);

}  // namespace cavqed
