#pragma once

#include <stdexcept>
#include <string>

namespace tipping {

// Numerical failure modes surfaced by the solvers. Codes are stable: the CLI
// serializes them into error reports and maps them to exit status 3.
enum class ErrorCode {
  NewtonDiverged,
  SingularJacobian,
  MeshExhausted,
  StepFailure,
  StopConditionNever,
  SingularGapJacobian,
  BracketNotFound,
  NotConverged,
  BoundaryContaminated,
  CurveLeftDomain,
  DegenerateEquilibrium,
  Inconclusive,
};

const char* error_code_name(ErrorCode code);

class NumericalError : public std::runtime_error {
 public:
  NumericalError(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Invalid specs, configs, out-of-range arguments. Maps to CLI exit status 2.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace tipping
