#pragma once

#include <stdexcept>
#include <string>

namespace lensrig {

// Machine-readable reason codes, surfaced verbatim in CLI JSON error output.
enum class ErrorCode {
  DomainError,        // point/parameter outside its declared domain
  ValidationError,    // malformed input (scene file, grid spec, isometry)
  KinkError,          // second derivative requested at a profile kink
  ConvergenceError,   // iteration cap or non-convergent sequence
  ResolutionError,    // structure not resolvable at the sampling resolution
  NoOracle,           // registry_truths has no oracle for this name
};

inline const char* errorCodeName(ErrorCode c) {
  switch (c) {
    case ErrorCode::DomainError: return "domain_error";
    case ErrorCode::ValidationError: return "validation_error";
    case ErrorCode::KinkError: return "kink_error";
    case ErrorCode::ConvergenceError: return "convergence_error";
    case ErrorCode::ResolutionError: return "resolution_error";
    case ErrorCode::NoOracle: return "no_oracle";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool ok, ErrorCode code, const std::string& msg) {
  if (!ok) throw Error(code, msg);
}

}  // namespace lensrig
