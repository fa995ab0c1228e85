#pragma once

#include <stdexcept>
#include <string>

namespace fidtrack {

enum class ErrorCode {
  kInvalidArgument,
  kPointBehindCamera,
  kNonOrthonormal,
  kDimensionMismatch,
  kDegenerateConfiguration,
  kNoValidCandidate,
  kDivergence,
  kInfeasible,
  kSourceExhausted,
  kUnknownObject,
  kParse,
  kIo,
  kBind,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kPointBehindCamera: return "point-behind-camera";
    case ErrorCode::kNonOrthonormal: return "non-orthonormal";
    case ErrorCode::kDimensionMismatch: return "dimension-mismatch";
    case ErrorCode::kDegenerateConfiguration: return "degenerate-configuration";
    case ErrorCode::kNoValidCandidate: return "no-valid-candidate";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kInfeasible: return "infeasible";
    case ErrorCode::kSourceExhausted: return "source-exhausted";
    case ErrorCode::kUnknownObject: return "unknown-object";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kBind: return "bind";
  }
  return "unknown";
}

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fidtrack
