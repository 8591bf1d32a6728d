#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace warpcheck {

enum class ErrorCode {
  NotSemiConcave,
  DomainMismatch,
  PreconditionFailed,
  NothingToGlue,
  TooCloseToBoundary,
  NoZeroCrossing,
  OutOfRange,
  GridTooCoarse,
  NotApplicable,
  PartitionMismatch,
  ShootingDiverged,
  EmptySet,
  SingularWeight,
  NeedsSmoothness,
  ConvergenceFailure,
  SupportViolation,
  NonSeparable,
  DegeneratePoint,
  SchemaError,
};

inline std::string_view to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::NotSemiConcave: return "NotSemiConcave";
    case ErrorCode::DomainMismatch: return "DomainMismatch";
    case ErrorCode::PreconditionFailed: return "PreconditionFailed";
    case ErrorCode::NothingToGlue: return "NothingToGlue";
    case ErrorCode::TooCloseToBoundary: return "TooCloseToBoundary";
    case ErrorCode::NoZeroCrossing: return "NoZeroCrossing";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::GridTooCoarse: return "GridTooCoarse";
    case ErrorCode::NotApplicable: return "NotApplicable";
    case ErrorCode::PartitionMismatch: return "PartitionMismatch";
    case ErrorCode::ShootingDiverged: return "ShootingDiverged";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::SingularWeight: return "SingularWeight";
    case ErrorCode::NeedsSmoothness: return "NeedsSmoothness";
    case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorCode::SupportViolation: return "SupportViolation";
    case ErrorCode::NonSeparable: return "NonSeparable";
    case ErrorCode::DegeneratePoint: return "DegeneratePoint";
    case ErrorCode::SchemaError: return "SchemaError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace warpcheck
