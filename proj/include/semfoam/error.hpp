#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace semfoam {

enum class ErrorCode {
  DegenerateInput,
  DuplicateSite,
  OutOfBounds,
  NotAdjacent,
  TooFewSites,
  StuckRay,
  NonGenericCrossing,
  ShapeMismatch,
  NonFiniteGradient,
  EmptyClass,
  ClassIdCollision,
  EmptyMatrix,
  BadSpec,
  BadMagic,
  VersionMismatch,
  Truncated,
  Io,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::DuplicateSite: return "DuplicateSite";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::NotAdjacent: return "NotAdjacent";
    case ErrorCode::TooFewSites: return "TooFewSites";
    case ErrorCode::StuckRay: return "StuckRay";
    case ErrorCode::NonGenericCrossing: return "NonGenericCrossing";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::ClassIdCollision: return "ClassIdCollision";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::BadSpec: return "BadSpec";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::Io: return "Io";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Single exception type for the library; `code()` tells callers which
/// contract was violated.
class FoamError : public std::runtime_error {
 public:
  FoamError(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace semfoam
