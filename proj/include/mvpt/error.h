#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mvpt {

enum class ErrorKind {
  kInvalidArgument,
  kDegenerateProjection,
  kInsufficientViews,
  kDegenerateGeometry,
  kEmptyPose,
  kUndefinedDistance,
  kIncompleteProfile,
  kDegenerateBone,
  kShapeMismatch,
  kNumeric,
  kResolutionMismatch,
  kInvalidConfig,
  kMissingCamera,
  kMissingCalibration,
  kMissingFrames,
  kMalformedSkeleton,
  kOutOfRange,
  kIncompatibleCheckpoint,
  kIo,
};

std::string_view ErrorKindName(ErrorKind kind);

// Every failure raised by the library carries a kind so callers (and tests)
// can dispatch on it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void Throw(ErrorKind kind, const std::string& message);

}  // namespace mvpt
