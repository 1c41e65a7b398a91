#include "mvpt/error.h"

namespace mvpt {

std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kDegenerateProjection: return "degenerate-projection";
    case ErrorKind::kInsufficientViews: return "insufficient-views";
    case ErrorKind::kDegenerateGeometry: return "degenerate-geometry";
    case ErrorKind::kEmptyPose: return "empty-pose";
    case ErrorKind::kUndefinedDistance: return "undefined-distance";
    case ErrorKind::kIncompleteProfile: return "incomplete-profile";
    case ErrorKind::kDegenerateBone: return "degenerate-bone";
    case ErrorKind::kShapeMismatch: return "shape-mismatch";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kResolutionMismatch: return "resolution-mismatch";
    case ErrorKind::kInvalidConfig: return "invalid-config";
    case ErrorKind::kMissingCamera: return "missing-camera";
    case ErrorKind::kMissingCalibration: return "missing-calibration";
    case ErrorKind::kMissingFrames: return "missing-frames";
    case ErrorKind::kMalformedSkeleton: return "malformed-skeleton";
    case ErrorKind::kOutOfRange: return "out-of-range";
    case ErrorKind::kIncompatibleCheckpoint: return "incompatible-checkpoint";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + message),
      kind_(kind) {}

void Throw(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace mvpt
