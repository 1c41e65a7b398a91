#include "mvpt/metrics.h"

#include <limits>

#include "mvpt/error.h"

namespace mvpt {

double Mpjpe(const Pose3D& pred, const Pose3D& ref) {
  double sum = 0.0;
  int n = 0;
  for (int j = 0; j < kNumJoints; ++j) {
    if (!pred.valid[j] || !ref.valid[j]) continue;
    sum += (pred.joints.row(j) - ref.joints.row(j)).norm();
    ++n;
  }
  if (n == 0) {
    Throw(ErrorKind::kUndefinedDistance, "poses share no valid joint");
  }
  return sum / n;
}

JointVectord PerJointError(const Pose3D& pred, const Pose3D& ref) {
  JointVectord out;
  for (int j = 0; j < kNumJoints; ++j) {
    out(j) = (pred.valid[j] && ref.valid[j])
                 ? (pred.joints.row(j) - ref.joints.row(j)).norm()
                 : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

}  // namespace mvpt
