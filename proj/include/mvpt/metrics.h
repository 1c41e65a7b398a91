#pragma once

#include "mvpt/geometry.h"

namespace mvpt {

// Mean Euclidean per-joint distance over jointly valid joints (run units).
double Mpjpe(const Pose3D& pred, const Pose3D& ref);

// Per-joint Euclidean distance; NaN where the joint is not valid in both.
JointVectord PerJointError(const Pose3D& pred, const Pose3D& ref);

}  // namespace mvpt
