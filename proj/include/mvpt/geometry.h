#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace mvpt {

inline constexpr int kNumJoints = 17;

using Matrix34d = Eigen::Matrix<double, 3, 4>;
using JointMatrix3d = Eigen::Matrix<double, kNumJoints, 3>;
using JointMatrix2d = Eigen::Matrix<double, kNumJoints, 2>;
using JointVectord = Eigen::Matrix<double, kNumJoints, 1>;
using JointMask = std::array<bool, kNumJoints>;

// COCO-17 order: nose, l_eye, r_eye, l_ear, r_ear, l_shoulder, r_shoulder,
// l_elbow, r_elbow, l_wrist, r_wrist, l_hip, r_hip, l_knee, r_knee, l_ankle,
// r_ankle.
const std::array<std::string_view, kNumJoints>& CocoJointNames();

// A calibrated pinhole camera. `projection` maps homogeneous world points
// (centimeters) to homogeneous full-frame pixel coordinates, with pixel
// centers at integer coordinates.
struct CameraView {
  std::string view_id;
  Matrix34d projection = Matrix34d::Zero();
  int width = 0;
  int height = 0;

  static CameraView FromKRt(std::string view_id, const Eigen::Matrix3d& K,
                            const Eigen::Matrix3d& R, const Eigen::Vector3d& t,
                            int width, int height);

  Eigen::Vector3d Center() const;
};

struct CameraDecomposition {
  Eigen::Matrix3d K;
  Eigen::Matrix3d R;
  Eigen::Vector3d t;
};

// RQ-decomposes the projection into K [R | t] with K upper triangular,
// positive diagonal, K(2,2) = 1 and det(R) = +1.
CameraDecomposition DecomposeProjection(const Matrix34d& projection);

// Throws kInvalidArgument unless the projection has rank 3 and a
// non-degenerate image size.
void ValidateCamera(const CameraView& camera);

struct Pose3D {
  JointMatrix3d joints = JointMatrix3d::Zero();
  JointMask valid{};

  int NumValid() const;
};

struct Pose2D {
  JointMatrix2d points = JointMatrix2d::Zero();
  JointVectord confidence = JointVectord::Zero();
};

Pose3D MakePose(const JointMatrix3d& joints);

// Checks finite valid entries; throws kInvalidArgument otherwise.
void ValidatePose(const Pose3D& pose);

Eigen::Vector2d ProjectPoint(const Matrix34d& projection,
                             const Eigen::Vector3d& point);

// Perspective projection of every valid joint. Invalid joints get zero
// confidence and are not projected.
Pose2D Project(const Pose3D& pose, const CameraView& camera);

struct Observation {
  Matrix34d projection;
  Eigen::Vector2d point;
  double weight = 1.0;
};

// Weighted algebraic (DLT) triangulation: the right singular vector of the
// stacked, weight-scaled two-rows-per-view system with the smallest singular
// value, dehomogenized.
Eigen::Vector3d TriangulatePoint(std::span<const Observation> observations);

// Joint-wise TriangulatePoint with the 2D confidences as weights. Joints seen
// with positive confidence in fewer than two views (or whose system is
// degenerate) come back invalid.
Pose3D TriangulatePose(std::span<const CameraView> cameras,
                       std::span<const Pose2D> poses);

// Mean squared per-coordinate error over joints valid in both poses.
double MeanSquaredError(const Pose3D& p, const Pose3D& q);

// Outlier-robust pose distance: M if M < epsilon, else M^0.1 * epsilon^0.9,
// where M is MeanSquaredError.
double SmoothMse(const Pose3D& p, const Pose3D& q, double epsilon);
double SmoothMseFromMse(double mse, double epsilon);

}  // namespace mvpt
