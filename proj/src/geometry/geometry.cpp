#include "mvpt/geometry.h"

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "mvpt/error.h"

namespace mvpt {

const std::array<std::string_view, kNumJoints>& CocoJointNames() {
  static const std::array<std::string_view, kNumJoints> kNames = {
      "nose",       "l_eye",      "r_eye",   "l_ear",   "r_ear",
      "l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_wrist",
      "r_wrist",    "l_hip",      "r_hip",   "l_knee",  "r_knee",
      "l_ankle",    "r_ankle"};
  return kNames;
}

CameraView CameraView::FromKRt(std::string view_id, const Eigen::Matrix3d& K,
                               const Eigen::Matrix3d& R,
                               const Eigen::Vector3d& t, int width,
                               int height) {
  CameraView camera;
  camera.view_id = std::move(view_id);
  camera.projection.leftCols<3>() = K * R;
  camera.projection.col(3) = K * t;
  camera.width = width;
  camera.height = height;
  return camera;
}

Eigen::Vector3d CameraView::Center() const {
  const Eigen::Matrix3d M = projection.leftCols<3>();
  return -M.inverse() * projection.col(3);
}

CameraDecomposition DecomposeProjection(const Matrix34d& projection) {
  Matrix34d P = projection;
  if (P.leftCols<3>().determinant() < 0.0) {
    P = -P;
  }
  const Eigen::Matrix3d M = P.leftCols<3>();

  // RQ via QR of the row-reversed transpose.
  Eigen::Matrix3d flip;
  flip << 0, 0, 1, 0, 1, 0, 1, 0, 0;
  const Eigen::HouseholderQR<Eigen::Matrix3d> qr((flip * M).transpose());
  const Eigen::Matrix3d Q = qr.householderQ();
  const Eigen::Matrix3d Rt = qr.matrixQR().triangularView<Eigen::Upper>();
  Eigen::Matrix3d K = flip * Rt.transpose() * flip;
  Eigen::Matrix3d R = flip * Q.transpose();

  for (int i = 0; i < 3; ++i) {
    if (K(i, i) < 0.0) {
      K.col(i) *= -1.0;
      R.row(i) *= -1.0;
    }
  }
  CameraDecomposition out;
  out.t = K.inverse() * P.col(3);
  out.K = K / K(2, 2);
  out.R = R;
  return out;
}

void ValidateCamera(const CameraView& camera) {
  if (!camera.projection.allFinite()) {
    Throw(ErrorKind::kInvalidArgument,
          "camera '" + camera.view_id + "' has non-finite projection");
  }
  const Eigen::JacobiSVD<Matrix34d> svd(camera.projection);
  const auto& s = svd.singularValues();
  if (s(2) <= 1e-12 * s(0)) {
    Throw(ErrorKind::kInvalidArgument,
          "camera '" + camera.view_id + "' projection is not rank 3");
  }
  if (std::abs(camera.projection.leftCols<3>().determinant()) <=
      1e-12 * s(0) * s(0) * s(0)) {
    Throw(ErrorKind::kInvalidArgument,
          "camera '" + camera.view_id + "' has a singular left 3x3 block");
  }
  if (camera.width <= 0 || camera.height <= 0) {
    Throw(ErrorKind::kInvalidArgument,
          "camera '" + camera.view_id + "' has an empty image size");
  }
}

int Pose3D::NumValid() const {
  int n = 0;
  for (const bool v : valid) n += v ? 1 : 0;
  return n;
}

Pose3D MakePose(const JointMatrix3d& joints) {
  Pose3D pose;
  pose.joints = joints;
  pose.valid.fill(true);
  return pose;
}

void ValidatePose(const Pose3D& pose) {
  for (int j = 0; j < kNumJoints; ++j) {
    if (pose.valid[j] && !pose.joints.row(j).allFinite()) {
      Throw(ErrorKind::kInvalidArgument,
            "joint " + std::to_string(j) + " is valid but not finite");
    }
  }
}

Eigen::Vector2d ProjectPoint(const Matrix34d& projection,
                             const Eigen::Vector3d& point) {
  const Eigen::Vector3d x = projection * point.homogeneous();
  if (std::abs(x(2)) < 1e-9) {
    Throw(ErrorKind::kDegenerateProjection,
          "point lies on the camera principal plane");
  }
  return x.hnormalized();
}

Pose2D Project(const Pose3D& pose, const CameraView& camera) {
  Pose2D out;
  for (int j = 0; j < kNumJoints; ++j) {
    if (!pose.valid[j]) continue;
    const Eigen::Vector3d x =
        camera.projection * pose.joints.row(j).transpose().homogeneous();
    if (std::abs(x(2)) < 1e-9) {
      Throw(ErrorKind::kDegenerateProjection,
            "joint " + std::to_string(j) + " lies on the principal plane of '" +
                camera.view_id + "'");
    }
    out.points.row(j) = x.hnormalized().transpose();
    out.confidence(j) = 1.0;
  }
  return out;
}

Eigen::Vector3d TriangulatePoint(std::span<const Observation> observations) {
  int positive = 0;
  for (const Observation& obs : observations) {
    if (!(obs.weight >= 0.0) || !std::isfinite(obs.weight)) {
      Throw(ErrorKind::kInvalidArgument, "observation weights must be >= 0");
    }
    if (obs.weight > 0.0) ++positive;
  }
  if (positive < 2) {
    Throw(ErrorKind::kInsufficientViews,
          "need at least two observations with positive weight, got " +
              std::to_string(positive));
  }

  Eigen::Matrix<double, Eigen::Dynamic, 4> A(2 * positive, 4);
  int row = 0;
  for (const Observation& obs : observations) {
    if (obs.weight == 0.0) continue;
    const Matrix34d& P = obs.projection;
    A.row(row++) = obs.weight * (obs.point.x() * P.row(2) - P.row(0));
    A.row(row++) = obs.weight * (obs.point.y() * P.row(2) - P.row(1));
  }

  const Eigen::JacobiSVD<Eigen::Matrix<double, Eigen::Dynamic, 4>> svd(
      A, Eigen::ComputeFullV);
  const Eigen::Vector4d s = svd.singularValues();
  if (!(s(2) > 1e-12 * s(0))) {
    Throw(ErrorKind::kDegenerateGeometry,
          "triangulation system is rank deficient");
  }
  const Eigen::Vector4d X = svd.matrixV().col(3);
  if (std::abs(X(3)) < 1e-12 * X.head<3>().norm()) {
    Throw(ErrorKind::kDegenerateGeometry, "triangulated point at infinity");
  }
  return X.hnormalized();
}

Pose3D TriangulatePose(std::span<const CameraView> cameras,
                       std::span<const Pose2D> poses) {
  if (cameras.size() != poses.size()) {
    Throw(ErrorKind::kShapeMismatch,
          "got " + std::to_string(cameras.size()) + " cameras and " +
              std::to_string(poses.size()) + " 2D poses");
  }
  Pose3D out;
  std::vector<Observation> observations;
  for (int j = 0; j < kNumJoints; ++j) {
    observations.clear();
    for (size_t v = 0; v < cameras.size(); ++v) {
      const double c = poses[v].confidence(j);
      if (c > 0.0) {
        observations.push_back(
            {cameras[v].projection, poses[v].points.row(j).transpose(), c});
      }
    }
    if (observations.size() < 2) continue;
    try {
      out.joints.row(j) = TriangulatePoint(observations).transpose();
      out.valid[j] = true;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kDegenerateGeometry) throw;
    }
  }
  if (out.NumValid() == 0) {
    Throw(ErrorKind::kEmptyPose, "no joint could be triangulated");
  }
  return out;
}

double MeanSquaredError(const Pose3D& p, const Pose3D& q) {
  double sum = 0.0;
  int n = 0;
  for (int j = 0; j < kNumJoints; ++j) {
    if (!p.valid[j] || !q.valid[j]) continue;
    sum += (p.joints.row(j) - q.joints.row(j)).squaredNorm();
    ++n;
  }
  if (n == 0) {
    Throw(ErrorKind::kUndefinedDistance, "poses share no valid joint");
  }
  return sum / (3.0 * n);
}

double SmoothMseFromMse(double mse, double epsilon) {
  if (!(epsilon > 0.0)) {
    Throw(ErrorKind::kInvalidArgument, "smooth-MSE epsilon must be positive");
  }
  if (mse < epsilon) return mse;
  return std::pow(mse, 0.1) * std::pow(epsilon, 0.9);
}

double SmoothMse(const Pose3D& p, const Pose3D& q, double epsilon) {
  if (!(epsilon > 0.0)) {
    Throw(ErrorKind::kInvalidArgument, "smooth-MSE epsilon must be positive");
  }
  return SmoothMseFromMse(MeanSquaredError(p, q), epsilon);
}

}  // namespace mvpt
