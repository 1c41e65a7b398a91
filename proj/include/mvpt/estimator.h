#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <torch/types.h>

#include "mvpt/dataset.h"
#include "mvpt/geometry.h"
#include "mvpt/networks.h"

namespace mvpt {

// Per-view 2D keypoints in full-frame pixels.
struct Detections2D {
  torch::Tensor points;      // [V, J, 2] float64
  torch::Tensor confidence;  // [V, J] float64, >= 0
};

// Maps crop pixels [V, J, 2] to full-frame pixels through per-view crops.
torch::Tensor CropToFrame(const torch::Tensor& crop_points, std::span<const CropTransform> crops);

// Confidence-weighted DLT per joint, differentiable in points and weights.
// `projections` is [V, 3, 4]. Joints with fewer than two views above
// `min_weight`, or a rank-deficient system, come back invalid with zeros.
struct TriangulatedJoints {
  torch::Tensor joints;  // [J, 3] float64
  JointMask valid{};
};
TriangulatedJoints TriangulateJoints(const torch::Tensor& projections,
                                     const torch::Tensor& points, const torch::Tensor& weights,
                                     double min_weight = 1e-6);

torch::Tensor ProjectionTensor(std::span<const CameraView> cameras);

class KeypointSource {
 public:
  virtual ~KeypointSource() = default;
  // `views` is [V, 3, R, R]; `crops` maps each view's crop into its frame.
  virtual Detections2D Detect(const torch::Tensor& views,
                              std::span<const CropTransform> crops) const = 0;
  virtual std::vector<torch::Tensor> Parameters() const { return {}; }
};

// A trained keypoint detector, frozen: no parameter requires grad and the
// module stays in eval mode. Gradients still flow to the input images.
class DetectorKeypointSource : public KeypointSource {
 public:
  explicit DetectorKeypointSource(KeypointDetector detector);
  Detections2D Detect(const torch::Tensor& views,
                      std::span<const CropTransform> crops) const override;
  std::vector<torch::Tensor> Parameters() const override;
  const KeypointDetector& detector() const { return detector_; }

 private:
  KeypointDetector detector_;
};

// Ground-truth 2D keypoints per view with unit confidence, regardless of the
// images. Used to check the estimator and metrics against the geometry.
class OracleKeypointSource : public KeypointSource {
 public:
  explicit OracleKeypointSource(std::vector<Pose2D> per_view);
  Detections2D Detect(const torch::Tensor& views,
                      std::span<const CropTransform> crops) const override;

 private:
  std::vector<Pose2D> per_view_;
};

struct PoseEstimate {
  torch::Tensor joints;  // [J, 3] float64, differentiable w.r.t. the images
  JointMask valid{};
  Detections2D detections;
};

class PoseEstimator {
 public:
  virtual ~PoseEstimator() = default;
  // Throws kEmptyPose when no joint could be estimated.
  virtual PoseEstimate Estimate(const torch::Tensor& views,
                                std::span<const CropTransform> crops) const = 0;
  virtual std::vector<torch::Tensor> Parameters() const { return {}; }
  virtual const std::vector<CameraView>& cameras() const = 0;
};

// Keypoints per view, then confidence-weighted triangulation.
class TriangulatingEstimator : public PoseEstimator {
 public:
  TriangulatingEstimator(std::shared_ptr<const KeypointSource> source,
                         std::vector<CameraView> cameras, double min_confidence = 1e-6);
  PoseEstimate Estimate(const torch::Tensor& views,
                        std::span<const CropTransform> crops) const override;
  std::vector<torch::Tensor> Parameters() const override { return source_->Parameters(); }
  const std::vector<CameraView>& cameras() const override { return cameras_; }
  const KeypointSource& source() const { return *source_; }

 private:
  std::shared_ptr<const KeypointSource> source_;
  std::vector<CameraView> cameras_;
  torch::Tensor projections_;
  double min_confidence_;
};

// Adapter slot for an externally provided multi-view pose network. The
// callable must be differentiable w.r.t. `views` and keep its own weights
// frozen.
class ExternalPoseEstimator : public PoseEstimator {
 public:
  using Function =
      std::function<PoseEstimate(const torch::Tensor&, std::span<const CropTransform>)>;
  ExternalPoseEstimator(Function function, std::vector<CameraView> cameras);
  PoseEstimate Estimate(const torch::Tensor& views,
                        std::span<const CropTransform> crops) const override;
  const std::vector<CameraView>& cameras() const override { return cameras_; }

 private:
  Function function_;
  std::vector<CameraView> cameras_;
};

// Detached copy of an estimate as a geometry pose.
Pose3D ToPose3D(const PoseEstimate& estimate);

torch::Tensor PoseTensor(const Pose3D& pose);  // [J, 3] float64

// Saves / loads a detector as <dir>/detector.pt plus <dir>/detector.json
// (options and free-form `info`).
void SaveDetector(const KeypointDetector& detector, const nlohmann::json& info,
                  const std::filesystem::path& dir);
KeypointDetector LoadDetector(const std::filesystem::path& dir, nlohmann::json* info = nullptr);

}  // namespace mvpt
