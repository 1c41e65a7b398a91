#include "mvpt/estimator.h"

#include <fstream>

#include <torch/torch.h>

#include "mvpt/error.h"

namespace mvpt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

torch::TensorOptions Float64() { return torch::TensorOptions().dtype(torch::kFloat64); }

}  // namespace

torch::Tensor CropToFrame(const torch::Tensor& crop_points, std::span<const CropTransform> crops) {
  if (crop_points.dim() != 3 || crop_points.size(0) != static_cast<int64_t>(crops.size()) ||
      crop_points.size(2) != 2) {
    Throw(ErrorKind::kShapeMismatch, "crop points must be [V, J, 2] with one crop per view");
  }
  torch::Tensor m = torch::empty({static_cast<int64_t>(crops.size()), 2, 3}, Float64());
  auto acc = m.accessor<double, 3>();
  for (size_t v = 0; v < crops.size(); ++v) {
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 3; ++c) acc[v][r][c] = crops[v].crop_to_frame(r, c);
  }
  const torch::Tensor p = crop_points.to(torch::kFloat64);
  const torch::Tensor linear = m.slice(2, 0, 2);  // [V, 2, 2]
  return torch::matmul(p, linear.transpose(1, 2)) + m.select(2, 2).unsqueeze(1);
}

torch::Tensor ProjectionTensor(std::span<const CameraView> cameras) {
  torch::Tensor p = torch::empty({static_cast<int64_t>(cameras.size()), 3, 4}, Float64());
  auto acc = p.accessor<double, 3>();
  for (size_t v = 0; v < cameras.size(); ++v) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) acc[v][r][c] = cameras[v].projection(r, c);
  }
  return p;
}

TriangulatedJoints TriangulateJoints(const torch::Tensor& projections,
                                     const torch::Tensor& points, const torch::Tensor& weights,
                                     double min_weight) {
  const int64_t num_views = projections.size(0);
  if (projections.dim() != 3 || projections.size(1) != 3 || projections.size(2) != 4 ||
      points.dim() != 3 || points.size(0) != num_views || points.size(2) != 2 ||
      weights.dim() != 2 || weights.size(0) != num_views || weights.size(1) != points.size(1)) {
    Throw(ErrorKind::kShapeMismatch, "triangulation expects P [V,3,4], x [V,J,2], w [V,J]");
  }
  const int64_t num_joints = points.size(1);
  const torch::Tensor P = projections.to(torch::kFloat64);
  const torch::Tensor x = points.to(torch::kFloat64);
  const torch::Tensor w_raw = weights.to(torch::kFloat64);
  const torch::Tensor w = torch::where(w_raw > min_weight, w_raw, torch::zeros_like(w_raw));

  // Rows w * (x * P3 - P1) and w * (y * P3 - P2) for every view and joint.
  const torch::Tensor p1 = P.select(1, 0).unsqueeze(1);  // [V, 1, 4]
  const torch::Tensor p2 = P.select(1, 1).unsqueeze(1);
  const torch::Tensor p3 = P.select(1, 2).unsqueeze(1);
  const torch::Tensor wx = w.unsqueeze(-1);
  const torch::Tensor row_x = wx * (x.select(2, 0).unsqueeze(-1) * p3 - p1);  // [V, J, 4]
  const torch::Tensor row_y = wx * (x.select(2, 1).unsqueeze(-1) * p3 - p2);
  const torch::Tensor A = torch::stack({row_x, row_y}, 1)  // [V, 2, J, 4]
                              .permute({2, 0, 1, 3})
                              .reshape({num_joints, 2 * num_views, 4});

  TriangulatedJoints out;
  out.joints = torch::zeros({num_joints, 3}, Float64());
  const torch::Tensor views_used = (w > 0).sum(0);  // [J]
  std::vector<int64_t> candidates;
  for (int64_t j = 0; j < num_joints; ++j) {
    if (views_used[j].item<int64_t>() >= 2) candidates.push_back(j);
  }
  if (candidates.empty() || num_views < 2) return out;

  const torch::Tensor index = torch::tensor(candidates, torch::kInt64);
  const auto [U, S, Vh] = torch::linalg_svd(A.index_select(0, index), false);
  const torch::Tensor X = Vh.select(1, 3);  // [K, 4]
  const torch::Tensor s = S.detach();
  const torch::Tensor Xd = X.detach();
  std::vector<int64_t> good;
  std::vector<int64_t> rows;
  for (size_t k = 0; k < candidates.size(); ++k) {
    const double s0 = s[k][0].item<double>(), s2 = s[k][2].item<double>();
    const double w4 = std::abs(Xd[k][3].item<double>());
    const double n3 = Xd[k].slice(0, 0, 3).norm().item<double>();
    if (s2 > 1e-12 * s0 && w4 >= 1e-12 * n3) {
      good.push_back(candidates[k]);
      rows.push_back(static_cast<int64_t>(k));
    }
  }
  if (good.empty()) return out;
  const torch::Tensor Xg = X.index_select(0, torch::tensor(rows, torch::kInt64));
  const torch::Tensor joints = Xg.slice(1, 0, 3) / Xg.slice(1, 3, 4);
  out.joints = out.joints.index_copy(0, torch::tensor(good, torch::kInt64), joints);
  for (const int64_t j : good) out.valid[j] = true;
  return out;
}

DetectorKeypointSource::DetectorKeypointSource(KeypointDetector detector)
    : detector_(std::move(detector)) {
  detector_->eval();
  for (auto& p : detector_->parameters()) p.set_requires_grad(false);
}

Detections2D DetectorKeypointSource::Detect(const torch::Tensor& views,
                                            std::span<const CropTransform> crops) const {
  const KeypointDetection d = detector_.ptr()->Detect(views);
  return {CropToFrame(d.points, crops), d.confidence.to(torch::kFloat64)};
}

std::vector<torch::Tensor> DetectorKeypointSource::Parameters() const {
  std::vector<torch::Tensor> out = detector_->parameters();
  for (const auto& b : detector_->buffers()) out.push_back(b);
  return out;
}

OracleKeypointSource::OracleKeypointSource(std::vector<Pose2D> per_view)
    : per_view_(std::move(per_view)) {}

Detections2D OracleKeypointSource::Detect(const torch::Tensor& views,
                                          std::span<const CropTransform> crops) const {
  const int64_t num_views = static_cast<int64_t>(per_view_.size());
  if (views.size(0) != num_views || static_cast<int64_t>(crops.size()) != num_views) {
    Throw(ErrorKind::kShapeMismatch, "oracle keypoints were given for a different view count");
  }
  Detections2D out;
  out.points = torch::empty({num_views, kNumJoints, 2}, Float64());
  out.confidence = torch::empty({num_views, kNumJoints}, Float64());
  auto p = out.points.accessor<double, 3>();
  auto c = out.confidence.accessor<double, 2>();
  for (int64_t v = 0; v < num_views; ++v) {
    for (int j = 0; j < kNumJoints; ++j) {
      p[v][j][0] = per_view_[v].points(j, 0);
      p[v][j][1] = per_view_[v].points(j, 1);
      c[v][j] = per_view_[v].confidence(j);
    }
  }
  return out;
}

TriangulatingEstimator::TriangulatingEstimator(std::shared_ptr<const KeypointSource> source,
                                               std::vector<CameraView> cameras,
                                               double min_confidence)
    : source_(std::move(source)),
      cameras_(std::move(cameras)),
      projections_(ProjectionTensor(cameras_)),
      min_confidence_(min_confidence) {
  if (!source_) Throw(ErrorKind::kInvalidArgument, "estimator needs a keypoint source");
  for (const CameraView& c : cameras_) ValidateCamera(c);
}

PoseEstimate TriangulatingEstimator::Estimate(const torch::Tensor& views,
                                              std::span<const CropTransform> crops) const {
  if (views.dim() != 4 || views.size(0) != static_cast<int64_t>(cameras_.size()) ||
      crops.size() != cameras_.size()) {
    Throw(ErrorKind::kShapeMismatch, "estimator expects one image and one crop per camera (" +
                                         std::to_string(cameras_.size()) + ")");
  }
  PoseEstimate out;
  out.detections = source_->Detect(views, crops);
  TriangulatedJoints t = TriangulateJoints(projections_, out.detections.points,
                                           out.detections.confidence, min_confidence_);
  if (std::none_of(t.valid.begin(), t.valid.end(), [](bool b) { return b; })) {
    Throw(ErrorKind::kEmptyPose, "no joint could be triangulated");
  }
  out.joints = std::move(t.joints);
  out.valid = t.valid;
  return out;
}

ExternalPoseEstimator::ExternalPoseEstimator(Function function, std::vector<CameraView> cameras)
    : function_(std::move(function)), cameras_(std::move(cameras)) {
  if (!function_) Throw(ErrorKind::kInvalidArgument, "external estimator needs a callable");
}

PoseEstimate ExternalPoseEstimator::Estimate(const torch::Tensor& views,
                                             std::span<const CropTransform> crops) const {
  PoseEstimate out = function_(views, crops);
  if (!out.joints.defined() || out.joints.size(0) != kNumJoints || out.joints.size(1) != 3) {
    Throw(ErrorKind::kShapeMismatch, "external estimator must return [17, 3] joints");
  }
  if (std::none_of(out.valid.begin(), out.valid.end(), [](bool b) { return b; })) {
    Throw(ErrorKind::kEmptyPose, "external estimator returned no valid joint");
  }
  return out;
}

Pose3D ToPose3D(const PoseEstimate& estimate) {
  const torch::Tensor j = estimate.joints.detach().to(torch::kFloat64).contiguous();
  auto acc = j.accessor<double, 2>();
  Pose3D pose;
  for (int r = 0; r < kNumJoints; ++r) {
    for (int c = 0; c < 3; ++c) pose.joints(r, c) = estimate.valid[r] ? acc[r][c] : 0.0;
  }
  pose.valid = estimate.valid;
  return pose;
}

torch::Tensor PoseTensor(const Pose3D& pose) {
  torch::Tensor t = torch::empty({kNumJoints, 3}, Float64());
  auto acc = t.accessor<double, 2>();
  for (int r = 0; r < kNumJoints; ++r)
    for (int c = 0; c < 3; ++c) acc[r][c] = pose.joints(r, c);
  return t;
}

void SaveDetector(const KeypointDetector& detector, const json& info, const fs::path& dir) {
  fs::create_directories(dir);
  torch::save(detector, (dir / "detector.pt").string());
  std::ofstream out(dir / "detector.json");
  if (!out) Throw(ErrorKind::kIo, "cannot write " + (dir / "detector.json").string());
  out << json{{"options", detector->options()}, {"info", info}}.dump(2) << '\n';
}

KeypointDetector LoadDetector(const fs::path& dir, json* info) {
  std::ifstream in(dir / "detector.json");
  if (!in) Throw(ErrorKind::kIo, "cannot read " + (dir / "detector.json").string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    Throw(ErrorKind::kIo, std::string("malformed detector.json: ") + e.what());
  }
  KeypointDetector detector(j.at("options").get<DetectorOptions>());
  try {
    torch::load(detector, (dir / "detector.pt").string());
  } catch (const c10::Error& e) {
    Throw(ErrorKind::kIo, "cannot load " + (dir / "detector.pt").string() + ": " + e.what_without_backtrace());
  }
  detector->eval();
  if (info) *info = j.value("info", json::object());
  return detector;
}

}  // namespace mvpt
