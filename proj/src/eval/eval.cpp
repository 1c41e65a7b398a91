#include "mvpt/eval.h"

#include <cmath>
#include <fstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <torch/torch.h>

#include "mvpt/error.h"
#include "mvpt/image_tensor.h"
#include "mvpt/losses.h"
#include "mvpt/metrics.h"
#include "mvpt/trainer.h"

namespace mvpt {

namespace fs = std::filesystem;
using nlohmann::json;

void to_json(json& j, const FrameEval& f) {
  j = {{"source", PersonName(f.source)}, {"index", f.index},         {"mpjpe_cm", f.mpjpe_cm},
       {"residual_px", f.residual_px},   {"pose_loss", f.pose_loss}};
}

void from_json(const json& j, FrameEval& f) {
  f.source = ParsePerson(j.at("source").get<std::string>());
  f.index = j.at("index").get<int>();
  f.mpjpe_cm = j.at("mpjpe_cm").get<double>();
  f.residual_px = j.at("residual_px").get<double>();
  f.pose_loss = j.at("pose_loss").get<double>();
}

void to_json(json& j, const EvalReport& r) {
  j = {{"mpjpe_cm", r.mpjpe_cm},
       {"per_joint_error", r.per_joint_error},
       {"cross_view_residual_px", r.cross_view_residual_px},
       {"n_samples", r.n_samples},
       {"run_id", r.run_id},
       {"baseline", r.baseline},
       {"config_hash", r.config_hash},
       {"mean_pose_loss", r.mean_pose_loss},
       {"invalid_joints", r.invalid_joints},
       {"frames", r.frames}};
}

void from_json(const json& j, EvalReport& r) {
  r.mpjpe_cm = j.at("mpjpe_cm").get<double>();
  r.per_joint_error = j.at("per_joint_error").get<std::array<double, kNumJoints>>();
  r.cross_view_residual_px = j.at("cross_view_residual_px").get<double>();
  r.n_samples = j.at("n_samples").get<int>();
  r.run_id = j.at("run_id").get<std::string>();
  r.baseline = j.at("baseline").get<bool>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.mean_pose_loss = j.at("mean_pose_loss").get<double>();
  r.invalid_joints = j.at("invalid_joints").get<int>();
  r.frames = j.at("frames").get<std::vector<FrameEval>>();
}

void WriteReport(const EvalReport& report, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) Throw(ErrorKind::kIo, "cannot write " + path.string());
  out << json(report).dump(2) << "\n";
}

EvalReport ReadReport(const fs::path& path) {
  std::ifstream in(path);
  if (!in) Throw(ErrorKind::kIo, "cannot read " + path.string());
  try {
    return json::parse(in).get<EvalReport>();
  } catch (const json::exception& e) {
    Throw(ErrorKind::kInvalidConfig, "bad report " + path.string() + ": " + e.what());
  }
}

double ViewConsistency(const PoseEstimate& estimate, std::span<const CameraView> cameras) {
  const torch::Tensor& points = estimate.detections.points;
  const torch::Tensor& confidence = estimate.detections.confidence;
  if (!points.defined() || !confidence.defined()) {
    Throw(ErrorKind::kInvalidArgument, "view consistency needs per-view detections");
  }
  const int64_t views = points.size(0);
  if (views < 2) Throw(ErrorKind::kInsufficientViews, "view consistency needs >= 2 views");
  if (static_cast<int64_t>(cameras.size()) != views) {
    Throw(ErrorKind::kShapeMismatch, "one camera per view is required");
  }
  const torch::Tensor p = points.detach().to(torch::kFloat64).contiguous();
  const torch::Tensor c = confidence.detach().to(torch::kFloat64).contiguous();
  const torch::Tensor x = estimate.joints.detach().to(torch::kFloat64).contiguous();
  const auto pa = p.accessor<double, 3>();
  const auto ca = c.accessor<double, 2>();
  const auto xa = x.accessor<double, 2>();
  double sum = 0.0, weight = 0.0;
  for (int j = 0; j < kNumJoints; ++j) {
    if (!estimate.valid[j]) continue;
    const Eigen::Vector3d joint(xa[j][0], xa[j][1], xa[j][2]);
    for (int64_t v = 0; v < views; ++v) {
      const Eigen::Vector2d reprojected = ProjectPoint(cameras[v].projection, joint);
      const double dx = pa[v][j][0] - reprojected.x(), dy = pa[v][j][1] - reprojected.y();
      sum += ca[v][j] * std::sqrt(dx * dx + dy * dy);
      weight += ca[v][j];
    }
  }
  if (!(weight > 0.0)) Throw(ErrorKind::kEmptyPose, "no confident joint to compare");
  return sum / weight;
}

double ViewConsistency(const torch::Tensor& views, std::span<const CropTransform> crops,
                       const PoseEstimator& estimator) {
  if (views.dim() != 4 || views.size(0) < 2) {
    Throw(ErrorKind::kInsufficientViews, "view consistency needs >= 2 views");
  }
  torch::NoGradGuard no_grad;
  return ViewConsistency(estimator.Estimate(views, crops), estimator.cameras());
}

EvalReport EvaluateTranslation(const Dataset& dataset, const Translator& translate,
                               const PoseEstimator& estimator,
                               std::span<const TranslationCase> cases, const EvalSetup& setup) {
  torch::NoGradGuard no_grad;
  const std::vector<CameraView>& cameras = estimator.cameras();
  if (cameras.size() != setup.view_indices.size()) {
    Throw(ErrorKind::kShapeMismatch, "estimator cameras differ from the evaluated views");
  }
  EvalReport report;
  std::array<double, kNumJoints> joint_sum{};
  std::array<int, kNumJoints> joint_count{};
  double error_sum = 0.0, residual_sum = 0.0, loss_sum = 0.0;
  int64_t error_count = 0;
  for (const TranslationCase& c : cases) {
    for (const int index : c.indices) {
      std::mt19937_64 unused(0);
      const MultiViewSample s = SampleBatch(dataset, c.source, index, false, unused, setup.crop);
      std::vector<torch::Tensor> fakes;
      std::vector<CropTransform> crops;
      for (size_t i = 0; i < setup.view_indices.size(); ++i) {
        const int cam = setup.view_indices[i];
        const torch::Tensor real = ImageToTensor(s.images.at(cam)).unsqueeze(0);
        fakes.push_back(translate(static_cast<int>(i), c.source, real).squeeze(0));
        crops.push_back(s.crops.at(cam));
      }
      const PoseEstimate estimate = estimator.Estimate(torch::stack(fakes), crops);
      const Pose3D target = ScalePose(s.gt_pose, setup.skeleton, c.target_profile);
      const Pose3D pred = ToPose3D(estimate);
      const JointVectord errors = PerJointError(pred, target);

      FrameEval f;
      f.source = c.source;
      f.index = index;
      f.mpjpe_cm = Mpjpe(pred, target);
      f.residual_px = ViewConsistency(estimate, cameras);
      f.pose_loss = SmoothMseTensor(estimate.joints, estimate.valid, PoseTensor(target),
                                    target.valid, setup.epsilon)
                        .item<double>();
      for (int j = 0; j < kNumJoints; ++j) {
        if (std::isnan(errors[j])) {
          if (target.valid[j]) ++report.invalid_joints;
          continue;
        }
        joint_sum[j] += errors[j];
        ++joint_count[j];
        error_sum += errors[j];
        ++error_count;
      }
      residual_sum += f.residual_px;
      loss_sum += f.pose_loss;
      report.frames.push_back(f);
    }
  }
  report.n_samples = static_cast<int>(report.frames.size());
  if (report.n_samples == 0 || error_count == 0) {
    Throw(ErrorKind::kInvalidArgument, "nothing to evaluate");
  }
  report.mpjpe_cm = error_sum / error_count;
  for (int j = 0; j < kNumJoints; ++j) {
    report.per_joint_error[j] = joint_count[j] ? joint_sum[j] / joint_count[j] : 0.0;
  }
  report.cross_view_residual_px = residual_sum / report.n_samples;
  report.mean_pose_loss = loss_sum / report.n_samples;
  return report;
}

namespace {

struct LoadedRun {
  std::unique_ptr<JointTrainer> trainer;
  json manifest;
};

LoadedRun LoadRun(const fs::path& checkpoint, const Dataset& dataset) {
  LoadedRun run;
  run.manifest = ReadCheckpointManifest(checkpoint);
  run.trainer = LoadCheckpoint(checkpoint, dataset.cameras());
  for (int i = 0; i < run.trainer->num_views(); ++i) {
    run.trainer->view(i).to_a()->eval();
    run.trainer->view(i).to_b()->eval();
  }
  return run;
}

Translator MakeTranslator(JointTrainer& trainer) {
  return [&trainer](int view, Person source, const torch::Tensor& images) {
    ViewTranslator& t = trainer.view(view);
    return source == Person::kA ? t.to_b()(images) : t.to_a()(images);
  };
}

std::string RunId(const fs::path& checkpoint, const json& manifest) {
  // <run dir name>/epoch_NNNN
  const fs::path dir = fs::absolute(checkpoint).lexically_normal();
  const fs::path leaf = dir.filename().empty() ? dir.parent_path() : dir;
  char epoch[32];
  std::snprintf(epoch, sizeof(epoch), "epoch_%04d", manifest.at("epoch").get<int>());
  return leaf.parent_path().parent_path().filename().string() + "/" + epoch;
}

}  // namespace

EvalReport EvaluateRun(const fs::path& checkpoint, const Dataset& dataset, EvalSplit split,
                       const PoseEstimator& estimator) {
  LoadedRun run = LoadRun(checkpoint, dataset);
  const TrainConfig& config = run.trainer->config();
  const auto& est = estimator.cameras();
  bool same = est.size() == config.views.size();
  for (size_t i = 0; same && i < est.size(); ++i) same = est[i].view_id == config.views[i];
  if (!same) {
    Throw(ErrorKind::kIncompatibleCheckpoint, "estimator cameras differ from the checkpoint views");
  }
  const PoseSupervision profiles = MakeSupervision(dataset, config.heldout_fraction, nullptr);
  auto pick = [&](Person p) {
    const Split s = SplitIndices(dataset.NumSamples(p), config.heldout_fraction);
    return split == EvalSplit::kHeldout ? s.heldout : s.train;
  };
  const std::vector<TranslationCase> cases = {{Person::kA, pick(Person::kA), profiles.profile_b},
                                              {Person::kB, pick(Person::kB), profiles.profile_a}};
  EvalSetup setup;
  setup.view_indices = run.trainer->view_indices();
  setup.crop = {config.resolution, config.crop_margin};
  setup.epsilon = run.manifest.at("loss").get<LossWeights>().epsilon;
  EvalReport report =
      EvaluateTranslation(dataset, MakeTranslator(*run.trainer), estimator, cases, setup);
  report.run_id = RunId(checkpoint, run.manifest);
  report.baseline = run.manifest.at("loss").at("pose").get<double>() == 0.0;
  report.config_hash = run.manifest.at("config_hash").get<std::string>();
  return report;
}

std::vector<fs::path> RenderComparison(const fs::path& joint_checkpoint,
                                       const fs::path& baseline_checkpoint, const Dataset& dataset,
                                       std::span<const ComparisonFrame> frames,
                                       const fs::path& out_dir, int scale) {
  if (scale < 1) Throw(ErrorKind::kInvalidArgument, "grid scale must be >= 1");
  LoadedRun joint = LoadRun(joint_checkpoint, dataset);
  LoadedRun baseline = LoadRun(baseline_checkpoint, dataset);
  const TrainConfig& config = joint.trainer->config();
  if (baseline.trainer->view_indices() != joint.trainer->view_indices() ||
      baseline.trainer->config().resolution != config.resolution) {
    Throw(ErrorKind::kIncompatibleCheckpoint, "joint and baseline checkpoints cover different views");
  }
  for (const ComparisonFrame& f : frames) {
    const Split s = SplitIndices(dataset.NumSamples(f.person), config.heldout_fraction);
    if (std::find(s.heldout.begin(), s.heldout.end(), f.index) == s.heldout.end()) {
      Throw(ErrorKind::kOutOfRange,
            "frame " + std::to_string(f.index) + " of person " + std::string(PersonName(f.person)) +
                " is outside the held-out split; valid range [" + std::to_string(s.heldout.front()) +
                ", " + std::to_string(s.heldout.back()) + "]");
    }
  }
  fs::create_directories(out_dir);
  const CropOptions crop{config.resolution, config.crop_margin};
  const Translator by_joint = MakeTranslator(*joint.trainer);
  const Translator by_baseline = MakeTranslator(*baseline.trainer);
  const int r = config.resolution;
  const int views = joint.trainer->num_views();

  torch::NoGradGuard no_grad;
  std::vector<fs::path> written;
  json index = json::array();
  for (const ComparisonFrame& f : frames) {
    std::mt19937_64 unused(0);
    const MultiViewSample s = SampleBatch(dataset, f.person, f.index, false, unused, crop);
    cv::Mat grid(3 * r, views * r, CV_8UC3, cv::Scalar::all(0));
    for (int i = 0; i < views; ++i) {
      const cv::Mat& real = s.images.at(joint.trainer->view_indices()[i]);
      const torch::Tensor input = ImageToTensor(real).unsqueeze(0);
      real.copyTo(grid(cv::Rect(i * r, 0, r, r)));
      TensorToImage(by_joint(i, f.person, input).squeeze(0)).copyTo(grid(cv::Rect(i * r, r, r, r)));
      TensorToImage(by_baseline(i, f.person, input).squeeze(0))
          .copyTo(grid(cv::Rect(i * r, 2 * r, r, r)));
    }
    if (scale > 1) cv::resize(grid, grid, {}, scale, scale, cv::INTER_NEAREST);
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%05d.png", std::string(PersonName(f.person)).c_str(),
                  f.index);
    const fs::path path = out_dir / name;
    if (!cv::imwrite(path.string(), grid)) Throw(ErrorKind::kIo, "cannot write " + path.string());
    written.push_back(path);
    index.push_back({{"file", name}, {"person", PersonName(f.person)}, {"index", f.index}});
  }
  json views_json = json::array();
  for (int i = 0; i < views; ++i) views_json.push_back(joint.trainer->view(i).view_id());
  const json sidecar = {
      {"rows", {"real", "joint", "baseline"}},
      {"columns", views_json},
      {"joint", {{"checkpoint", joint_checkpoint.string()},
                 {"config_hash", joint.manifest.at("config_hash")}}},
      {"baseline", {{"checkpoint", baseline_checkpoint.string()},
                    {"config_hash", baseline.manifest.at("config_hash")}}},
      {"grids", index}};
  std::ofstream(out_dir / "grids.json") << sidecar.dump(2) << "\n";
  return written;
}

}  // namespace mvpt
