#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/types.h>

#include "mvpt/dataset.h"
#include "mvpt/detector_training.h"
#include "mvpt/estimator.h"
#include "mvpt/skeleton.h"

namespace mvpt {

// Metrics of one translated multi-view tuple.
struct FrameEval {
  Person source = Person::kA;
  int index = 0;
  double mpjpe_cm = 0.0;
  double residual_px = 0.0;
  double pose_loss = 0.0;  // smooth MSE, as in training
};

struct EvalReport {
  double mpjpe_cm = 0.0;
  std::array<double, kNumJoints> per_joint_error{};
  double cross_view_residual_px = 0.0;
  int n_samples = 0;
  std::string run_id;
  bool baseline = false;
  std::string config_hash;
  double mean_pose_loss = 0.0;
  int invalid_joints = 0;  // estimate joints left out of the averages
  std::vector<FrameEval> frames;
};

void to_json(nlohmann::json& j, const FrameEval& f);
void from_json(const nlohmann::json& j, FrameEval& f);
void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);
void WriteReport(const EvalReport& report, const std::filesystem::path& path);
EvalReport ReadReport(const std::filesystem::path& path);

// Confidence-weighted mean distance, in full-frame pixels, between each
// view's detections and the reprojection of the pose triangulated from all
// views. Throws kInsufficientViews for fewer than two views.
double ViewConsistency(const torch::Tensor& views, std::span<const CropTransform> crops,
                       const PoseEstimator& estimator);
// Same residual for an estimate that is already available.
double ViewConsistency(const PoseEstimate& estimate, std::span<const CameraView> cameras);

// Maps the crops of `source` frames, one view at a time, into the other
// person's domain: (view position, source person, [N, 3, R, R]) -> images.
using Translator = std::function<torch::Tensor(int, Person, const torch::Tensor&)>;

struct TranslationCase {
  Person source = Person::kA;
  std::vector<int> indices;     // source frames
  LimbProfile target_profile;   // body the fakes should show
};

struct EvalSetup {
  std::vector<int> view_indices;  // dataset cameras the translator covers
  CropOptions crop;
  double epsilon = 400.0;
  Skeleton skeleton = Skeleton::Coco17();
};

// Translates every listed frame, estimates its 3D pose, and compares it with
// the source pose retargeted to the target profile.
EvalReport EvaluateTranslation(const Dataset& dataset, const Translator& translate,
                               const PoseEstimator& estimator,
                               std::span<const TranslationCase> cases, const EvalSetup& setup);

enum class EvalSplit { kHeldout, kTrain };

// Held-out (or training) frames of both persons, translated A -> B and
// B -> A by the checkpoint's generators. Deterministic for a checkpoint.
// Throws kIncompatibleCheckpoint when cameras or resolution disagree.
EvalReport EvaluateRun(const std::filesystem::path& checkpoint, const Dataset& dataset,
                       EvalSplit split, const PoseEstimator& estimator);

struct ComparisonFrame {
  Person person = Person::kA;
  int index = 0;
};

// One PNG per frame: rows real / joint fake / baseline fake, one column per
// view, plus grids.json naming the inputs. Frames must lie in the held-out
// split (kOutOfRange lists the valid range). Returns the written images.
std::vector<std::filesystem::path> RenderComparison(const std::filesystem::path& joint_checkpoint,
                                                    const std::filesystem::path& baseline_checkpoint,
                                                    const Dataset& dataset,
                                                    std::span<const ComparisonFrame> frames,
                                                    const std::filesystem::path& out_dir,
                                                    int scale = 2);

}  // namespace mvpt
