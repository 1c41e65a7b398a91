#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvpt/eval.h"
#include "mvpt/panoptic.h"
#include "mvpt/synth.h"
#include "mvpt/trainer.h"

namespace mvpt {

struct DataConfig {
  std::string path;                // dataset directory (manifest.json)
  std::vector<std::string> views;  // camera ids; empty means all
  double heldout_fraction = 0.1;
  double crop_margin = 1.2;
  SynthConfig synth;
  PanopticIngestOptions panoptic;
};

struct EvalConfig {
  EvalSplit split = EvalSplit::kHeldout;
  int grid_scale = 2;
};

// The run configuration file: sections data, model, loss, train and eval.
// Missing keys keep their defaults; unknown keys raise kInvalidConfig.
struct RunConfig {
  DataConfig data;
  ModelConfig model;
  LossWeights loss;
  TrainConfig train;  // views, crop margin and split come from `data`
  EvalConfig eval;

  static RunConfig FromJson(const nlohmann::json& j);
  static RunConfig Load(const std::filesystem::path& file);
  nlohmann::json ToJson() const;
  // FNV-1a of the canonical JSON with every default filled in.
  std::string Hash() const;
  // Throws kInvalidConfig on inconsistent sections.
  void Validate() const;

  // Train section with the data and loss fields folded in.
  TrainConfig EffectiveTrain() const;
  CropOptions Crop() const { return {train.resolution, data.crop_margin}; }
};

// Resolves data.path: absolute paths as given, relative ones against
// MVPT_DATA_ROOT when set, else the working directory. Throws
// kInvalidConfig naming data.path when it is empty.
std::filesystem::path ResolveDataPath(const std::string& path);

using LogFn = std::function<void(const std::string&)>;

// Loads the frozen detector from model.estimator_path, or trains one on the
// training split of both persons and saves it there first. `fallback_dir`
// replaces an empty estimator_path.
std::shared_ptr<const PoseEstimator> LoadOrTrainEstimator(const RunConfig& config,
                                                          const Dataset& dataset,
                                                          const std::filesystem::path& fallback_dir,
                                                          const LogFn& log = {});

// Cameras of data.views (all cameras when empty), in order.
std::vector<CameraView> SelectedCameras(const RunConfig& config, const Dataset& dataset);

struct TrainRequest {
  std::filesystem::path run_dir;
  std::optional<std::filesystem::path> resume;
  bool baseline = false;  // forces the pose weight to zero
};

// Trains (or resumes) a run. Writes run_dir/config.json with the effective
// configuration and its hash.
TrainSummary RunTraining(RunConfig config, const Dataset& dataset, const TrainRequest& request,
                         const LogFn& log = {},
                         const std::function<void(int, int64_t, const StepReport&)>& on_step = {},
                         const std::atomic<bool>* stop = nullptr);

// The configuration stored next to a run's checkpoints.
RunConfig RunConfigOf(const std::filesystem::path& checkpoint);

}  // namespace mvpt
