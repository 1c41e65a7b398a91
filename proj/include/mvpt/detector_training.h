#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <json.hpp>

#include "mvpt/dataset.h"
#include "mvpt/networks.h"

namespace mvpt {

struct DetectorTrainOptions {
  int iterations = 2000;
  int batch_size = 16;
  double learning_rate = 2e-3;  // Adam, cosine-decayed to 5% of this
  double heatmap_weight = 1.0;  // auxiliary cross-entropy against a Gaussian target
  double heatmap_sigma = 1.0;   // in heatmap cells
  bool color_jitter = true;     // per-image gains, offsets and noise
  uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const DetectorTrainOptions& o);
void from_json(const nlohmann::json& j, DetectorTrainOptions& o);

struct DetectorAccuracy {
  double mean_crop_px = 0.0;  // mean 2D error in crop pixels
  double mean_frame_px = 0.0;
  double mpjpe_cm = 0.0;      // after triangulating all views
  int samples = 0;
};

void to_json(nlohmann::json& j, const DetectorAccuracy& a);

// Indices of the samples a detector may use, per person.
struct PersonIndices {
  std::vector<int> a;
  std::vector<int> b;
};

// Trains on crops of both persons from all views. `progress`, when set, is
// called every 100 iterations with (iteration, running loss).
KeypointDetector TrainDetector(const Dataset& dataset, const PersonIndices& train,
                               const DetectorOptions& options,
                               const DetectorTrainOptions& train_options,
                               const CropOptions& crop_options,
                               const std::function<void(int, double)>& progress = {});

// Accuracy on un-augmented crops of the given samples.
DetectorAccuracy EvaluateDetector(KeypointDetector& detector, const Dataset& dataset,
                                  const PersonIndices& samples, const CropOptions& crop_options);

}  // namespace mvpt
