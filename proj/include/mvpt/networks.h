#pragma once

#include <json.hpp>
#include <torch/nn.h>

namespace mvpt {

// Encoder, residual blocks, decoder; tanh output in [-1, 1].
struct GeneratorOptions {
  int resolution = 64;
  int base_channels = 16;
  int downsamplings = 2;
  int residual_blocks = 3;
};

// Patch classifier; the output is a spatial map of raw scores.
struct DiscriminatorOptions {
  int resolution = 64;
  int base_channels = 16;
  int layers = 3;
};

struct DetectorOptions {
  int resolution = 64;
  int base_channels = 16;
  int heatmap_stride = 2;      // 1, 2 or 4
  double temperature = 100.0;  // multiplies the raw logits before the softmax
};

void to_json(nlohmann::json& j, const GeneratorOptions& o);
void from_json(const nlohmann::json& j, GeneratorOptions& o);
void to_json(nlohmann::json& j, const DiscriminatorOptions& o);
void from_json(const nlohmann::json& j, DiscriminatorOptions& o);
void to_json(nlohmann::json& j, const DetectorOptions& o);
void from_json(const nlohmann::json& j, DetectorOptions& o);

void Validate(const GeneratorOptions& o);
void Validate(const DiscriminatorOptions& o);
void Validate(const DetectorOptions& o);

class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(ResidualBlock);

class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorOptions& options);
  // [N, 3, R, R] -> [N, 3, R, R]. Throws kResolutionMismatch.
  torch::Tensor forward(const torch::Tensor& images);
  const GeneratorOptions& options() const { return options_; }

 private:
  GeneratorOptions options_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(Generator);

class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const DiscriminatorOptions& options);
  // [N, 3, R, R] -> [N, 1, h, w] raw scores.
  torch::Tensor forward(const torch::Tensor& images);
  const DiscriminatorOptions& options() const { return options_; }

 private:
  DiscriminatorOptions options_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(Discriminator);

// Per-joint heatmaps, normalized to sum to one over the grid.
torch::Tensor NormalizeHeatmaps(const torch::Tensor& logits, double temperature);

// Expected grid position (x = column, y = row) under each heatmap;
// [..., H, W] -> [..., 2].
torch::Tensor SoftArgmax(const torch::Tensor& heatmaps);

// Largest probability mass inside any 3x3 window; [..., H, W] -> [...].
torch::Tensor PeakMass(const torch::Tensor& heatmaps);

// Heatmap grid coordinates to crop pixels (pixel centers at integers).
torch::Tensor GridToCrop(const torch::Tensor& grid, int stride);

struct KeypointDetection {
  torch::Tensor points;      // [N, J, 2] crop pixels
  torch::Tensor confidence;  // [N, J]
  torch::Tensor heatmaps;    // [N, J, h, w], each summing to one
};

class KeypointDetectorImpl : public torch::nn::Module {
 public:
  explicit KeypointDetectorImpl(const DetectorOptions& options);
  // Raw heatmap logits [N, J, R / stride, R / stride].
  torch::Tensor forward(const torch::Tensor& images);
  KeypointDetection Detect(const torch::Tensor& images);
  const DetectorOptions& options() const { return options_; }

 private:
  DetectorOptions options_;
  torch::nn::Sequential enc0_{nullptr}, enc1_{nullptr}, enc2_{nullptr}, enc3_{nullptr};
  torch::nn::Sequential dec2_{nullptr}, dec1_{nullptr}, dec0_{nullptr};
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(KeypointDetector);

}  // namespace mvpt
