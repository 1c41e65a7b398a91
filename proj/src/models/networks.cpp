#include "mvpt/networks.h"

#include <torch/torch.h>

#include "mvpt/error.h"
#include "mvpt/geometry.h"
#include "mvpt/image_tensor.h"
#include "mvpt/json_fields.h"

namespace mvpt {

namespace nn = torch::nn;
namespace F = torch::nn::functional;
using nlohmann::json;

void to_json(json& j, const GeneratorOptions& o) {
  j = {{"resolution", o.resolution},
       {"base_channels", o.base_channels},
       {"downsamplings", o.downsamplings},
       {"residual_blocks", o.residual_blocks}};
}

void from_json(const json& j, GeneratorOptions& o) {
  JsonFields(j, "generator")
      .Read("resolution", o.resolution)
      .Read("base_channels", o.base_channels)
      .Read("downsamplings", o.downsamplings)
      .Read("residual_blocks", o.residual_blocks)
      .Finish();
}

void to_json(json& j, const DiscriminatorOptions& o) {
  j = {{"resolution", o.resolution}, {"base_channels", o.base_channels}, {"layers", o.layers}};
}

void from_json(const json& j, DiscriminatorOptions& o) {
  JsonFields(j, "discriminator")
      .Read("resolution", o.resolution)
      .Read("base_channels", o.base_channels)
      .Read("layers", o.layers)
      .Finish();
}

void to_json(json& j, const DetectorOptions& o) {
  j = {{"resolution", o.resolution},
       {"base_channels", o.base_channels},
       {"heatmap_stride", o.heatmap_stride},
       {"temperature", o.temperature}};
}

void from_json(const json& j, DetectorOptions& o) {
  JsonFields(j, "detector")
      .Read("resolution", o.resolution)
      .Read("base_channels", o.base_channels)
      .Read("heatmap_stride", o.heatmap_stride)
      .Read("temperature", o.temperature)
      .Finish();
}

namespace {

void Require(bool ok, const std::string& what) {
  if (!ok) Throw(ErrorKind::kInvalidConfig, what);
}

}  // namespace

void Validate(const GeneratorOptions& o) {
  Require(o.base_channels >= 1 && o.downsamplings >= 0 && o.residual_blocks >= 0,
          "generator widths and depths must be positive");
  Require(o.resolution >= 8 && o.resolution % (1 << o.downsamplings) == 0,
          "generator resolution must be divisible by 2^downsamplings");
}

void Validate(const DiscriminatorOptions& o) {
  Require(o.base_channels >= 1 && o.layers >= 1, "discriminator needs >= 1 layer");
  // Each strided layer halves the map; two 4x4 stride-1 convs remove 2 px each.
  Require((o.resolution >> o.layers) >= 4, "discriminator has too many layers for its input");
}

void Validate(const DetectorOptions& o) {
  Require(o.heatmap_stride == 1 || o.heatmap_stride == 2 || o.heatmap_stride == 4,
          "detector heatmap_stride must be 1, 2 or 4");
  Require(o.base_channels >= 1, "detector base_channels must be positive");
  Require(o.resolution >= 8 && o.resolution % 8 == 0, "detector resolution must be a multiple of 8");
  Require(o.temperature > 0.0, "detector temperature must be positive");
}

ResidualBlockImpl::ResidualBlockImpl(int channels) {
  body_ = register_module(
      "body", nn::Sequential(nn::ReflectionPad2d(1),
                             nn::Conv2d(nn::Conv2dOptions(channels, channels, 3)),
                             nn::InstanceNorm2d(channels), nn::ReLU(true),
                             nn::ReflectionPad2d(1),
                             nn::Conv2d(nn::Conv2dOptions(channels, channels, 3)),
                             nn::InstanceNorm2d(channels)));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) { return x + body_->forward(x); }

GeneratorImpl::GeneratorImpl(const GeneratorOptions& options) : options_(options) {
  Validate(options_);
  const int c = options_.base_channels;
  nn::Sequential body(nn::ReflectionPad2d(3), nn::Conv2d(nn::Conv2dOptions(3, c, 7)),
                      nn::InstanceNorm2d(c), nn::ReLU(true));
  int channels = c;
  for (int i = 0; i < options_.downsamplings; ++i) {
    body->push_back(
        nn::Conv2d(nn::Conv2dOptions(channels, 2 * channels, 3).stride(2).padding(1)));
    body->push_back(nn::InstanceNorm2d(2 * channels));
    body->push_back(nn::ReLU(true));
    channels *= 2;
  }
  for (int i = 0; i < options_.residual_blocks; ++i) body->push_back(ResidualBlock(channels));
  for (int i = 0; i < options_.downsamplings; ++i) {
    body->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(channels, channels / 2, 3)
                                            .stride(2)
                                            .padding(1)
                                            .output_padding(1)));
    body->push_back(nn::InstanceNorm2d(channels / 2));
    body->push_back(nn::ReLU(true));
    channels /= 2;
  }
  body->push_back(nn::ReflectionPad2d(3));
  body->push_back(nn::Conv2d(nn::Conv2dOptions(channels, 3, 7)));
  body->push_back(nn::Tanh());
  body_ = register_module("body", body);
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& images) {
  CheckImageBatch(images, options_.resolution);
  return body_->forward(images);
}

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorOptions& options) : options_(options) {
  Validate(options_);
  const int c = options_.base_channels;
  nn::Sequential body(nn::Conv2d(nn::Conv2dOptions(3, c, 4).stride(2).padding(1)),
                      nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2).inplace(true)));
  int channels = c;
  for (int i = 1; i < options_.layers; ++i) {
    const int next = c * std::min(1 << i, 8);
    body->push_back(nn::Conv2d(nn::Conv2dOptions(channels, next, 4).stride(2).padding(1)));
    body->push_back(nn::InstanceNorm2d(next));
    body->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2).inplace(true)));
    channels = next;
  }
  const int next = c * std::min(1 << options_.layers, 8);
  body->push_back(nn::Conv2d(nn::Conv2dOptions(channels, next, 4).stride(1).padding(1)));
  body->push_back(nn::InstanceNorm2d(next));
  body->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2).inplace(true)));
  body->push_back(nn::Conv2d(nn::Conv2dOptions(next, 1, 4).stride(1).padding(1)));
  body_ = register_module("body", body);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& images) {
  CheckImageBatch(images, options_.resolution);
  return body_->forward(images);
}

torch::Tensor NormalizeHeatmaps(const torch::Tensor& logits, double temperature) {
  const auto sizes = logits.sizes().vec();
  const torch::Tensor flat = logits.flatten(-2).mul(temperature);
  return torch::softmax(flat, -1).view(sizes);
}

torch::Tensor SoftArgmax(const torch::Tensor& heatmaps) {
  const int64_t h = heatmaps.size(-2), w = heatmaps.size(-1);
  const auto options = heatmaps.options();
  const torch::Tensor xs = torch::arange(w, options);
  const torch::Tensor ys = torch::arange(h, options);
  const torch::Tensor x = (heatmaps.sum(-2) * xs).sum(-1);
  const torch::Tensor y = (heatmaps.sum(-1) * ys).sum(-1);
  return torch::stack({x, y}, -1);
}

torch::Tensor PeakMass(const torch::Tensor& heatmaps) {
  const auto sizes = heatmaps.sizes().vec();
  const torch::Tensor maps = heatmaps.reshape({-1, 1, sizes[sizes.size() - 2], sizes.back()});
  const torch::Tensor window =
      F::avg_pool2d(maps, F::AvgPool2dFuncOptions(3).stride(1).padding(1)
                              .count_include_pad(true)) * 9.0;
  std::vector<int64_t> out(sizes.begin(), sizes.end() - 2);
  return window.flatten(1).amax(1).view(out);
}

torch::Tensor GridToCrop(const torch::Tensor& grid, int stride) {
  return (grid + 0.5) * stride - 0.5;
}

namespace {

nn::Sequential ConvBlock(int in, int out, int stride) {
  return nn::Sequential(
      nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false)),
      nn::BatchNorm2d(out), nn::ReLU(true),
      nn::Conv2d(nn::Conv2dOptions(out, out, 3).padding(1).bias(false)), nn::BatchNorm2d(out),
      nn::ReLU(true));
}

torch::Tensor UpsampleTo(const torch::Tensor& x, const torch::Tensor& like) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{like.size(2), like.size(3)})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

}  // namespace

KeypointDetectorImpl::KeypointDetectorImpl(const DetectorOptions& options) : options_(options) {
  Validate(options_);
  const int c = options_.base_channels;
  enc0_ = register_module("enc0", ConvBlock(3, c, 1));
  enc1_ = register_module("enc1", ConvBlock(c, 2 * c, 2));
  enc2_ = register_module("enc2", ConvBlock(2 * c, 4 * c, 2));
  enc3_ = register_module("enc3", ConvBlock(4 * c, 4 * c, 2));
  dec2_ = register_module("dec2", ConvBlock(8 * c, 4 * c, 1));
  int out = 4 * c;
  if (options_.heatmap_stride <= 2) {
    dec1_ = register_module("dec1", ConvBlock(6 * c, 2 * c, 1));
    out = 2 * c;
  }
  if (options_.heatmap_stride == 1) {
    dec0_ = register_module("dec0", ConvBlock(3 * c, c, 1));
    out = c;
  }
  head_ = register_module("head", nn::Conv2d(nn::Conv2dOptions(out, kNumJoints, 1)));
}

torch::Tensor KeypointDetectorImpl::forward(const torch::Tensor& images) {
  CheckImageBatch(images, options_.resolution);
  const torch::Tensor e0 = enc0_->forward(images);
  const torch::Tensor e1 = enc1_->forward(e0);
  const torch::Tensor e2 = enc2_->forward(e1);
  const torch::Tensor e3 = enc3_->forward(e2);
  torch::Tensor d = dec2_->forward(torch::cat({UpsampleTo(e3, e2), e2}, 1));
  if (dec1_) d = dec1_->forward(torch::cat({UpsampleTo(d, e1), e1}, 1));
  if (dec0_) d = dec0_->forward(torch::cat({UpsampleTo(d, e0), e0}, 1));
  return head_->forward(d);
}

KeypointDetection KeypointDetectorImpl::Detect(const torch::Tensor& images) {
  KeypointDetection out;
  out.heatmaps = NormalizeHeatmaps(forward(images), options_.temperature);
  out.points = GridToCrop(SoftArgmax(out.heatmaps), options_.heatmap_stride);
  out.confidence = PeakMass(out.heatmaps);
  return out;
}

}  // namespace mvpt
