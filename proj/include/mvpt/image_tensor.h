#pragma once

#include <vector>

#include <opencv2/core.hpp>
#include <torch/types.h>

namespace mvpt {

// 8-bit BGR image -> float [3, H, W] RGB tensor in [-1, 1].
torch::Tensor ImageToTensor(const cv::Mat& bgr);

// Inverse of ImageToTensor; values are clamped to [-1, 1] first.
cv::Mat TensorToImage(const torch::Tensor& chw);

// [N, 3, H, W] from N images of equal size.
torch::Tensor StackImages(const std::vector<cv::Mat>& images);

// Throws kShapeMismatch unless `images` is [N, 3, R, R], and
// kResolutionMismatch if R differs from `resolution`.
void CheckImageBatch(const torch::Tensor& images, int resolution);

}  // namespace mvpt
