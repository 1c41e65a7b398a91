#include "mvpt/image_tensor.h"

#include <opencv2/imgproc.hpp>
#include <torch/torch.h>

#include "mvpt/error.h"

namespace mvpt {

torch::Tensor ImageToTensor(const cv::Mat& bgr) {
  if (bgr.empty() || bgr.type() != CV_8UC3) {
    Throw(ErrorKind::kInvalidArgument, "expected a non-empty 8-bit 3-channel image");
  }
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  const torch::Tensor hwc =
      torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return hwc.permute({2, 0, 1}).to(torch::kFloat32).div(127.5).sub(1.0).contiguous();
}

cv::Mat TensorToImage(const torch::Tensor& chw) {
  if (chw.dim() != 3 || chw.size(0) != 3) {
    Throw(ErrorKind::kShapeMismatch, "expected a [3, H, W] image tensor");
  }
  const torch::Tensor hwc = chw.detach()
                                .to(torch::kCPU, torch::kFloat32)
                                .clamp(-1.0, 1.0)
                                .add(1.0)
                                .mul(127.5)
                                .round()
                                .to(torch::kUInt8)
                                .permute({1, 2, 0})
                                .contiguous();
  cv::Mat rgb(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3,
              hwc.data_ptr<uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

torch::Tensor StackImages(const std::vector<cv::Mat>& images) {
  std::vector<torch::Tensor> tensors;
  tensors.reserve(images.size());
  for (const cv::Mat& image : images) tensors.push_back(ImageToTensor(image));
  return torch::stack(tensors);
}

void CheckImageBatch(const torch::Tensor& images, int resolution) {
  if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != images.size(3)) {
    Throw(ErrorKind::kShapeMismatch, "expected images shaped [N, 3, R, R], got " +
                                         std::to_string(images.dim()) + "-d tensor");
  }
  if (images.size(2) != resolution) {
    Throw(ErrorKind::kResolutionMismatch,
          "expected " + std::to_string(resolution) + "x" + std::to_string(resolution) +
              " images, got " + std::to_string(images.size(2)) + "x" +
              std::to_string(images.size(3)));
  }
}

}  // namespace mvpt
