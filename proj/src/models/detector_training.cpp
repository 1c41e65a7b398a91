#include "mvpt/detector_training.h"

#include <cmath>
#include <numbers>
#include <random>

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include "mvpt/error.h"
#include "mvpt/estimator.h"
#include "mvpt/image_tensor.h"
#include "mvpt/json_fields.h"
#include "mvpt/metrics.h"

namespace mvpt {

using nlohmann::json;

void to_json(json& j, const DetectorTrainOptions& o) {
  j = {{"iterations", o.iterations},         {"batch_size", o.batch_size},
       {"learning_rate", o.learning_rate},   {"heatmap_weight", o.heatmap_weight},
       {"heatmap_sigma", o.heatmap_sigma},   {"color_jitter", o.color_jitter},
       {"seed", o.seed}};
}

void from_json(const json& j, DetectorTrainOptions& o) {
  JsonFields(j, "detector_training")
      .Read("iterations", o.iterations)
      .Read("batch_size", o.batch_size)
      .Read("learning_rate", o.learning_rate)
      .Read("heatmap_weight", o.heatmap_weight)
      .Read("heatmap_sigma", o.heatmap_sigma)
      .Read("color_jitter", o.color_jitter)
      .Read("seed", o.seed)
      .Finish();
}

void to_json(json& j, const DetectorAccuracy& a) {
  j = {{"mean_crop_px", a.mean_crop_px},
       {"mean_frame_px", a.mean_frame_px},
       {"mpjpe_cm", a.mpjpe_cm},
       {"samples", a.samples}};
}

namespace {

struct Example {
  torch::Tensor image;   // [3, R, R]
  torch::Tensor target;  // [J, 2] crop px
};

Example MakeExample(const Dataset& dataset, Person person, int index, int view, double shift,
                    const CropOptions& crop_options) {
  const SampleRecord& record = dataset.Record(person, index);
  const CameraView& camera = dataset.cameras()[view];
  const CropTransform crop = PersonCrop(record.gt_pose, camera, crop_options, shift);
  const cv::Mat image =
      ExtractCrop(dataset.FrameImage(person, index, view), crop, crop_options.resolution);
  const Pose2D gt = Project(record.gt_pose, camera);
  torch::Tensor target = torch::empty({kNumJoints, 2});
  for (int j = 0; j < kNumJoints; ++j) {
    const Eigen::Vector2d u = crop.ToCrop(gt.points.row(j).transpose());
    target[j][0] = u.x();
    target[j][1] = u.y();
  }
  return {ImageToTensor(image), target};
}

// Normalized Gaussian bumps at the target positions, [N, J, h, w].
torch::Tensor GaussianTargets(const torch::Tensor& targets, int size, int stride, double sigma) {
  const torch::Tensor grid = (targets + 0.5) / stride - 0.5;  // [N, J, 2]
  const torch::Tensor coords = torch::arange(size, torch::kFloat32);
  const torch::Tensor dx = coords.view({1, 1, 1, size}) - grid.select(2, 0).unsqueeze(-1).unsqueeze(-1);
  const torch::Tensor dy = coords.view({1, 1, size, 1}) - grid.select(2, 1).unsqueeze(-1).unsqueeze(-1);
  torch::Tensor g = torch::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
  return g / g.sum({-2, -1}, true).clamp_min(1e-12);
}

torch::Tensor Jitter(torch::Tensor images, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> gain(0.75, 1.25), offset(-0.15, 0.15), noise(0.0, 0.05);
  const int64_t n = images.size(0);
  torch::Tensor g = torch::empty({n, 3, 1, 1}), o = torch::empty({n, 3, 1, 1}),
                s = torch::empty({n, 1, 1, 1});
  for (int64_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      g[i][c][0][0] = gain(rng);
      o[i][c][0][0] = offset(rng);
    }
    s[i][0][0][0] = noise(rng);
  }
  torch::Generator gen = at::detail::createCPUGenerator(rng());
  const torch::Tensor eps = at::normal(0.0, 1.0, images.sizes(), gen);
  return (images * g + o + eps * s).clamp(-1.0, 1.0);
}

}  // namespace

KeypointDetector TrainDetector(const Dataset& dataset, const PersonIndices& train,
                               const DetectorOptions& options,
                               const DetectorTrainOptions& train_options,
                               const CropOptions& crop_options,
                               const std::function<void(int, double)>& progress) {
  if (train.a.empty() || train.b.empty()) {
    Throw(ErrorKind::kInvalidConfig, "detector training needs samples of both persons");
  }
  if (train_options.iterations < 1 || train_options.batch_size < 1 ||
      !(train_options.learning_rate > 0.0)) {
    Throw(ErrorKind::kInvalidConfig, "detector training needs iterations, batch and lr > 0");
  }
  if (options.resolution != crop_options.resolution) {
    Throw(ErrorKind::kResolutionMismatch, "detector and crop resolutions differ");
  }
  torch::manual_seed(train_options.seed);
  KeypointDetector detector(options);
  detector->train();
  torch::optim::Adam optimizer(detector->parameters(),
                               torch::optim::AdamOptions(train_options.learning_rate));
  std::mt19937_64 rng(train_options.seed ^ 0xde7ec7ULL);
  const int num_views = static_cast<int>(dataset.cameras().size());
  const int heat = options.resolution / options.heatmap_stride;

  double running = 0.0;
  for (int it = 0; it < train_options.iterations; ++it) {
    const double progress01 = static_cast<double>(it) / train_options.iterations;
    const double lr = train_options.learning_rate *
                      (0.05 + 0.95 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress01)));
    for (auto& group : optimizer.param_groups()) {
      static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
    }

    std::vector<torch::Tensor> images, targets;
    for (int b = 0; b < train_options.batch_size; ++b) {
      const Person person = (rng() & 1) ? Person::kB : Person::kA;
      const std::vector<int>& pool = person == Person::kA ? train.a : train.b;
      const int index = pool[std::uniform_int_distribution<size_t>(0, pool.size() - 1)(rng)];
      const int view = std::uniform_int_distribution<int>(0, num_views - 1)(rng);
      const double limit =
          MaxHorizontalShift(dataset.Record(person, index).gt_pose, dataset.cameras()[view],
                             crop_options);
      const double shift = std::uniform_real_distribution<double>(-limit, limit)(rng);
      Example e = MakeExample(dataset, person, index, view, shift, crop_options);
      images.push_back(e.image);
      targets.push_back(e.target);
    }
    torch::Tensor batch = torch::stack(images);
    if (train_options.color_jitter) batch = Jitter(batch, rng);
    const torch::Tensor target = torch::stack(targets);

    const torch::Tensor logits = detector->forward(batch);
    const torch::Tensor log_maps =
        torch::log_softmax(logits.flatten(-2) * options.temperature, -1).view(logits.sizes());
    const torch::Tensor maps = log_maps.exp();
    const torch::Tensor points = GridToCrop(SoftArgmax(maps), options.heatmap_stride);
    torch::Tensor loss = (points - target).abs().mean();
    if (train_options.heatmap_weight > 0.0) {
      const torch::Tensor gauss =
          GaussianTargets(target, heat, options.heatmap_stride, train_options.heatmap_sigma);
      loss = loss - train_options.heatmap_weight * (gauss * log_maps).sum({-2, -1}).mean();
    }
    optimizer.zero_grad();
    loss.backward();
    optimizer.step();

    running = it == 0 ? loss.item<double>() : 0.98 * running + 0.02 * loss.item<double>();
    if (progress && (it + 1) % 100 == 0) progress(it + 1, running);
  }
  detector->eval();
  return detector;
}

DetectorAccuracy EvaluateDetector(KeypointDetector& detector, const Dataset& dataset,
                                  const PersonIndices& samples, const CropOptions& crop_options) {
  torch::NoGradGuard no_grad;
  detector->eval();
  const auto& cameras = dataset.cameras();
  const torch::Tensor projections = ProjectionTensor(cameras);
  DetectorAccuracy acc;
  double crop_sum = 0.0, frame_sum = 0.0, mpjpe_sum = 0.0;
  int64_t points = 0;
  for (const Person person : {Person::kA, Person::kB}) {
    for (const int index : person == Person::kA ? samples.a : samples.b) {
      std::mt19937_64 unused(0);
      const MultiViewSample s = SampleBatch(dataset, person, index, false, unused, crop_options);
      const KeypointDetection d = detector->Detect(StackImages(s.images));
      const torch::Tensor frame = CropToFrame(d.points, s.crops);
      for (size_t v = 0; v < cameras.size(); ++v) {
        const Pose2D gt = Project(s.gt_pose, cameras[v]);
        for (int j = 0; j < kNumJoints; ++j) {
          const Eigen::Vector2d g = gt.points.row(j).transpose();
          const Eigen::Vector2d u = s.crops[v].ToCrop(g);
          const double cx = d.points[v][j][0].item<double>(), cy = d.points[v][j][1].item<double>();
          const double fx = frame[v][j][0].item<double>(), fy = frame[v][j][1].item<double>();
          crop_sum += std::hypot(cx - u.x(), cy - u.y());
          frame_sum += std::hypot(fx - g.x(), fy - g.y());
          ++points;
        }
      }
      const TriangulatedJoints t =
          TriangulateJoints(projections, frame, d.confidence.to(torch::kFloat64));
      PoseEstimate estimate;
      estimate.joints = t.joints;
      estimate.valid = t.valid;
      mpjpe_sum += Mpjpe(ToPose3D(estimate), s.gt_pose);
      ++acc.samples;
    }
  }
  if (acc.samples == 0) Throw(ErrorKind::kInvalidArgument, "no samples to evaluate");
  acc.mean_crop_px = crop_sum / points;
  acc.mean_frame_px = frame_sum / points;
  acc.mpjpe_cm = mpjpe_sum / acc.samples;
  return acc;
}

}  // namespace mvpt
