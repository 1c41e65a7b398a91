#include "mvpt/losses.h"

#include <cmath>

#include <torch/torch.h>

#include "mvpt/error.h"
#include "mvpt/json_fields.h"

namespace mvpt {

using nlohmann::json;

void LossWeights::Validate() const {
  for (const double w : {cycle, adversarial, identity, pose}) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      Throw(ErrorKind::kInvalidConfig, "loss weights must be finite and >= 0");
    }
  }
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    Throw(ErrorKind::kInvalidConfig, "loss epsilon must be positive");
  }
}

void to_json(json& j, const LossWeights& w) {
  j = {{"cycle", w.cycle},
       {"adversarial", w.adversarial},
       {"identity", w.identity},
       {"pose", w.pose},
       {"epsilon", w.epsilon},
       {"gan_mode", w.gan_mode == GanMode::kLog ? "log" : "least_squares"},
       {"generator_form",
        w.generator_form == GeneratorGanForm::kSaturating ? "saturating" : "non_saturating"}};
}

void from_json(const json& j, LossWeights& w) {
  std::string mode = w.gan_mode == GanMode::kLog ? "log" : "least_squares";
  std::string form =
      w.generator_form == GeneratorGanForm::kSaturating ? "saturating" : "non_saturating";
  JsonFields(j, "loss")
      .Read("cycle", w.cycle)
      .Read("adversarial", w.adversarial)
      .Read("identity", w.identity)
      .Read("pose", w.pose)
      .Read("epsilon", w.epsilon)
      .Read("gan_mode", mode)
      .Read("generator_form", form)
      .Finish();
  if (mode == "log") {
    w.gan_mode = GanMode::kLog;
  } else if (mode == "least_squares") {
    w.gan_mode = GanMode::kLeastSquares;
  } else {
    Throw(ErrorKind::kInvalidConfig, "loss.gan_mode must be log or least_squares");
  }
  if (form == "saturating") {
    w.generator_form = GeneratorGanForm::kSaturating;
  } else if (form == "non_saturating") {
    w.generator_form = GeneratorGanForm::kNonSaturating;
  } else {
    Throw(ErrorKind::kInvalidConfig, "loss.generator_form must be saturating or non_saturating");
  }
}

void to_json(json& j, const ViewLossReport& r) {
  j = {{"view_id", r.view_id},       {"gan_g", r.gan_g},
       {"gan_d", r.gan_d},           {"cycle", r.cycle},
       {"identity", r.identity},     {"per_view_total", r.per_view_total}};
}

void from_json(const json& j, ViewLossReport& r) {
  r.view_id = j.at("view_id").get<std::string>();
  r.gan_g = j.at("gan_g").get<double>();
  r.gan_d = j.at("gan_d").get<double>();
  r.cycle = j.at("cycle").get<double>();
  r.identity = j.at("identity").get<double>();
  r.per_view_total = j.at("per_view_total").get<double>();
}

namespace {

void RequireFinite(const torch::Tensor& scores, const char* what) {
  if (!torch::isfinite(scores.detach()).all().item<bool>()) {
    Throw(ErrorKind::kNumeric, std::string("non-finite discriminator scores on ") + what);
  }
}

}  // namespace

torch::Tensor GeneratorGanLoss(const torch::Tensor& d_on_fake, GanMode mode,
                               GeneratorGanForm form) {
  RequireFinite(d_on_fake, "fake images");
  if (mode == GanMode::kLeastSquares) return (d_on_fake - 1.0).pow(2).mean();
  // -log sigmoid(s) = softplus(-s); log(1 - sigmoid(s)) = -softplus(s).
  if (form == GeneratorGanForm::kNonSaturating) {
    return torch::nn::functional::softplus(-d_on_fake).mean();
  }
  return -torch::nn::functional::softplus(d_on_fake).mean();
}

torch::Tensor DiscriminatorGanLoss(const torch::Tensor& d_on_real, const torch::Tensor& d_on_fake,
                                   GanMode mode) {
  RequireFinite(d_on_real, "real images");
  RequireFinite(d_on_fake, "fake images");
  if (mode == GanMode::kLeastSquares) {
    return 0.5 * ((d_on_real - 1.0).pow(2).mean() + d_on_fake.pow(2).mean());
  }
  // -(log D(real) + log(1 - D(fake))), each averaged over its map.
  return torch::nn::functional::softplus(-d_on_real).mean() +
         torch::nn::functional::softplus(d_on_fake).mean();
}

GanTerms GanLoss(const torch::Tensor& d_on_real, const torch::Tensor& d_on_fake, GanMode mode,
                 GeneratorGanForm form) {
  return {GeneratorGanLoss(d_on_fake, mode, form),
          DiscriminatorGanLoss(d_on_real, d_on_fake, mode)};
}

torch::Tensor CycleLoss(const torch::Tensor& real, const torch::Tensor& reconstructed) {
  if (real.sizes() != reconstructed.sizes()) {
    Throw(ErrorKind::kShapeMismatch, "image loss needs equal shapes");
  }
  return (real - reconstructed).abs().mean();
}

torch::Tensor IdentityLoss(const torch::Tensor& real, const torch::Tensor& same_domain_mapped) {
  return CycleLoss(real, same_domain_mapped);
}

torch::Tensor SmoothMseTensor(const torch::Tensor& pred, const JointMask& pred_valid,
                              const torch::Tensor& target, const JointMask& target_valid,
                              double epsilon) {
  if (!(epsilon > 0.0)) Throw(ErrorKind::kInvalidArgument, "smooth-MSE epsilon must be positive");
  std::vector<int64_t> shared;
  for (int j = 0; j < kNumJoints; ++j) {
    if (pred_valid[j] && target_valid[j]) shared.push_back(j);
  }
  if (shared.empty()) Throw(ErrorKind::kUndefinedDistance, "poses share no valid joint");
  const torch::Tensor index = torch::tensor(shared, torch::kInt64);
  const torch::Tensor diff =
      pred.index_select(0, index) - target.to(pred.dtype()).index_select(0, index);
  const torch::Tensor mse = diff.pow(2).mean();
  if (mse.item<double>() < epsilon) return mse;
  return mse.pow(0.1) * std::pow(epsilon, 0.9);
}

torch::Tensor PoseLoss(const torch::Tensor& fake_views, std::span<const CropTransform> crops,
                       const Pose3D& source_gt, const LimbProfile& target_profile,
                       const Skeleton& skeleton, const PoseEstimator& estimator, double epsilon) {
  const Pose3D target = ScalePose(source_gt, skeleton, target_profile);
  const PoseEstimate estimate = estimator.Estimate(fake_views, crops);
  return SmoothMseTensor(estimate.joints, estimate.valid, PoseTensor(target), target.valid,
                         epsilon);
}

}  // namespace mvpt
