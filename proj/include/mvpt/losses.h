#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/types.h>

#include "mvpt/estimator.h"
#include "mvpt/geometry.h"
#include "mvpt/skeleton.h"

namespace mvpt {

enum class GanMode { kLog, kLeastSquares };
// Generator adversarial term in log mode: -log D(fake) (non-saturating) or
// log(1 - D(fake)) as written in the minimax game.
enum class GeneratorGanForm { kNonSaturating, kSaturating };

struct LossWeights {
  double cycle = 10.0;
  double adversarial = 1.0;
  double identity = 5.0;
  double pose = 1.0;  // 3D pose consistency; 0 gives the baseline
  double epsilon = 400.0;  // smooth-MSE threshold, cm^2
  GanMode gan_mode = GanMode::kLeastSquares;
  GeneratorGanForm generator_form = GeneratorGanForm::kNonSaturating;

  // Throws kInvalidConfig on negative weights or epsilon <= 0.
  void Validate() const;
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

struct GanTerms {
  torch::Tensor generator;      // minimized by the generator
  torch::Tensor discriminator;  // minimized by the discriminator
};

// Both terms averaged over the score maps; log mode reads scores as logits.
// Throws kNumeric on non-finite scores.
GanTerms GanLoss(const torch::Tensor& d_on_real, const torch::Tensor& d_on_fake, GanMode mode,
                 GeneratorGanForm form = GeneratorGanForm::kNonSaturating);
torch::Tensor GeneratorGanLoss(const torch::Tensor& d_on_fake, GanMode mode,
                               GeneratorGanForm form = GeneratorGanForm::kNonSaturating);
torch::Tensor DiscriminatorGanLoss(const torch::Tensor& d_on_real, const torch::Tensor& d_on_fake,
                                   GanMode mode);

// Mean absolute difference; throws kShapeMismatch.
torch::Tensor CycleLoss(const torch::Tensor& real, const torch::Tensor& reconstructed);
torch::Tensor IdentityLoss(const torch::Tensor& real, const torch::Tensor& same_domain_mapped);

template <typename T>
struct ViewComponents {
  T cycle;
  T gan_a;
  T gan_b;
  T identity_a;
  T identity_b;
};

template <typename T>
T PerViewObjective(const ViewComponents<T>& c, const LossWeights& w) {
  return c.cycle * w.cycle + (c.gan_a + c.gan_b) * w.adversarial +
         (c.identity_a + c.identity_b) * w.identity;
}

template <typename T>
T TotalObjective(const std::vector<T>& view_totals, const T& pose_loss_a, const T& pose_loss_b,
                 const LossWeights& w) {
  T total = view_totals.front();
  for (size_t v = 1; v < view_totals.size(); ++v) total = total + view_totals[v];
  return total + (pose_loss_a + pose_loss_b) * w.pose;
}

struct ViewLossReport {
  std::string view_id;
  double gan_g = 0.0;
  double gan_d = 0.0;
  double cycle = 0.0;
  double identity = 0.0;
  double per_view_total = 0.0;
};

void to_json(nlohmann::json& j, const ViewLossReport& r);
void from_json(const nlohmann::json& j, ViewLossReport& r);

// Smooth MSE between [J, 3] tensors over the jointly valid joints.
// Throws kUndefinedDistance when no joint is shared.
torch::Tensor SmoothMseTensor(const torch::Tensor& pred, const JointMask& pred_valid,
                              const torch::Tensor& target, const JointMask& target_valid,
                              double epsilon);

// The 3D pose term: smooth MSE between the source pose retargeted to the
// target profile and the estimate from the fake views. Gradients reach
// `fake_views` only.
torch::Tensor PoseLoss(const torch::Tensor& fake_views, std::span<const CropTransform> crops,
                       const Pose3D& source_gt, const LimbProfile& target_profile,
                       const Skeleton& skeleton, const PoseEstimator& estimator, double epsilon);

}  // namespace mvpt
