#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/nn/module.h>
#include <torch/optim/adam.h>

#include "mvpt/dataset.h"
#include "mvpt/detector_training.h"
#include "mvpt/estimator.h"
#include "mvpt/losses.h"
#include "mvpt/networks.h"
#include "mvpt/skeleton.h"

namespace mvpt {

struct TrainConfig {
  int epochs_constant = 100;
  int epochs_decay = 200;
  int epochs = 0;  // epochs actually run; 0 runs the whole schedule
  double base_lr = 2e-4;
  int batch_size = 1;
  double beta1 = 0.5;
  double beta2 = 0.999;
  LossWeights weights;
  uint64_t seed = 0;
  std::vector<std::string> views;  // camera ids; empty = every camera
  int resolution = 64;
  double crop_margin = 1.2;
  double heldout_fraction = 0.1;  // last part of each person's frames
  int pool_size = 50;
  int steps_per_epoch = 0;  // 0 = max(#train A, #train B) / batch_size
  int checkpoint_every = 1;  // epochs
  bool augment = true;
  bool train_discriminators = true;

  int TotalEpochs() const { return epochs > 0 ? epochs : epochs_constant + epochs_decay; }
  void Validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
// The "train" section; loss weights live in their own section.
void from_json(const nlohmann::json& j, TrainConfig& c);

struct ModelConfig {
  GeneratorOptions generator;
  DiscriminatorOptions discriminator;
  DetectorOptions detector;
  DetectorTrainOptions detector_training;
  std::string estimator_path;  // directory holding detector.pt / detector.json
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// base_lr for epoch < epochs_constant, then linear to 0 at
// epochs_constant + epochs_decay. Throws kOutOfRange outside that interval.
double LearningRate(const TrainConfig& config, double epoch);

// Replay buffer of generated images for discriminator updates.
class ImagePool {
 public:
  ImagePool(int capacity, uint64_t seed);

  // Per image in the batch: while filling, stores and returns it; once full,
  // returns either the new image or a stored one (which it then replaces),
  // each with probability 1/2.
  torch::Tensor Query(const torch::Tensor& images);

  int size() const { return static_cast<int>(images_.size()); }
  int capacity() const { return capacity_; }

  void Save(const std::filesystem::path& tensors_file, nlohmann::json* state) const;
  void Load(const std::filesystem::path& tensors_file, const nlohmann::json& state);

 private:
  int capacity_;
  std::vector<torch::Tensor> images_;
  std::mt19937_64 rng_;
};

// G_A: B -> A and G_B: A -> B for one camera, their discriminators, pools
// and optimizers.
class ViewTranslator {
 public:
  ViewTranslator(std::string view_id, const ModelConfig& model, const TrainConfig& train);

  const std::string& view_id() const { return view_id_; }
  Generator& to_a() { return to_a_; }
  Generator& to_b() { return to_b_; }
  Discriminator& disc_a() { return disc_a_; }
  Discriminator& disc_b() { return disc_b_; }
  ImagePool& pool_a() { return pool_a_; }
  ImagePool& pool_b() { return pool_b_; }
  torch::optim::Adam& gen_optimizer() { return *gen_opt_; }
  torch::optim::Adam& disc_optimizer() { return *disc_opt_; }

  std::vector<torch::Tensor> GeneratorParameters() const;
  std::vector<torch::Tensor> DiscriminatorParameters() const;

  void Save(const std::filesystem::path& dir, nlohmann::json* state) const;
  void Load(const std::filesystem::path& dir, const nlohmann::json& state);

 private:
  std::string view_id_;
  Generator to_a_{nullptr}, to_b_{nullptr};
  Discriminator disc_a_{nullptr}, disc_b_{nullptr};
  ImagePool pool_a_, pool_b_;
  std::unique_ptr<torch::optim::Adam> gen_opt_, disc_opt_;
};

struct StepReport {
  std::vector<ViewLossReport> views;
  double pose_loss_a = 0.0;  // 3D term on G_A outputs (B samples translated to A)
  double pose_loss_b = 0.0;  // 3D term on G_B outputs (A samples translated to B)
  bool pose_loss_computed = false;
  double total = 0.0;
};

void to_json(nlohmann::json& j, const StepReport& r);

// Target limb profiles and the frozen estimator used by the 3D term.
struct PoseSupervision {
  std::shared_ptr<const PoseEstimator> estimator;
  LimbProfile profile_a;
  LimbProfile profile_b;
  Skeleton skeleton = Skeleton::Coco17();
};

// One set of per-view translators optimized under the total objective.
// With weights.pose == 0 the views are independent and the trainer is the
// separately trained baseline.
class JointTrainer {
 public:
  // `cameras` are the dataset cameras; config.views selects among them.
  JointTrainer(const TrainConfig& config, const ModelConfig& model,
               const std::vector<CameraView>& cameras,
               std::optional<PoseSupervision> supervision);

  // Generator update for one unpaired pair of batches; keeps the fakes for
  // the following DiscriminatorPhase.
  StepReport GeneratorPhase(std::span<const MultiViewSample> batch_a,
                            std::span<const MultiViewSample> batch_b);
  // Updates every discriminator on real vs. pooled fakes; fills gan_d.
  void DiscriminatorPhase(StepReport* report);
  StepReport TrainStep(std::span<const MultiViewSample> batch_a,
                       std::span<const MultiViewSample> batch_b);

  void SetLearningRate(double lr);
  int num_views() const { return static_cast<int>(views_.size()); }
  ViewTranslator& view(int i) { return *views_[i]; }
  const std::vector<int>& view_indices() const { return view_indices_; }
  const TrainConfig& config() const { return config_; }

  // Directory for forensics when a loss goes non-finite.
  void set_failure_dir(std::filesystem::path dir) { failure_dir_ = std::move(dir); }

  void Save(const std::filesystem::path& dir, nlohmann::json* state) const;
  void Load(const std::filesystem::path& dir, const nlohmann::json& state);

 private:
  void FailNumeric(const StepReport& report, std::span<const MultiViewSample> batch_a,
                   std::span<const MultiViewSample> batch_b, const std::string& term);

  TrainConfig config_;
  std::vector<int> view_indices_;  // into the dataset cameras
  std::vector<std::unique_ptr<ViewTranslator>> views_;
  std::optional<PoseSupervision> supervision_;
  std::filesystem::path failure_dir_;
  // Per view, kept between the two phases.
  std::vector<torch::Tensor> real_a_, real_b_, fake_a_, fake_b_;
};

// Sample indices visited in one epoch: a fresh permutation of `pool`
// (repeated as needed) drawn from (seed, epoch, stream).
std::vector<int> EpochOrder(std::span<const int> pool, int count, uint64_t seed, int epoch,
                            int stream);

struct TrainPaths {
  std::filesystem::path run_dir;
  std::optional<std::filesystem::path> resume;  // checkpoint directory
};

struct TrainSummary {
  int epochs_completed = 0;
  int64_t steps = 0;
  StepReport last;
  std::filesystem::path last_checkpoint;
};

// Full protocol: epoch loop over unpaired shuffled samples, per-epoch
// learning rate, metrics.jsonl with one record per step, and checkpoints in
// run_dir/checkpoints/epoch_NNNN (epoch_0000 is the untrained model).
// Stops early, after writing nothing partial, when `stop` becomes true.
TrainSummary Train(const TrainConfig& config, const ModelConfig& model, const Dataset& dataset,
                   std::optional<PoseSupervision> supervision, const TrainPaths& paths,
                   const std::string& config_hash, const nlohmann::json& run_config,
                   const std::function<void(int epoch, int64_t step, const StepReport&)>&
                       on_step = {},
                   const std::atomic<bool>* stop = nullptr);

// Limb profiles of both persons over their training split.
PoseSupervision MakeSupervision(const Dataset& dataset, double heldout_fraction,
                                std::shared_ptr<const PoseEstimator> estimator);

std::filesystem::path CheckpointDir(const std::filesystem::path& run_dir, int epoch);

// Reads checkpoint manifest.json.
nlohmann::json ReadCheckpointManifest(const std::filesystem::path& checkpoint);

// Rebuilds the trainer stored in a checkpoint (cameras from `dataset`).
// Throws kIncompatibleCheckpoint when views or resolution do not match.
std::unique_ptr<JointTrainer> LoadCheckpoint(const std::filesystem::path& checkpoint,
                                             const std::vector<CameraView>& cameras);

}  // namespace mvpt
