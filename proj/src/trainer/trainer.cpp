#include "mvpt/trainer.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <torch/torch.h>

#include "mvpt/error.h"
#include "mvpt/hash.h"
#include "mvpt/image_tensor.h"
#include "mvpt/json_fields.h"

namespace mvpt {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::Validate() const {
  if (epochs_constant < 0 || epochs_decay < 0 || epochs_constant + epochs_decay < 1) {
    Throw(ErrorKind::kInvalidConfig, "train: schedule needs at least one epoch");
  }
  if (epochs < 0 || epochs > epochs_constant + epochs_decay) {
    Throw(ErrorKind::kInvalidConfig, "train.epochs must lie in [0, epochs_constant + epochs_decay]");
  }
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) {
    Throw(ErrorKind::kInvalidConfig, "train.base_lr must be > 0");
  }
  if (batch_size < 1) Throw(ErrorKind::kInvalidConfig, "train.batch_size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    Throw(ErrorKind::kInvalidConfig, "train: Adam betas must lie in [0, 1)");
  }
  if (resolution < 8) Throw(ErrorKind::kInvalidConfig, "train.resolution must be >= 8");
  if (!(crop_margin >= 1.0)) Throw(ErrorKind::kInvalidConfig, "train.crop_margin must be >= 1");
  if (!(heldout_fraction >= 0.0 && heldout_fraction < 1.0)) {
    Throw(ErrorKind::kInvalidConfig, "train.heldout_fraction must lie in [0, 1)");
  }
  if (pool_size < 0) Throw(ErrorKind::kInvalidConfig, "train.pool_size must be >= 0");
  if (steps_per_epoch < 0) Throw(ErrorKind::kInvalidConfig, "train.steps_per_epoch must be >= 0");
  if (checkpoint_every < 1) Throw(ErrorKind::kInvalidConfig, "train.checkpoint_every must be >= 1");
  weights.Validate();
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"epochs_constant", c.epochs_constant},
       {"epochs_decay", c.epochs_decay},
       {"epochs", c.epochs},
       {"base_lr", c.base_lr},
       {"batch_size", c.batch_size},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"seed", c.seed},
       {"views", c.views},
       {"resolution", c.resolution},
       {"crop_margin", c.crop_margin},
       {"heldout_fraction", c.heldout_fraction},
       {"pool_size", c.pool_size},
       {"steps_per_epoch", c.steps_per_epoch},
       {"checkpoint_every", c.checkpoint_every},
       {"augment", c.augment},
       {"train_discriminators", c.train_discriminators}};
}

void from_json(const json& j, TrainConfig& c) {
  JsonFields(j, "train")
      .Read("epochs_constant", c.epochs_constant)
      .Read("epochs_decay", c.epochs_decay)
      .Read("epochs", c.epochs)
      .Read("base_lr", c.base_lr)
      .Read("batch_size", c.batch_size)
      .Read("beta1", c.beta1)
      .Read("beta2", c.beta2)
      .Read("seed", c.seed)
      .Read("views", c.views)
      .Read("resolution", c.resolution)
      .Read("crop_margin", c.crop_margin)
      .Read("heldout_fraction", c.heldout_fraction)
      .Read("pool_size", c.pool_size)
      .Read("steps_per_epoch", c.steps_per_epoch)
      .Read("checkpoint_every", c.checkpoint_every)
      .Read("augment", c.augment)
      .Read("train_discriminators", c.train_discriminators)
      .Finish();
}

void to_json(json& j, const ModelConfig& c) {
  j = {{"generator", c.generator},
       {"discriminator", c.discriminator},
       {"detector", c.detector},
       {"detector_training", c.detector_training},
       {"estimator_path", c.estimator_path}};
}

void from_json(const json& j, ModelConfig& c) {
  JsonFields fields(j, "model");
  fields.Read("generator", c.generator)
      .Read("discriminator", c.discriminator)
      .Read("detector", c.detector)
      .Read("detector_training", c.detector_training)
      .Read("estimator_path", c.estimator_path)
      .Finish();
}

double LearningRate(const TrainConfig& config, double epoch) {
  const double end = config.epochs_constant + config.epochs_decay;
  if (!(epoch >= 0.0 && epoch <= end)) {
    Throw(ErrorKind::kOutOfRange, "learning-rate epoch " + std::to_string(epoch) +
                                      " outside [0, " + std::to_string(end) + "]");
  }
  if (epoch < config.epochs_constant) return config.base_lr;
  return config.base_lr * (end - epoch) / config.epochs_decay;
}

// ---------------------------------------------------------------------------

ImagePool::ImagePool(int capacity, uint64_t seed) : capacity_(capacity), rng_(seed) {
  if (capacity < 0) Throw(ErrorKind::kInvalidArgument, "pool capacity must be >= 0");
}

torch::Tensor ImagePool::Query(const torch::Tensor& images) {
  if (capacity_ == 0) return images;
  std::vector<torch::Tensor> out;
  out.reserve(images.size(0));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (int64_t i = 0; i < images.size(0); ++i) {
    torch::Tensor image = images[i].detach().clone();
    if (size() < capacity_) {
      images_.push_back(image);
      out.push_back(image);
    } else if (coin(rng_) < 0.5) {
      const size_t k = std::uniform_int_distribution<size_t>(0, images_.size() - 1)(rng_);
      out.push_back(images_[k]);
      images_[k] = image;
    } else {
      out.push_back(image);
    }
  }
  return torch::stack(out);
}

void ImagePool::Save(const fs::path& tensors_file, json* state) const {
  torch::save(images_, tensors_file.string());
  std::ostringstream rng;
  rng << rng_;
  *state = {{"capacity", capacity_}, {"size", size()}, {"rng", rng.str()}};
}

void ImagePool::Load(const fs::path& tensors_file, const json& state) {
  if (state.at("capacity").get<int>() != capacity_) {
    Throw(ErrorKind::kIncompatibleCheckpoint, "image pool capacity differs from the config");
  }
  std::vector<torch::Tensor> images;
  if (state.at("size").get<int>() > 0) torch::load(images, tensors_file.string());
  if (static_cast<int>(images.size()) != state.at("size").get<int>()) {
    Throw(ErrorKind::kIncompatibleCheckpoint, "image pool file is inconsistent");
  }
  images_ = std::move(images);
  std::istringstream rng(state.at("rng").get<std::string>());
  rng >> rng_;
}

// ---------------------------------------------------------------------------

namespace {

uint64_t ViewSeed(uint64_t seed, const std::string& view_id) {
  Fnv1a h;
  h.Update(view_id);
  return MixSeed(seed, h.digest());
}

torch::optim::AdamOptions MakeAdam(const TrainConfig& c) {
  return torch::optim::AdamOptions(c.base_lr).betas({c.beta1, c.beta2});
}

void SetRequiresGrad(const std::vector<torch::Tensor>& params, bool on) {
  for (auto p : params) p.set_requires_grad(on);
}

std::vector<torch::Tensor> Concat(std::vector<torch::Tensor> a, const std::vector<torch::Tensor>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

ViewTranslator::ViewTranslator(std::string view_id, const ModelConfig& model,
                               const TrainConfig& train)
    : view_id_(std::move(view_id)),
      pool_a_(train.pool_size, MixSeed(ViewSeed(train.seed, view_id_), 1)),
      pool_b_(train.pool_size, MixSeed(ViewSeed(train.seed, view_id_), 2)) {
  if (model.generator.resolution != train.resolution ||
      model.discriminator.resolution != train.resolution) {
    Throw(ErrorKind::kResolutionMismatch, "model resolution differs from train.resolution");
  }
  // Each view's initialization depends only on (seed, view id), so a view
  // starts identically in a joint run and in a single-view run.
  torch::manual_seed(ViewSeed(train.seed, view_id_));
  to_a_ = Generator(model.generator);
  to_b_ = Generator(model.generator);
  disc_a_ = Discriminator(model.discriminator);
  disc_b_ = Discriminator(model.discriminator);
  gen_opt_ = std::make_unique<torch::optim::Adam>(GeneratorParameters(), MakeAdam(train));
  disc_opt_ = std::make_unique<torch::optim::Adam>(DiscriminatorParameters(), MakeAdam(train));
}

std::vector<torch::Tensor> ViewTranslator::GeneratorParameters() const {
  return Concat(to_a_->parameters(), to_b_->parameters());
}

std::vector<torch::Tensor> ViewTranslator::DiscriminatorParameters() const {
  return Concat(disc_a_->parameters(), disc_b_->parameters());
}

void ViewTranslator::Save(const fs::path& dir, json* state) const {
  const std::string p = (dir / view_id_).string();
  torch::save(to_a_, p + "_to_a.pt");
  torch::save(to_b_, p + "_to_b.pt");
  torch::save(disc_a_, p + "_disc_a.pt");
  torch::save(disc_b_, p + "_disc_b.pt");
  torch::save(*gen_opt_, p + "_gen_opt.pt");
  torch::save(*disc_opt_, p + "_disc_opt.pt");
  json pool_a, pool_b;
  pool_a_.Save(p + "_pool_a.pt", &pool_a);
  pool_b_.Save(p + "_pool_b.pt", &pool_b);
  *state = {{"view_id", view_id_}, {"pool_a", pool_a}, {"pool_b", pool_b}};
}

void ViewTranslator::Load(const fs::path& dir, const json& state) {
  if (state.at("view_id").get<std::string>() != view_id_) {
    Throw(ErrorKind::kIncompatibleCheckpoint, "checkpoint view " + state.at("view_id").dump() +
                                                  " does not match " + view_id_);
  }
  const std::string p = (dir / view_id_).string();
  try {
    torch::load(to_a_, p + "_to_a.pt");
    torch::load(to_b_, p + "_to_b.pt");
    torch::load(disc_a_, p + "_disc_a.pt");
    torch::load(disc_b_, p + "_disc_b.pt");
    torch::load(*gen_opt_, p + "_gen_opt.pt");
    torch::load(*disc_opt_, p + "_disc_opt.pt");
  } catch (const c10::Error& e) {
    Throw(ErrorKind::kIncompatibleCheckpoint, "cannot load " + p + "_*.pt: " + e.what_without_backtrace());
  }
  pool_a_.Load(p + "_pool_a.pt", state.at("pool_a"));
  pool_b_.Load(p + "_pool_b.pt", state.at("pool_b"));
}

// ---------------------------------------------------------------------------

void to_json(json& j, const StepReport& r) {
  j = {{"views", r.views}, {"total", r.total}};
  if (r.pose_loss_computed) {
    j["pose_loss_a"] = r.pose_loss_a;
    j["pose_loss_b"] = r.pose_loss_b;
  } else {
    j["pose_loss_a"] = nullptr;
    j["pose_loss_b"] = nullptr;
  }
}

JointTrainer::JointTrainer(const TrainConfig& config, const ModelConfig& model,
                           const std::vector<CameraView>& cameras,
                           std::optional<PoseSupervision> supervision)
    : config_(config), supervision_(std::move(supervision)) {
  config_.Validate();
  if (config_.views.empty()) {
    for (const auto& c : cameras) config_.views.push_back(c.view_id);
  }
  for (const std::string& id : config_.views) {
    const auto it = std::find_if(cameras.begin(), cameras.end(),
                                 [&](const CameraView& c) { return c.view_id == id; });
    if (it == cameras.end()) Throw(ErrorKind::kMissingCamera, "no camera with id " + id);
    view_indices_.push_back(static_cast<int>(it - cameras.begin()));
  }
  if (supervision_) {
    if (!supervision_->estimator) Throw(ErrorKind::kInvalidArgument, "pose supervision needs an estimator");
    const auto& est = supervision_->estimator->cameras();
    bool same = est.size() == config_.views.size();
    for (size_t i = 0; same && i < est.size(); ++i) same = est[i].view_id == config_.views[i];
    if (!same) {
      Throw(ErrorKind::kShapeMismatch, "the estimator's cameras must be the trained views, in order");
    }
  } else if (config_.weights.pose > 0.0) {
    Throw(ErrorKind::kInvalidConfig, "loss.pose > 0 needs a pose estimator");
  }
  for (const std::string& id : config_.views) {
    views_.push_back(std::make_unique<ViewTranslator>(id, model, config_));
  }
  const size_t v = views_.size();
  real_a_.resize(v);
  real_b_.resize(v);
  fake_a_.resize(v);
  fake_b_.resize(v);
}

namespace {

torch::Tensor StackView(std::span<const MultiViewSample> batch, int camera, int resolution) {
  std::vector<cv::Mat> images;
  for (const auto& s : batch) images.push_back(s.images.at(camera));
  torch::Tensor stacked = StackImages(images);
  CheckImageBatch(stacked, resolution);
  return stacked;
}

}  // namespace

StepReport JointTrainer::GeneratorPhase(std::span<const MultiViewSample> batch_a,
                                        std::span<const MultiViewSample> batch_b) {
  if (batch_a.empty() || batch_b.empty()) {
    Throw(ErrorKind::kInvalidArgument, "a training step needs samples of both persons");
  }
  const LossWeights& w = config_.weights;
  StepReport report;
  std::vector<torch::Tensor> view_totals;
  std::string term;
  try {
    for (size_t i = 0; i < views_.size(); ++i) {
      ViewTranslator& t = *views_[i];
      real_a_[i] = StackView(batch_a, view_indices_[i], config_.resolution);
      real_b_[i] = StackView(batch_b, view_indices_[i], config_.resolution);
      SetRequiresGrad(t.DiscriminatorParameters(), false);

      fake_b_[i] = t.to_b()(real_a_[i]);
      fake_a_[i] = t.to_a()(real_b_[i]);
      const torch::Tensor rec_a = t.to_a()(fake_b_[i]);
      const torch::Tensor rec_b = t.to_b()(fake_a_[i]);
      ViewComponents<torch::Tensor> c;
      term = t.view_id() + " adversarial";
      c.gan_a = GeneratorGanLoss(t.disc_a()(fake_a_[i]), w.gan_mode, w.generator_form);
      c.gan_b = GeneratorGanLoss(t.disc_b()(fake_b_[i]), w.gan_mode, w.generator_form);
      c.cycle = CycleLoss(real_a_[i], rec_a) + CycleLoss(real_b_[i], rec_b);
      if (w.identity > 0.0) {
        c.identity_a = IdentityLoss(real_a_[i], t.to_a()(real_a_[i]));
        c.identity_b = IdentityLoss(real_b_[i], t.to_b()(real_b_[i]));
      } else {
        c.identity_a = c.identity_b = torch::zeros({});
      }
      const torch::Tensor total = PerViewObjective(c, w);

      ViewLossReport r;
      r.view_id = t.view_id();
      r.gan_g = (c.gan_a + c.gan_b).item<double>();
      r.cycle = c.cycle.item<double>();
      r.identity = (c.identity_a + c.identity_b).item<double>();
      r.per_view_total = total.item<double>();
      report.views.push_back(r);
      view_totals.push_back(total);
    }

    torch::Tensor pose_a, pose_b;
    if (supervision_) {
      term = "pose";
      const PoseSupervision& sup = *supervision_;
      // Translated tuples: A frames rendered as B must show the A pose on B's
      // body, and the reverse.
      auto tuple_loss = [&](const std::vector<torch::Tensor>& fakes,
                            std::span<const MultiViewSample> source,
                            const LimbProfile& profile) {
        torch::Tensor sum = torch::zeros({}, torch::kFloat64);
        for (size_t n = 0; n < source.size(); ++n) {
          std::vector<torch::Tensor> views;
          std::vector<CropTransform> crops;
          for (size_t i = 0; i < views_.size(); ++i) {
            views.push_back(fakes[i][n]);
            crops.push_back(source[n].crops.at(view_indices_[i]));
          }
          sum = sum + PoseLoss(torch::stack(views), crops, source[n].gt_pose, profile,
                               sup.skeleton, *sup.estimator, w.epsilon);
        }
        return sum / static_cast<double>(source.size());
      };
      auto both = [&] {
        pose_a = tuple_loss(fake_a_, batch_b, sup.profile_a);
        pose_b = tuple_loss(fake_b_, batch_a, sup.profile_b);
      };
      if (w.pose > 0.0) {
        both();
      } else {
        torch::NoGradGuard no_grad;
        both();
      }
      report.pose_loss_a = pose_a.item<double>();
      report.pose_loss_b = pose_b.item<double>();
      report.pose_loss_computed = true;
    }

    torch::Tensor total;
    if (w.pose > 0.0) {
      total = TotalObjective(view_totals, pose_a.to(torch::kFloat32), pose_b.to(torch::kFloat32), w);
    } else {
      total = view_totals.front();
      for (size_t i = 1; i < view_totals.size(); ++i) total = total + view_totals[i];
    }
    report.total = total.item<double>();

    for (const auto& r : report.views) {
      if (!std::isfinite(r.per_view_total)) FailNumeric(report, batch_a, batch_b, r.view_id + " objective");
    }
    if (report.pose_loss_computed && w.pose > 0.0 &&
        !(std::isfinite(report.pose_loss_a) && std::isfinite(report.pose_loss_b))) {
      FailNumeric(report, batch_a, batch_b, "pose");
    }
    if (!std::isfinite(report.total)) FailNumeric(report, batch_a, batch_b, "total");

    for (auto& v : views_) v->gen_optimizer().zero_grad();
    total.backward();
    for (auto& v : views_) v->gen_optimizer().step();
  } catch (const Error& e) {
    for (auto& v : views_) SetRequiresGrad(v->DiscriminatorParameters(), true);
    if (e.kind() == ErrorKind::kNumeric && !failure_dir_.empty() &&
        !fs::exists(failure_dir_ / "report.json")) {
      FailNumeric(report, batch_a, batch_b, term + ": " + e.what());
    }
    throw;
  }
  for (auto& v : views_) SetRequiresGrad(v->DiscriminatorParameters(), true);
  return report;
}

void JointTrainer::DiscriminatorPhase(StepReport* report) {
  const GanMode mode = config_.weights.gan_mode;
  for (size_t i = 0; i < views_.size(); ++i) {
    if (!fake_a_[i].defined()) Throw(ErrorKind::kInvalidArgument, "discriminator phase before generator phase");
    ViewTranslator& t = *views_[i];
    if (!config_.train_discriminators) {
      torch::NoGradGuard no_grad;
      const torch::Tensor d_a = DiscriminatorGanLoss(t.disc_a()(real_a_[i]), t.disc_a()(fake_a_[i]), mode);
      const torch::Tensor d_b = DiscriminatorGanLoss(t.disc_b()(real_b_[i]), t.disc_b()(fake_b_[i]), mode);
      report->views[i].gan_d = (d_a + d_b).item<double>();
      continue;
    }
    const torch::Tensor pooled_a = t.pool_a().Query(fake_a_[i].detach());
    const torch::Tensor pooled_b = t.pool_b().Query(fake_b_[i].detach());
    const torch::Tensor d_a = DiscriminatorGanLoss(t.disc_a()(real_a_[i]), t.disc_a()(pooled_a), mode);
    const torch::Tensor d_b = DiscriminatorGanLoss(t.disc_b()(real_b_[i]), t.disc_b()(pooled_b), mode);
    const torch::Tensor loss = d_a + d_b;
    report->views[i].gan_d = loss.item<double>();
    t.disc_optimizer().zero_grad();
    loss.backward();
    t.disc_optimizer().step();
  }
  for (size_t i = 0; i < views_.size(); ++i) {
    real_a_[i] = real_b_[i] = fake_a_[i] = fake_b_[i] = torch::Tensor();
  }
}

StepReport JointTrainer::TrainStep(std::span<const MultiViewSample> batch_a,
                                   std::span<const MultiViewSample> batch_b) {
  StepReport report = GeneratorPhase(batch_a, batch_b);
  DiscriminatorPhase(&report);
  return report;
}

void JointTrainer::SetLearningRate(double lr) {
  for (auto& v : views_) {
    for (auto* opt : {&v->gen_optimizer(), &v->disc_optimizer()}) {
      for (auto& group : opt->param_groups()) {
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
      }
    }
  }
}

void JointTrainer::FailNumeric(const StepReport& report, std::span<const MultiViewSample> batch_a,
                               std::span<const MultiViewSample> batch_b, const std::string& term) {
  if (!failure_dir_.empty()) {
    fs::create_directories(failure_dir_);
    json inputs = json::array();
    for (const auto* batch : {&batch_a, &batch_b}) {
      for (const auto& s : *batch) {
        inputs.push_back({{"person", PersonName(s.person)}, {"index", s.index}, {"t", s.t}});
      }
    }
    json j = {{"term", term}, {"report", report}, {"inputs", inputs}};
    std::ofstream(failure_dir_ / "report.json") << j.dump(2) << "\n";
    std::vector<torch::Tensor> images;
    for (size_t i = 0; i < views_.size(); ++i) {
      if (real_a_[i].defined()) images.push_back(real_a_[i]);
      if (real_b_[i].defined()) images.push_back(real_b_[i]);
    }
    torch::save(images, (failure_dir_ / "inputs.pt").string());
  }
  Throw(ErrorKind::kNumeric, "non-finite loss (" + term + ")" +
                                 (failure_dir_.empty() ? "" : "; dump in " + failure_dir_.string()));
}

void JointTrainer::Save(const fs::path& dir, json* state) const {
  fs::create_directories(dir);
  json views = json::array();
  for (const auto& v : views_) {
    json s;
    v->Save(dir, &s);
    views.push_back(s);
  }
  *state = {{"views", views}};
}

void JointTrainer::Load(const fs::path& dir, const json& state) {
  const json& views = state.at("views");
  if (views.size() != views_.size()) {
    Throw(ErrorKind::kIncompatibleCheckpoint, "checkpoint has a different number of views");
  }
  for (size_t i = 0; i < views_.size(); ++i) views_[i]->Load(dir, views[i]);
}

// ---------------------------------------------------------------------------

std::vector<int> EpochOrder(std::span<const int> pool, int count, uint64_t seed, int epoch,
                            int stream) {
  if (pool.empty()) Throw(ErrorKind::kInvalidArgument, "no samples to draw from");
  std::mt19937_64 rng(MixSeed(MixSeed(seed, static_cast<uint64_t>(epoch) + 1),
                              static_cast<uint64_t>(stream) + 0x5eed));
  std::vector<int> order;
  while (static_cast<int>(order.size()) < count) {
    std::vector<int> perm(pool.begin(), pool.end());
    std::shuffle(perm.begin(), perm.end(), rng);
    order.insert(order.end(), perm.begin(), perm.end());
  }
  order.resize(count);
  return order;
}

PoseSupervision MakeSupervision(const Dataset& dataset, double heldout_fraction,
                                std::shared_ptr<const PoseEstimator> estimator) {
  PoseSupervision sup;
  sup.estimator = std::move(estimator);
  const Split a = SplitIndices(dataset.NumSamples(Person::kA), heldout_fraction);
  const Split b = SplitIndices(dataset.NumSamples(Person::kB), heldout_fraction);
  sup.profile_a = PersonLimbProfile(dataset, Person::kA, a.train, sup.skeleton);
  sup.profile_b = PersonLimbProfile(dataset, Person::kB, b.train, sup.skeleton);
  return sup;
}

fs::path CheckpointDir(const fs::path& run_dir, int epoch) {
  char name[32];
  std::snprintf(name, sizeof(name), "epoch_%04d", epoch);
  return run_dir / "checkpoints" / name;
}

json ReadCheckpointManifest(const fs::path& checkpoint) {
  std::ifstream in(checkpoint / "manifest.json");
  if (!in) Throw(ErrorKind::kIo, "cannot read " + (checkpoint / "manifest.json").string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    Throw(ErrorKind::kIncompatibleCheckpoint, "bad checkpoint manifest: " + std::string(e.what()));
  }
}

std::unique_ptr<JointTrainer> LoadCheckpoint(const fs::path& checkpoint,
                                             const std::vector<CameraView>& cameras) {
  const json manifest = ReadCheckpointManifest(checkpoint);
  TrainConfig train;
  ModelConfig model;
  try {
    train = manifest.at("train").get<TrainConfig>();
    train.weights = manifest.at("loss").get<LossWeights>();
    model = manifest.at("model").get<ModelConfig>();
  } catch (const json::exception& e) {
    Throw(ErrorKind::kIncompatibleCheckpoint, "bad checkpoint manifest: " + std::string(e.what()));
  }
  // The translators only; the 3D term is not needed to run them.
  train.weights.pose = 0.0;
  for (const std::string& id : train.views) {
    if (std::none_of(cameras.begin(), cameras.end(), [&](const CameraView& c) { return c.view_id == id; })) {
      Throw(ErrorKind::kIncompatibleCheckpoint, "checkpoint view " + id + " is not a dataset camera");
    }
  }
  auto trainer = std::make_unique<JointTrainer>(train, model, cameras, std::nullopt);
  trainer->Load(checkpoint, manifest.at("trainer"));
  return trainer;
}

namespace {

void WriteCheckpoint(const JointTrainer& trainer, const ModelConfig& model, const fs::path& run_dir, int epoch, int64_t step,
                     const std::string& config_hash, const json& run_config) {
  const fs::path final_dir = CheckpointDir(run_dir, epoch);
  const fs::path tmp = final_dir.string() + ".tmp";
  fs::remove_all(tmp);
  json state;
  trainer.Save(tmp, &state);
  const TrainConfig& stored = trainer.config();
  json manifest = {{"config_hash", config_hash},
                   {"epoch", epoch},
                   {"step", step},
                   {"train", stored},
                   {"loss", stored.weights},
                   {"model", model},
                   {"run_config", run_config},
                   {"trainer", state}};
  std::ofstream(tmp / "manifest.json") << manifest.dump(2) << "\n";
  fs::remove_all(final_dir);
  fs::rename(tmp, final_dir);
}

// Keeps the records of steps before `epoch`.
void TruncateMetrics(const fs::path& path, int epoch) {
  std::vector<std::string> kept;
  {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (json::parse(line).at("epoch").get<int>() < epoch) kept.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : kept) out << l << "\n";
}

}  // namespace

TrainSummary Train(const TrainConfig& config_in, const ModelConfig& model, const Dataset& dataset,
                   std::optional<PoseSupervision> supervision, const TrainPaths& paths,
                   const std::string& config_hash, const json& run_config,
                   const std::function<void(int, int64_t, const StepReport&)>& on_step,
                   const std::atomic<bool>* stop) {
  TrainConfig config = config_in;
  config.Validate();
  const CropOptions crop{config.resolution, config.crop_margin};
  const Split split_a = SplitIndices(dataset.NumSamples(Person::kA), config.heldout_fraction);
  const Split split_b = SplitIndices(dataset.NumSamples(Person::kB), config.heldout_fraction);
  JointTrainer trainer(config, model, dataset.cameras(), std::move(supervision));
  trainer.set_failure_dir(paths.run_dir / "failure");

  const int steps = config.steps_per_epoch > 0
                        ? config.steps_per_epoch
                        : std::max<int>(1, static_cast<int>(std::max(split_a.train.size(),
                                                                      split_b.train.size())) /
                                               config.batch_size);
  const int total_epochs = config.TotalEpochs();
  const fs::path metrics_path = paths.run_dir / "metrics.jsonl";
  fs::create_directories(paths.run_dir / "checkpoints");

  TrainSummary summary;
  int start_epoch = 0;
  if (paths.resume) {
    const json manifest = ReadCheckpointManifest(*paths.resume);
    if (manifest.at("config_hash").get<std::string>() != config_hash) {
      Throw(ErrorKind::kIncompatibleCheckpoint,
            "checkpoint config hash " + manifest.at("config_hash").get<std::string>() +
                " differs from the current config " + config_hash);
    }
    trainer.Load(*paths.resume, manifest.at("trainer"));
    start_epoch = manifest.at("epoch").get<int>();
    TruncateMetrics(metrics_path, start_epoch);
    summary.last_checkpoint = *paths.resume;
  } else {
    fs::remove(metrics_path);
    WriteCheckpoint(trainer, model, paths.run_dir, 0, 0, config_hash, run_config);
    summary.last_checkpoint = CheckpointDir(paths.run_dir, 0);
  }
  summary.epochs_completed = start_epoch;
  summary.steps = static_cast<int64_t>(start_epoch) * steps;

  std::ofstream metrics(metrics_path, std::ios::app);
  if (!metrics) Throw(ErrorKind::kIo, "cannot write " + metrics_path.string());
  for (int epoch = start_epoch; epoch < total_epochs; ++epoch) {
    const double lr = LearningRate(config, epoch);
    trainer.SetLearningRate(lr);
    const int draws = steps * config.batch_size;
    const std::vector<int> order_a = EpochOrder(split_a.train, draws, config.seed, epoch, 0);
    const std::vector<int> order_b = EpochOrder(split_b.train, draws, config.seed, epoch, 1);
    std::vector<std::string> lines;
    bool interrupted = false;
    for (int s = 0; s < steps; ++s) {
      if (stop && stop->load()) {
        interrupted = true;
        break;
      }
      std::vector<MultiViewSample> batch_a, batch_b;
      for (int k = 0; k < config.batch_size; ++k) {
        const uint64_t key = MixSeed(MixSeed(config.seed, epoch), static_cast<uint64_t>(s) * 1024 + k);
        std::mt19937_64 rng_a(MixSeed(key, 0)), rng_b(MixSeed(key, 1));
        batch_a.push_back(SampleBatch(dataset, Person::kA, order_a[s * config.batch_size + k],
                                      config.augment, rng_a, crop));
        batch_b.push_back(SampleBatch(dataset, Person::kB, order_b[s * config.batch_size + k],
                                      config.augment, rng_b, crop));
      }
      const StepReport report = trainer.TrainStep(batch_a, batch_b);
      const int64_t step = static_cast<int64_t>(epoch) * steps + s;
      json record = report;
      record["epoch"] = epoch;
      record["step"] = step;
      record["lr"] = lr;
      record["config_hash"] = config_hash;
      std::vector<int> ia, ib;
      for (const auto& x : batch_a) ia.push_back(x.index);
      for (const auto& x : batch_b) ib.push_back(x.index);
      record["samples_a"] = ia;
      record["samples_b"] = ib;
      lines.push_back(record.dump());
      summary.last = report;
      if (on_step) on_step(epoch, step, report);
    }
    if (interrupted) break;
    for (const auto& l : lines) metrics << l << "\n";
    metrics.flush();
    summary.epochs_completed = epoch + 1;
    summary.steps = static_cast<int64_t>(epoch + 1) * steps;
    if ((epoch + 1) % config.checkpoint_every == 0 || epoch + 1 == total_epochs) {
      WriteCheckpoint(trainer, model, paths.run_dir, epoch + 1, summary.steps,
                      config_hash, run_config);
      summary.last_checkpoint = CheckpointDir(paths.run_dir, epoch + 1);
    }
  }
  return summary;
}

}  // namespace mvpt
