#include "mvpt/run_config.h"

#include <algorithm>
#include <cstdlib>
#include <fstream>

#include "mvpt/detector_training.h"
#include "mvpt/error.h"
#include "mvpt/hash.h"
#include "mvpt/json_fields.h"

namespace mvpt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Keys of the train section that the data section owns.
constexpr const char* kDataOwned[] = {"views", "crop_margin", "heldout_fraction"};

void ReadResolution(const json& section, const char* name, int train_resolution, int& out) {
  out = train_resolution;
  if (section.contains(name) && section[name].contains("resolution")) {
    const int given = section[name]["resolution"].get<int>();
    if (given != train_resolution) {
      Throw(ErrorKind::kInvalidConfig, "model." + std::string(name) + ".resolution (" +
                                           std::to_string(given) + ") differs from train.resolution (" +
                                           std::to_string(train_resolution) + ")");
    }
  }
}

}  // namespace

RunConfig RunConfig::FromJson(const json& j) {
  RunConfig c;
  JsonFields top(j, "");
  top.Allow("data").Allow("model").Allow("loss").Allow("train").Allow("eval").Finish();

  if (j.contains("train")) {
    const json& t = j["train"];
    if (!t.is_object()) Throw(ErrorKind::kInvalidConfig, "train must be an object");
    for (const char* key : kDataOwned) {
      if (t.contains(key)) {
        Throw(ErrorKind::kInvalidConfig,
              "train." + std::string(key) + " belongs in the data section");
      }
    }
    c.train = t.get<TrainConfig>();
  }
  if (j.contains("loss")) c.loss = j["loss"].get<LossWeights>();
  if (j.contains("model")) c.model = j["model"].get<ModelConfig>();
  const json model = j.value("model", json::object());
  ReadResolution(model, "generator", c.train.resolution, c.model.generator.resolution);
  ReadResolution(model, "discriminator", c.train.resolution, c.model.discriminator.resolution);
  ReadResolution(model, "detector", c.train.resolution, c.model.detector.resolution);

  if (j.contains("data")) {
    const json& d = j["data"];
    json synth, panoptic;
    JsonFields(d, "data")
        .Read("path", c.data.path)
        .Read("views", c.data.views)
        .Read("heldout_fraction", c.data.heldout_fraction)
        .Read("crop_margin", c.data.crop_margin)
        .Read("synth", synth)
        .Read("panoptic", panoptic)
        .Finish();
    if (!synth.is_null()) c.data.synth = SynthConfigFromJson(synth);
    if (!panoptic.is_null()) c.data.panoptic = panoptic.get<PanopticIngestOptions>();
  }
  if (j.contains("eval")) {
    std::string split = "heldout";
    JsonFields(j["eval"], "eval")
        .Read("split", split)
        .Read("grid_scale", c.eval.grid_scale)
        .Finish();
    if (split == "heldout") {
      c.eval.split = EvalSplit::kHeldout;
    } else if (split == "train") {
      c.eval.split = EvalSplit::kTrain;
    } else {
      Throw(ErrorKind::kInvalidConfig, "eval.split must be 'heldout' or 'train', got '" + split + "'");
    }
  }
  c.Validate();
  return c;
}

RunConfig RunConfig::Load(const fs::path& file) {
  std::ifstream in(file);
  if (!in) Throw(ErrorKind::kIo, "cannot read config " + file.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    Throw(ErrorKind::kInvalidConfig, "config " + file.string() + ": " + e.what());
  }
  return FromJson(j);
}

json RunConfig::ToJson() const {
  json train_json = train;
  for (const char* key : kDataOwned) train_json.erase(key);
  json model_json = model;
  for (const char* net : {"generator", "discriminator", "detector"}) model_json[net].erase("resolution");
  return {{"data",
           {{"path", data.path},
            {"views", data.views},
            {"heldout_fraction", data.heldout_fraction},
            {"crop_margin", data.crop_margin},
            {"synth", SynthConfigToJson(data.synth)},
            {"panoptic", data.panoptic}}},
          {"model", model_json},
          {"loss", loss},
          {"train", train_json},
          {"eval",
           {{"split", eval.split == EvalSplit::kHeldout ? "heldout" : "train"},
            {"grid_scale", eval.grid_scale}}}};
}

std::string RunConfig::Hash() const { return HashString(ToJson().dump()); }

void RunConfig::Validate() const {
  EffectiveTrain().Validate();
  mvpt::Validate(model.generator);
  mvpt::Validate(model.discriminator);
  mvpt::Validate(model.detector);
  if (eval.grid_scale < 1) Throw(ErrorKind::kInvalidConfig, "eval.grid_scale must be >= 1");
}

TrainConfig RunConfig::EffectiveTrain() const {
  TrainConfig t = train;
  t.views = data.views;
  t.crop_margin = data.crop_margin;
  t.heldout_fraction = data.heldout_fraction;
  t.weights = loss;
  return t;
}

fs::path ResolveDataPath(const std::string& path) {
  if (path.empty()) {
    Throw(ErrorKind::kInvalidConfig, "data.path is not set (config key data.path or --data)");
  }
  const fs::path p(path);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("MVPT_DATA_ROOT"); root && *root) return fs::path(root) / p;
  return fs::absolute(p);
}

std::vector<CameraView> SelectedCameras(const RunConfig& config, const Dataset& dataset) {
  if (config.data.views.empty()) return dataset.cameras();
  std::vector<CameraView> out;
  for (const std::string& id : config.data.views) {
    const auto& cams = dataset.cameras();
    const auto it = std::find_if(cams.begin(), cams.end(),
                                 [&](const CameraView& c) { return c.view_id == id; });
    if (it == cams.end()) Throw(ErrorKind::kMissingCamera, "data.views names unknown camera '" + id + "'");
    out.push_back(*it);
  }
  return out;
}

std::shared_ptr<const PoseEstimator> LoadOrTrainEstimator(const RunConfig& config,
                                                          const Dataset& dataset,
                                                          const fs::path& fallback_dir,
                                                          const LogFn& log) {
  const fs::path dir =
      config.model.estimator_path.empty() ? fallback_dir : fs::path(config.model.estimator_path);
  KeypointDetector detector{nullptr};
  if (fs::exists(dir / "detector.pt")) {
    detector = LoadDetector(dir);
    if (log) log("loaded estimator from " + dir.string());
  } else {
    const Split a = SplitIndices(dataset.NumSamples(Person::kA), config.data.heldout_fraction);
    const Split b = SplitIndices(dataset.NumSamples(Person::kB), config.data.heldout_fraction);
    if (log) log("training estimator (" + std::to_string(config.model.detector_training.iterations) +
                 " iterations) into " + dir.string());
    detector = TrainDetector(dataset, {a.train, b.train}, config.model.detector,
                             config.model.detector_training, config.Crop(),
                             [&](int it, double loss) {
                               if (log) log("  estimator iteration " + std::to_string(it) +
                                            " loss " + std::to_string(loss));
                             });
    const DetectorAccuracy heldout =
        EvaluateDetector(detector, dataset, {a.heldout, b.heldout}, config.Crop());
    if (log) {
      log("estimator held-out error " + std::to_string(heldout.mean_crop_px) + " crop px, " +
          std::to_string(heldout.mpjpe_cm) + " cm");
    }
    SaveDetector(detector,
                 {{"training", config.model.detector_training},
                  {"crop_margin", config.data.crop_margin},
                  {"heldout", heldout}},
                 dir);
  }
  if (detector->options().resolution != config.train.resolution) {
    Throw(ErrorKind::kResolutionMismatch,
          "estimator at " + dir.string() + " expects " +
              std::to_string(detector->options().resolution) + " px crops, run uses " +
              std::to_string(config.train.resolution));
  }
  return std::make_shared<TriangulatingEstimator>(std::make_shared<DetectorKeypointSource>(detector),
                                                  SelectedCameras(config, dataset));
}

TrainSummary RunTraining(RunConfig config, const Dataset& dataset, const TrainRequest& request,
                         const LogFn& log,
                         const std::function<void(int, int64_t, const StepReport&)>& on_step,
                         const std::atomic<bool>* stop) {
  if (request.baseline && config.loss.pose != 0.0) {
    if (log) log("warning: --baseline overrides loss.pose " + std::to_string(config.loss.pose) + " -> 0");
    config.loss.pose = 0.0;
  }
  config.Validate();
  const auto estimator = LoadOrTrainEstimator(config, dataset, request.run_dir / "estimator", log);
  const std::string hash = config.Hash();
  fs::create_directories(request.run_dir);
  std::ofstream(request.run_dir / "config.json")
      << json{{"config_hash", hash}, {"config", config.ToJson()}}.dump(2) << "\n";
  return Train(config.EffectiveTrain(), config.model, dataset,
               MakeSupervision(dataset, config.data.heldout_fraction, estimator),
               TrainPaths{request.run_dir, request.resume}, hash, config.ToJson(), on_step, stop);
}

RunConfig RunConfigOf(const fs::path& checkpoint) {
  const json manifest = ReadCheckpointManifest(checkpoint);
  if (!manifest.contains("run_config") || manifest["run_config"].is_null()) {
    Throw(ErrorKind::kIncompatibleCheckpoint, "checkpoint " + checkpoint.string() + " has no run config");
  }
  return RunConfig::FromJson(manifest["run_config"]);
}

}  // namespace mvpt
