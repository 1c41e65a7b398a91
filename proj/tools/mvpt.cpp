// mvpt: synthetic data, Panoptic ingestion, training, evaluation and
// comparison grids. Exit codes: 0 success, 1 runtime failure, 2 usage or
// configuration error.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "mvpt/error.h"
#include "mvpt/eval.h"
#include "mvpt/hash.h"
#include "mvpt/run_config.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mvpt;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

std::atomic<bool> g_stop{false};

extern "C" void OnInterrupt(int) { g_stop.store(true); }

void Log(const std::string& line) { std::cerr << line << std::endl; }

RunConfig LoadConfig(const std::string& file) {
  return file.empty() ? RunConfig::FromJson(json::object()) : RunConfig::Load(file);
}

Dataset OpenDataset(const std::string& path) {
  const fs::path dir = ResolveDataPath(path);
  if (!fs::exists(dir / "manifest.json")) {
    Throw(ErrorKind::kIo, "data.path: no dataset manifest at " + dir.string());
  }
  return Dataset::Open(dir);
}

fs::path RunDirOf(const fs::path& checkpoint) {
  return fs::absolute(checkpoint).lexically_normal().parent_path().parent_path();
}

std::shared_ptr<const PoseEstimator> EstimatorFor(const RunConfig& config, const Dataset& dataset,
                                                  const fs::path& checkpoint) {
  const fs::path dir = config.model.estimator_path.empty() ? RunDirOf(checkpoint) / "estimator"
                                                           : fs::path(config.model.estimator_path);
  if (!fs::exists(dir / "detector.pt")) {
    Throw(ErrorKind::kIo, "no trained estimator at " + dir.string());
  }
  return LoadOrTrainEstimator(config, dataset, dir);
}

// "A:12", "B:3-5" or a comma-separated list of these.
std::vector<ComparisonFrame> ParseFrames(const std::string& list) {
  std::vector<ComparisonFrame> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      Throw(ErrorKind::kInvalidConfig, "frame '" + item + "' must look like A:12 or B:3-5");
    }
    const Person person = ParsePerson(item.substr(0, colon));
    const std::string range = item.substr(colon + 1);
    const auto dash = range.find('-');
    try {
      const int first = std::stoi(range.substr(0, dash));
      const int last = dash == std::string::npos ? first : std::stoi(range.substr(dash + 1));
      for (int i = first; i <= last; ++i) out.push_back({person, i});
    } catch (const std::logic_error&) {
      Throw(ErrorKind::kInvalidConfig, "frame '" + item + "' has a bad index");
    }
  }
  return out;
}

int Synth(const std::string& config_file, uint64_t seed, const std::string& out) {
  const RunConfig config = LoadConfig(config_file);
  const DatasetManifest m = SynthScene(config.data.synth, seed, out);
  std::cout << "wrote " << m.samples[0].size() << " + " << m.samples[1].size() << " frames, "
            << m.cameras.size() << " views to " << out << "\n"
            << "dataset hash " << HashDirectory(out) << "\n";
  return kOk;
}

int Ingest(const std::string& config_file, const std::string& root, const std::string& out) {
  const RunConfig config = LoadConfig(config_file);
  PanopticIngestOptions options = config.data.panoptic;
  if (!root.empty()) {
    options.root = root;
  } else if (options.root.empty()) {
    const char* env = std::getenv("MVPT_DATA_ROOT");
    if (!env || !*env) Throw(ErrorKind::kInvalidConfig, "data.panoptic.root is not set (or --root, MVPT_DATA_ROOT)");
    options.root = env;
  } else if (options.root.is_relative()) {
    options.root = ResolveDataPath(options.root.string());
  }
  IngestReport report;
  const DatasetManifest m = IngestPanoptic(options, &report);
  WriteManifest(m, out);
  std::ofstream(fs::path(out) / "ingest_report.json") << json(report).dump(2) << "\n";
  std::cout << json(report).dump(2) << "\n";
  return kOk;
}

int TrainCommand(const std::string& config_file, const std::string& data, const std::string& run,
                 bool baseline, const std::string& resume) {
  RunConfig config = LoadConfig(config_file);
  if (!data.empty()) config.data.path = data;
  const Dataset dataset = OpenDataset(config.data.path);
  TrainRequest request{run, std::nullopt, baseline};
  if (!resume.empty()) request.resume = resume;

  std::signal(SIGINT, OnInterrupt);
  std::signal(SIGTERM, OnInterrupt);
  int last_epoch = -1;
  const TrainSummary summary = RunTraining(
      config, dataset, request, Log,
      [&](int epoch, int64_t step, const StepReport& r) {
        if (epoch != last_epoch) {
          last_epoch = epoch;
          Log("epoch " + std::to_string(epoch) + " step " + std::to_string(step) + " total " +
              std::to_string(r.total));
        }
      },
      &g_stop);
  if (g_stop.load()) {
    std::cerr << "interrupted after epoch " << summary.epochs_completed << "; continue with --resume "
              << summary.last_checkpoint.string() << "\n";
    return kFailure;
  }
  json last = summary.last;
  std::cout << json{{"epochs", summary.epochs_completed},
                    {"steps", summary.steps},
                    {"checkpoint", summary.last_checkpoint.string()},
                    {"last_step", last}}
                   .dump(2)
            << "\n";
  return kOk;
}

int EvalCommand(const std::string& config_file, const std::string& data,
                const std::string& checkpoint, const std::string& report_file,
                const std::string& split) {
  RunConfig config = config_file.empty() ? RunConfigOf(checkpoint) : LoadConfig(config_file);
  if (!data.empty()) config.data.path = data;
  if (!split.empty()) {
    json j = config.ToJson();
    j["eval"]["split"] = split;
    config = RunConfig::FromJson(j);
  }
  const Dataset dataset = OpenDataset(config.data.path);
  const auto estimator = EstimatorFor(config, dataset, checkpoint);
  const EvalReport report = EvaluateRun(checkpoint, dataset, config.eval.split, *estimator);
  WriteReport(report, report_file);
  std::cout << "run " << report.run_id << (report.baseline ? " (baseline)" : "") << ": mpjpe "
            << report.mpjpe_cm << " cm, residual " << report.cross_view_residual_px << " px over "
            << report.n_samples << " samples -> " << report_file << "\n";
  return kOk;
}

int Compare(const std::string& config_file, const std::string& data, const std::string& joint,
            const std::string& baseline, const std::string& frames, const std::string& out) {
  RunConfig config = config_file.empty() ? RunConfigOf(joint) : LoadConfig(config_file);
  if (!data.empty()) config.data.path = data;
  const Dataset dataset = OpenDataset(config.data.path);
  const auto written = RenderComparison(joint, baseline, dataset, ParseFrames(frames), out,
                                        config.eval.grid_scale);
  for (const auto& f : written) std::cout << f.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view pose-preserving translation: data, training and evaluation"};
  app.require_subcommand(1);
  torch::set_num_threads(1);

  std::string config, out, data, run, resume, checkpoint, report, split, joint, baseline_ckpt,
      frames, root;
  uint64_t seed = 0;
  bool baseline = false;

  auto* synth = app.add_subcommand("synth", "render a synthetic two-person dataset");
  synth->add_option("--config", config, "run config (uses data.synth)")->check(CLI::ExistingFile);
  synth->add_option("--seed", seed, "scene seed");
  synth->add_option("--out", out, "output dataset directory")->required();

  auto* ingest = app.add_subcommand("ingest", "convert a Panoptic sequence pair into a dataset");
  ingest->add_option("--config", config, "run config (uses data.panoptic)")
      ->required()
      ->check(CLI::ExistingFile);
  ingest->add_option("--root", root, "Panoptic root (default data.panoptic.root or MVPT_DATA_ROOT)");
  ingest->add_option("--out", out, "output dataset directory")->required();

  auto* train = app.add_subcommand("train", "train the translators (joint or baseline)");
  train->add_option("--config", config, "run config")->check(CLI::ExistingFile);
  train->add_option("--data", data, "dataset directory (overrides data.path)");
  train->add_option("--run", run, "run directory")->required();
  train->add_flag("--baseline", baseline, "train without the 3D pose term");
  train->add_option("--resume", resume, "checkpoint directory to continue from");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--config", config, "run config (default: the checkpoint's)");
  eval->add_option("--data", data, "dataset directory (overrides data.path)");
  eval->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  eval->add_option("--report", report, "report JSON path")->required();
  eval->add_option("--split", split, "heldout or train");

  auto* compare = app.add_subcommand("compare", "render real / joint / baseline grids");
  compare->add_option("--config", config, "run config (default: the joint checkpoint's)");
  compare->add_option("--data", data, "dataset directory (overrides data.path)");
  compare->add_option("--joint", joint, "joint-model checkpoint")->required();
  compare->add_option("--baseline", baseline_ckpt, "baseline checkpoint")->required();
  compare->add_option("--frames", frames, "frames, e.g. A:90-92,B:95")->required();
  compare->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*synth) return Synth(config, seed, out);
    if (*ingest) return Ingest(config, root, out);
    if (*train) return TrainCommand(config, data, run, baseline, resume);
    if (*eval) return EvalCommand(config, data, checkpoint, report, split);
    if (*compare) return Compare(config, data, joint, baseline_ckpt, frames, out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::kInvalidConfig ? kUsage : kFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}
