#include <signal.h>
#include <sys/wait.h>
#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "panoptic_layout.h"
#include "temp_dir.h"

namespace mvpt {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code = -1;
  std::string output;
};

Result RunCli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + MVPT_CLI_PATH + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (size_t n = fread(buf, 1, sizeof(buf), pipe)) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::vector<json> ReadLines(const fs::path& file) {
  std::vector<json> out;
  std::ifstream in(file);
  for (std::string line; std::getline(in, line);) out.push_back(json::parse(line));
  return out;
}

// Compares two metric records, numbers within `tol`.
void ExpectClose(const json& a, const json& b, double tol, const std::string& where = "") {
  ASSERT_EQ(a.type(), b.type()) << where;
  if (a.is_number_float() || (a.is_number() && b.is_number_float())) {
    EXPECT_NEAR(a.get<double>(), b.get<double>(), tol) << where;
  } else if (a.is_object()) {
    ASSERT_EQ(a.size(), b.size()) << where;
    for (const auto& item : a.items()) ExpectClose(item.value(), b.at(item.key()), tol, where + "." + item.key());
  } else if (a.is_array()) {
    ASSERT_EQ(a.size(), b.size()) << where;
    for (size_t i = 0; i < a.size(); ++i) ExpectClose(a[i], b[i], tol, where + "[" + std::to_string(i) + "]");
  } else {
    EXPECT_EQ(a, b) << where;
  }
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir("mvpt_cli");
    WriteConfig("tiny.json", 2, 2);
    ASSERT_EQ(RunCli("synth --config " + Path("tiny.json") + " --seed 1 --out " + Path("ds")).code, 0);
  }
  static void TearDownTestSuite() { delete dir_; }

  static std::string Path(const std::string& name) { return (dir_->path() / name).string(); }

  static void WriteConfig(const std::string& name, int epochs, int steps, double pose = 1.0) {
    const json config = {
        {"data", {{"path", Path("ds")}, {"heldout_fraction", 0.2}, {"synth", {{"num_frames", 10}}}}},
        {"model",
         {{"generator", {{"base_channels", 4}, {"downsamplings", 2}, {"residual_blocks", 1}}},
          {"discriminator", {{"base_channels", 4}, {"layers", 3}}},
          {"detector", {{"base_channels", 4}}},
          {"detector_training", {{"iterations", 20}, {"batch_size", 4}}},
          {"estimator_path", Path("estimator")}}},
        {"loss", {{"pose", pose}}},
        {"train", {{"resolution", 32}, {"epochs", epochs}, {"steps_per_epoch", steps}, {"pool_size", 4}}}};
    std::ofstream(dir_->path() / name) << config.dump(2);
  }

  static inline testing::TempDir* dir_ = nullptr;
};

TEST_F(Cli, SynthPrintsAReproducibleHash) {
  const Result a = RunCli("synth --config " + Path("tiny.json") + " --seed 4 --out " + Path("s1"));
  const Result b = RunCli("synth --config " + Path("tiny.json") + " --seed 4 --out " + Path("s2"));
  ASSERT_EQ(a.code, 0) << a.output;
  const auto hash_line = [](const std::string& out) { return out.substr(out.find("dataset hash")); };
  EXPECT_EQ(hash_line(a.output), hash_line(b.output));
}

TEST_F(Cli, UsageAndValidationErrors) {
  EXPECT_EQ(RunCli("synth --seed 1").code, 2);
  EXPECT_EQ(RunCli("").code, 2);
  EXPECT_EQ(RunCli("frobnicate").code, 2);

  std::ofstream(dir_->path() / "one_view.json") << R"({"data": {"synth": {"num_views": 1}}})";
  const Result one = RunCli("synth --config " + Path("one_view.json") + " --out " + Path("x"));
  EXPECT_EQ(one.code, 2);
  EXPECT_NE(one.output.find("at least 2 views"), std::string::npos) << one.output;

  std::ofstream(dir_->path() / "typo.json") << R"({"train": {"epocs": 3}})";
  const Result typo = RunCli("train --config " + Path("typo.json") + " --run " + Path("r"));
  EXPECT_EQ(typo.code, 2);
  EXPECT_NE(typo.output.find("train.epocs"), std::string::npos) << typo.output;

  std::ofstream(dir_->path() / "no_data.json") << R"({"train": {"epochs": 1}})";
  const Result no_data = RunCli("train --config " + Path("no_data.json") + " --run " + Path("r"));
  EXPECT_NE(no_data.code, 0);
  EXPECT_NE(no_data.output.find("data.path"), std::string::npos) << no_data.output;

  const Result missing = RunCli("train --config " + Path("tiny.json") + " --data " + Path("absent") +
                             " --run " + Path("r"));
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.output.find("data.path"), std::string::npos) << missing.output;
}

TEST_F(Cli, DataRootComesFromTheEnvironment) {
  std::ofstream(dir_->path() / "relative.json")
      << json{{"data", {{"path", "ds"}, {"heldout_fraction", 0.2}}},
              {"model", {{"generator", {{"base_channels", 4}, {"residual_blocks", 1}}},
                         {"discriminator", {{"base_channels", 4}}},
                         {"detector", {{"base_channels", 4}}},
                         {"estimator_path", Path("estimator")},
                         {"detector_training", {{"iterations", 20}, {"batch_size", 4}}}}},
              {"train", {{"resolution", 32}, {"epochs", 1}, {"steps_per_epoch", 1}}}}
             .dump();
  const Result r = RunCli("train --config " + Path("relative.json") + " --run " + Path("env_run"),
                       "MVPT_DATA_ROOT=" + dir_->path().string());
  EXPECT_EQ(r.code, 0) << r.output;
}

TEST_F(Cli, TrainEvalAndCompare) {
  const Result joint = RunCli("train --config " + Path("tiny.json") + " --run " + Path("joint"));
  ASSERT_EQ(joint.code, 0) << joint.output;
  EXPECT_NE(joint.output.find("\"last_step\""), std::string::npos);
  const Result base =
      RunCli("train --config " + Path("tiny.json") + " --run " + Path("base") + " --baseline");
  ASSERT_EQ(base.code, 0) << base.output;
  EXPECT_NE(base.output.find("warning: --baseline overrides loss.pose"), std::string::npos);

  const std::string jc = Path("joint/checkpoints/epoch_0002"), bc = Path("base/checkpoints/epoch_0002");
  ASSERT_EQ(RunCli("eval --checkpoint " + jc + " --report " + Path("joint.json")).code, 0);
  ASSERT_EQ(RunCli("eval --checkpoint " + bc + " --report " + Path("base.json")).code, 0);
  const json jr = json::parse(std::ifstream(Path("joint.json")));
  const json br = json::parse(std::ifstream(Path("base.json")));
  for (const char* key : {"mpjpe_cm", "per_joint_error", "cross_view_residual_px", "n_samples",
                          "run_id", "baseline", "config_hash"}) {
    EXPECT_TRUE(jr.contains(key)) << key;
  }
  EXPECT_FALSE(jr["baseline"].get<bool>());
  EXPECT_TRUE(br["baseline"].get<bool>());
  EXPECT_NE(jr["config_hash"], br["config_hash"]);

  // Every artifact carries the run's config hash.
  const std::string hash = jr["config_hash"];
  EXPECT_EQ(json::parse(std::ifstream(Path("joint/config.json")))["config_hash"], hash);
  for (const json& rec : ReadLines(Path("joint/metrics.jsonl"))) EXPECT_EQ(rec["config_hash"], hash);

  const Result grids = RunCli("compare --joint " + jc + " --baseline " + bc +
                           " --frames A:8-9,B:9 --out " + Path("grids"));
  ASSERT_EQ(grids.code, 0) << grids.output;
  int pngs = 0;
  for (const auto& e : fs::directory_iterator(Path("grids"))) pngs += e.path().extension() == ".png";
  EXPECT_EQ(pngs, 3);
  const json index = json::parse(std::ifstream(Path("grids/grids.json")));
  EXPECT_NE(index.dump().find(hash), std::string::npos);

  const Result outside = RunCli("compare --joint " + jc + " --baseline " + bc + " --frames A:1 --out " +
                             Path("grids2"));
  EXPECT_EQ(outside.code, 1);
  EXPECT_NE(outside.output.find("valid range [8, 9]"), std::string::npos) << outside.output;
}

TEST_F(Cli, EqualConfigsGiveEqualMetrics) {
  ASSERT_EQ(RunCli("train --config " + Path("tiny.json") + " --run " + Path("same1")).code, 0);
  ASSERT_EQ(RunCli("train --config " + Path("tiny.json") + " --run " + Path("same2")).code, 0);
  const auto a = ReadLines(Path("same1/metrics.jsonl"));
  const auto b = ReadLines(Path("same2/metrics.jsonl"));
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a, b);
}

TEST_F(Cli, InterruptThenResumeMatchesAnUninterruptedRun) {
  WriteConfig("long.json", 6, 20);
  ASSERT_EQ(RunCli("train --config " + Path("long.json") + " --run " + Path("straight")).code, 0);

  const pid_t pid = fork();
  ASSERT_GE(pid, 0);
  if (pid == 0) {
    const int devnull = open("/dev/null", O_WRONLY);
    dup2(devnull, 1);
    dup2(devnull, 2);
    execl(MVPT_CLI_PATH, MVPT_CLI_PATH, "train", "--config", Path("long.json").c_str(), "--run",
          Path("cut").c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  const fs::path marker = Path("cut/checkpoints/epoch_0002");
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(120);
  while (!fs::exists(marker) && std::chrono::steady_clock::now() < deadline) {
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  kill(pid, SIGINT);
  int status = 0;
  waitpid(pid, &status, 0);
  ASSERT_TRUE(WIFEXITED(status));
  ASSERT_EQ(WEXITSTATUS(status), 1) << "run finished before the interrupt";
  EXPECT_FALSE(fs::exists(Path("cut/checkpoints/epoch_0006")));

  int last = 0;
  for (const auto& e : fs::directory_iterator(Path("cut/checkpoints"))) {
    const std::string name = e.path().filename().string();
    if (name.rfind("epoch_", 0) == 0) last = std::max(last, std::stoi(name.substr(6)));
  }
  ASSERT_GE(last, 2);
  char resume[32];
  std::snprintf(resume, sizeof(resume), "epoch_%04d", last);
  const Result r = RunCli("train --config " + Path("long.json") + " --run " + Path("cut") +
                       " --resume " + Path("cut/checkpoints/" + std::string(resume)));
  ASSERT_EQ(r.code, 0) << r.output;

  const auto straight = ReadLines(Path("straight/metrics.jsonl"));
  const auto resumed = ReadLines(Path("cut/metrics.jsonl"));
  ASSERT_EQ(straight.size(), 120u);
  ASSERT_EQ(resumed.size(), straight.size());
  for (size_t i = 0; i < straight.size(); ++i) ExpectClose(straight[i], resumed[i], 1e-6, "step " + std::to_string(i));

  std::ofstream(dir_->path() / "changed.json") << [&] {
    json j = json::parse(std::ifstream(Path("long.json")));
    j["train"]["base_lr"] = 1e-3;
    return j.dump();
  }();
  const Result mismatch = RunCli("train --config " + Path("changed.json") + " --run " + Path("cut") +
                              " --resume " + Path("cut/checkpoints/epoch_0002"));
  EXPECT_EQ(mismatch.code, 1);
  EXPECT_NE(mismatch.output.find("hash"), std::string::npos) << mismatch.output;
}

TEST_F(Cli, IngestWritesManifestAndReport) {
  testing::PanopticLayout layout;
  layout.Write(dir_->path() / "panoptic");
  json options = layout.Options("");
  options.erase("root");
  std::ofstream(dir_->path() / "ingest.json") << json{{"data", {{"panoptic", options}}}}.dump();
  const Result r = RunCli("ingest --config " + Path("ingest.json") + " --out " + Path("pan_ds"),
                       "MVPT_DATA_ROOT=" + Path("panoptic"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(Path("pan_ds/manifest.json")));
  const json report = json::parse(std::ifstream(Path("pan_ds/ingest_report.json")));
  EXPECT_GE(report["inside_fraction"].get<double>(), 0.99);

  options["camera_ids"] = {"00_03", "99_99"};
  std::ofstream(dir_->path() / "bad_cam.json") << json{{"data", {{"panoptic", options}}}}.dump();
  const Result bad = RunCli("ingest --config " + Path("bad_cam.json") + " --root " + Path("panoptic") +
                         " --out " + Path("pan_bad"));
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.output.find("99_99"), std::string::npos) << bad.output;
}

}  // namespace
}  // namespace mvpt
