#include <cstdlib>
#include <fstream>

#include <gtest/gtest.h>

#include "mvpt/error.h"
#include "mvpt/run_config.h"
#include "temp_dir.h"

namespace mvpt {
namespace {

using nlohmann::json;

ErrorKind KindOf(const json& j) {
  try {
    RunConfig::FromJson(j);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::kIo;  // not thrown
}

std::string MessageOf(const json& j) {
  try {
    RunConfig::FromJson(j);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

TEST(RunConfig, DefaultsRoundTripThroughJson) {
  const RunConfig c = RunConfig::FromJson(json::object());
  EXPECT_EQ(c.train.resolution, 64);
  EXPECT_EQ(c.model.generator.resolution, 64);
  EXPECT_EQ(c.data.heldout_fraction, 0.1);
  EXPECT_EQ(c.loss.pose, 1.0);
  const RunConfig back = RunConfig::FromJson(c.ToJson());
  EXPECT_EQ(back.ToJson(), c.ToJson());
  EXPECT_EQ(back.Hash(), c.Hash());
}

TEST(RunConfig, HashIgnoresSpellingButNotValues) {
  const RunConfig implicit = RunConfig::FromJson(json::object());
  const RunConfig explicit_defaults = RunConfig::FromJson({{"train", {{"resolution", 64}}}, {"loss", {{"pose", 1.0}}}});
  EXPECT_EQ(implicit.Hash(), explicit_defaults.Hash());
  const RunConfig other = RunConfig::FromJson({{"loss", {{"pose", 0.0}}}});
  EXPECT_NE(implicit.Hash(), other.Hash());
  EXPECT_EQ(implicit.Hash().size(), 16u);
}

TEST(RunConfig, UnknownKeysAreRejectedWithTheirPath) {
  EXPECT_EQ(KindOf({{"trian", json::object()}}), ErrorKind::kInvalidConfig);
  EXPECT_EQ(KindOf({{"train", {{"epocs", 3}}}}), ErrorKind::kInvalidConfig);
  EXPECT_NE(MessageOf({{"train", {{"epocs", 3}}}}).find("train.epocs"), std::string::npos);
  EXPECT_EQ(KindOf({{"data", {{"synth", {{"frames", 3}}}}}}), ErrorKind::kInvalidConfig);
  EXPECT_EQ(KindOf({{"eval", {{"split", "test"}}}}), ErrorKind::kInvalidConfig);
}

TEST(RunConfig, DataOwnsViewsMarginAndSplit) {
  for (const char* key : {"views", "crop_margin", "heldout_fraction"}) {
    const json j = {{"train", {{key, json()}}}};
    EXPECT_EQ(KindOf(j), ErrorKind::kInvalidConfig) << key;
    EXPECT_NE(MessageOf(j).find("data section"), std::string::npos) << key;
  }
  const RunConfig c = RunConfig::FromJson(
      {{"data", {{"views", {"cam1", "cam0"}}, {"crop_margin", 1.5}, {"heldout_fraction", 0.25}}}});
  const TrainConfig t = c.EffectiveTrain();
  EXPECT_EQ(t.views, (std::vector<std::string>{"cam1", "cam0"}));
  EXPECT_EQ(t.crop_margin, 1.5);
  EXPECT_EQ(t.heldout_fraction, 0.25);
  EXPECT_EQ(c.Crop().margin, 1.5);
}

TEST(RunConfig, NetworkResolutionsFollowTheTrainResolution) {
  const RunConfig c = RunConfig::FromJson({{"train", {{"resolution", 32}}}});
  EXPECT_EQ(c.model.generator.resolution, 32);
  EXPECT_EQ(c.model.discriminator.resolution, 32);
  EXPECT_EQ(c.model.detector.resolution, 32);
  EXPECT_NO_THROW(RunConfig::FromJson(
      {{"train", {{"resolution", 32}}}, {"model", {{"generator", {{"resolution", 32}}}}}}));
  EXPECT_EQ(KindOf({{"model", {{"detector", {{"resolution", 128}}}}}}), ErrorKind::kInvalidConfig);
}

TEST(RunConfig, InvalidValuesAreConfigErrors) {
  EXPECT_EQ(KindOf({{"loss", {{"cycle", -1.0}}}}), ErrorKind::kInvalidConfig);
  EXPECT_EQ(KindOf({{"loss", {{"epsilon", 0.0}}}}), ErrorKind::kInvalidConfig);
  EXPECT_EQ(KindOf({{"train", {{"batch_size", 0}}}}), ErrorKind::kInvalidConfig);
  EXPECT_EQ(KindOf({{"eval", {{"grid_scale", 0}}}}), ErrorKind::kInvalidConfig);
}

TEST(RunConfig, LoadAcceptsCommentsAndRejectsBrokenJson) {
  const testing::TempDir dir;
  std::ofstream(dir.path() / "ok.json") << "{\n  // short run\n  \"train\": {\"epochs\": 3}\n}\n";
  EXPECT_EQ(RunConfig::Load(dir.path() / "ok.json").train.epochs, 3);
  std::ofstream(dir.path() / "bad.json") << "{\"train\": ";
  try {
    RunConfig::Load(dir.path() / "bad.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidConfig);
  }
}

TEST(RunConfig, DataPathResolution) {
  try {
    ResolveDataPath("");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidConfig);
    EXPECT_NE(std::string(e.what()).find("data.path"), std::string::npos);
  }
  EXPECT_EQ(ResolveDataPath("/abs/ds"), std::filesystem::path("/abs/ds"));
  setenv("MVPT_DATA_ROOT", "/data/root", 1);
  EXPECT_EQ(ResolveDataPath("ds"), std::filesystem::path("/data/root/ds"));
  unsetenv("MVPT_DATA_ROOT");
  EXPECT_EQ(ResolveDataPath("ds"), std::filesystem::absolute("ds"));
}

}  // namespace
}  // namespace mvpt
