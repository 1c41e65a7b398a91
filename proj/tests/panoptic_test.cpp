#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "mvpt/error.h"
#include "mvpt/panoptic.h"
#include "panoptic_layout.h"
#include "temp_dir.h"

namespace mvpt {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

template <typename F>
const Error* Capture(F&& f, std::unique_ptr<Error>& holder) {
  try {
    f();
  } catch (const Error& e) {
    holder = std::make_unique<Error>(e);
  }
  return holder.get();
}

TEST(PanopticMapping, CocoJointsComeFromTheSameNamedJoint) {
  const auto& index = PanopticToCocoIndex();
  for (int j = 0; j < kNumJoints; ++j) {
    EXPECT_EQ(PanopticJointNames()[index[j]], CocoJointNames()[j]) << j;
  }
}

TEST(PanopticMapping, TableIsInjectiveAndDropsNeckAndBodyCenter) {
  const auto& index = PanopticToCocoIndex();
  const std::set<int> used(index.begin(), index.end());
  EXPECT_EQ(used.size(), size_t{kNumJoints});
  std::set<int> dropped;
  for (int i = 0; i < kPanopticJoints; ++i) {
    if (!used.count(i)) dropped.insert(i);
  }
  // Joint order of the dataset's body format: 0 neck, 2 body center.
  EXPECT_EQ(dropped, (std::set<int>{0, 2}));
  EXPECT_EQ(std::vector<int>(index.begin(), index.end()),
            (std::vector<int>{1, 15, 17, 16, 18, 3, 9, 4, 10, 5, 11, 6, 12, 7, 13, 8, 14}));
}

TEST(PanopticMapping, ValuesAndValidityFollowTheTable) {
  std::vector<double> joints19(76);
  for (int i = 0; i < kPanopticJoints; ++i) {
    joints19[4 * i] = i;
    joints19[4 * i + 1] = 100 + i;
    joints19[4 * i + 2] = 200 + i;
    joints19[4 * i + 3] = i == 7 ? -1.0 : 0.5;  // left knee unreconstructed
  }
  const Pose3D pose = MapPanopticToCoco(joints19);
  for (int j = 0; j < kNumJoints; ++j) {
    const int s = PanopticToCocoIndex()[j];
    EXPECT_EQ(pose.joints(j, 0), s);
    EXPECT_EQ(pose.joints(j, 1), 100 + s);
    EXPECT_EQ(pose.joints(j, 2), 200 + s);
    EXPECT_EQ(pose.valid[j], s != 7);
  }
  std::vector<double> short_input(57);
  std::unique_ptr<Error> err;
  ASSERT_NE(Capture([&] { MapPanopticToCoco(short_input); }, err), nullptr);
  EXPECT_EQ(err->kind(), ErrorKind::kMalformedSkeleton);
}

class PanopticTree : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir("mvpt_panoptic");
    layout_.Write(dir_->path() / "pristine");
  }
  static void TearDownTestSuite() { delete dir_; }

  // A private copy of the tree that a test may damage.
  fs::path Copy(const std::string& name) const {
    const fs::path out = dir_->path() / name;
    fs::remove_all(out);
    fs::copy(dir_->path() / "pristine", out, fs::copy_options::recursive);
    return out;
  }

  static inline testing::TempDir* dir_ = nullptr;
  static inline testing::PanopticLayout layout_;
};

TEST_F(PanopticTree, CalibrationParsesToTheRigProjections) {
  const std::vector<std::string> ids = {"00_07", "00_03"};
  const auto cams = ReadPanopticCameras(
      dir_->path() / "pristine" / "seq_a" / "calibration_seq_a.json", ids);
  const auto rig = layout_.Cameras();
  ASSERT_EQ(cams.size(), 2u);
  EXPECT_EQ(cams[0].view_id, "00_07");
  EXPECT_LT((cams[0].projection - rig[1].projection).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((cams[1].projection - rig[0].projection).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_EQ(cams[0].width, layout_.width);
  EXPECT_EQ(cams[0].height, layout_.height);
}

TEST_F(PanopticTree, IngestKeepsEveryFrameAndReprojectsInside) {
  IngestReport report;
  const DatasetManifest m = IngestPanoptic(layout_.Options(dir_->path() / "pristine"), &report);
  EXPECT_EQ(m.source, "panoptic");
  ASSERT_EQ(m.cameras.size(), 2u);
  for (int p = 0; p < 2; ++p) {
    ASSERT_EQ(m.samples[p].size(), size_t(layout_.frames));
    EXPECT_EQ(report.persons[p].kept, layout_.frames);
    EXPECT_EQ(m.samples[p].front().t, layout_.first_frame);
    for (int k = 0; k < layout_.frames; ++k) {
      const Pose3D truth = layout_.Pose(p, k);
      EXPECT_LT((m.samples[p][k].gt_pose.joints - truth.joints).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
  EXPECT_EQ(m.person_names[1], "seq_b_body2");
  EXPECT_GE(report.InsideFraction(), 0.99);

  // The manifest opens as a dataset and yields crops.
  const Dataset dataset(m, dir_->path());
  std::mt19937_64 rng(0);
  const MultiViewSample s = SampleBatch(dataset, Person::kB, 3, false, rng, CropOptions{});
  ASSERT_EQ(s.images.size(), 2u);
  EXPECT_EQ(s.images[0].rows, 64);
}

TEST_F(PanopticTree, IngestIsIdempotent) {
  const auto options = layout_.Options(dir_->path() / "pristine");
  const DatasetManifest first = IngestPanoptic(options);
  const DatasetManifest second = IngestPanoptic(options);
  EXPECT_TRUE(first == second);

  const testing::TempDir out;
  WriteManifest(first, out.path() / "one");
  WriteManifest(second, out.path() / "two");
  for (const std::string file : {"manifest.json", "poses/seq_a.jsonl", "poses/seq_b_body2.jsonl"}) {
    std::ifstream a(out.path() / "one" / file), b(out.path() / "two" / file);
    const std::string sa((std::istreambuf_iterator<char>(a)), {});
    const std::string sb((std::istreambuf_iterator<char>(b)), {});
    EXPECT_FALSE(sa.empty());
    EXPECT_EQ(sa, sb) << file;
  }
}

TEST_F(PanopticTree, UnknownCameraIsNamed) {
  auto options = layout_.Options(dir_->path() / "pristine");
  options.camera_ids = {"00_03", "07_99"};
  std::unique_ptr<Error> err;
  ASSERT_NE(Capture([&] { IngestPanoptic(options); }, err), nullptr);
  EXPECT_EQ(err->kind(), ErrorKind::kMissingCamera);
  EXPECT_NE(std::string(err->what()).find("07_99"), std::string::npos);
}

TEST_F(PanopticTree, MissingCalibrationIsDistinct) {
  const fs::path root = Copy("no_calib");
  fs::remove(root / "seq_b" / "calibration_seq_b.json");
  std::unique_ptr<Error> err;
  ASSERT_NE(Capture([&] { IngestPanoptic(layout_.Options(root)); }, err), nullptr);
  EXPECT_EQ(err->kind(), ErrorKind::kMissingCalibration);
}

TEST_F(PanopticTree, MissingCameraDirectoryIsMissingFrames) {
  const fs::path root = Copy("no_view");
  fs::remove_all(root / "seq_a" / "hdImgs" / "00_07");
  std::unique_ptr<Error> err;
  ASSERT_NE(Capture([&] { IngestPanoptic(layout_.Options(root)); }, err), nullptr);
  EXPECT_EQ(err->kind(), ErrorKind::kMissingFrames);
  EXPECT_NE(std::string(err->what()).find("00_07"), std::string::npos);
}

TEST_F(PanopticTree, FrameMissingInOneViewIsDroppedAndCounted) {
  const fs::path root = Copy("gap");
  fs::remove(root / "seq_a" / "hdImgs" / "00_07" /
             ("00_07_" + testing::PanopticLayout::Frame(layout_.first_frame + 2) + ".jpg"));
  IngestReport report;
  const DatasetManifest m = IngestPanoptic(layout_.Options(root), &report);
  EXPECT_EQ(m.samples[0].size(), size_t(layout_.frames - 1));
  EXPECT_EQ(report.persons[0].dropped_missing_view.at("00_07"), 1);
  EXPECT_EQ(m.samples[1].size(), size_t(layout_.frames));
  for (const SampleRecord& r : m.samples[0]) EXPECT_NE(r.t, layout_.first_frame + 2);
  EXPECT_EQ(m.info.at("report").at("persons")[0].at("dropped_missing_view").at("00_07"), 1);
}

TEST_F(PanopticTree, MalformedSkeletonIsDistinct) {
  const fs::path root = Copy("bad_json");
  std::ofstream(root / "seq_a" / "hdPose3d_stage1_coco19" /
                ("body3DScene_" + testing::PanopticLayout::Frame(layout_.first_frame + 1) + ".json"))
      << "{\"bodies\": [{\"id\": 0, \"joints19\": [1, 2, 3";
  std::unique_ptr<Error> err;
  ASSERT_NE(Capture([&] { IngestPanoptic(layout_.Options(root)); }, err), nullptr);
  EXPECT_EQ(err->kind(), ErrorKind::kMalformedSkeleton);

  const fs::path arity = Copy("bad_arity");
  testing::PanopticLayout::WriteJson(
      arity / "seq_a" / "hdPose3d_stage1_coco19" /
          ("body3DScene_" + testing::PanopticLayout::Frame(layout_.first_frame) + ".json"),
      {{"bodies", {{{"id", 0}, {"joints19", std::vector<double>(57, 1.0)}}}}});
  ASSERT_NE(Capture([&] { IngestPanoptic(layout_.Options(arity)); }, err), nullptr);
  EXPECT_EQ(err->kind(), ErrorKind::kMalformedSkeleton);
}

TEST_F(PanopticTree, AbsentBodyIsDroppedAndDifferentCalibrationsAreRejected) {
  auto options = layout_.Options(dir_->path() / "pristine");
  options.persons[1].body_id = 9;
  std::unique_ptr<Error> err;
  ASSERT_NE(Capture([&] { IngestPanoptic(options); }, err), nullptr);
  EXPECT_EQ(err->kind(), ErrorKind::kMissingFrames);

  const fs::path root = Copy("moved_rig");
  const fs::path calib = root / "seq_b" / "calibration_seq_b.json";
  json j = json::parse(std::ifstream(calib));
  j["cameras"][0]["t"][0][0] = j["cameras"][0]["t"][0][0].get<double>() + 5.0;
  testing::PanopticLayout::WriteJson(calib, j);
  ASSERT_NE(Capture([&] { IngestPanoptic(layout_.Options(root)); }, err), nullptr);
  EXPECT_EQ(err->kind(), ErrorKind::kInvalidConfig);
}

TEST_F(PanopticTree, StrideAndLimitSelectFrames) {
  auto options = layout_.Options(dir_->path() / "pristine");
  options.frame_stride = 3;
  options.max_frames = 2;
  const DatasetManifest m = IngestPanoptic(options);
  ASSERT_EQ(m.samples[0].size(), 2u);
  EXPECT_EQ(m.samples[0][0].t, layout_.first_frame);
  EXPECT_EQ(m.samples[0][1].t, layout_.first_frame + 3);
}

TEST(PanopticOptions, JsonRoundTripRejectsUnknownKeys) {
  testing::PanopticLayout layout;
  const PanopticIngestOptions o = layout.Options("/data/panoptic");
  const json j = o;
  const PanopticIngestOptions back = j.get<PanopticIngestOptions>();
  EXPECT_EQ(json(back), j);
  json bad = j;
  bad["camera"] = "00_00";
  std::unique_ptr<Error> err;
  ASSERT_NE(Capture([&] { bad.get<PanopticIngestOptions>(); }, err), nullptr);
  EXPECT_EQ(err->kind(), ErrorKind::kInvalidConfig);
}

}  // namespace
}  // namespace mvpt
