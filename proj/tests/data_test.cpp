#include <cmath>
#include <memory>

#include <gtest/gtest.h>
#include <opencv2/core.hpp>

#include "mvpt/dataset.h"
#include "mvpt/error.h"
#include "mvpt/hash.h"
#include "mvpt/synth.h"
#include "temp_dir.h"

namespace mvpt {
namespace {

using testing::TempDir;

// Intensity-weighted centroid of the first channel.
Eigen::Vector2d Centroid(const cv::Mat& image) {
  double sum = 0.0, sx = 0.0, sy = 0.0;
  for (int y = 0; y < image.rows; ++y) {
    for (int x = 0; x < image.cols; ++x) {
      const double w = image.at<cv::Vec3b>(y, x)[0];
      sum += w;
      sx += w * x;
      sy += w * y;
    }
  }
  return {sx / sum, sy / sum};
}

SynthConfig SmallConfig(int frames) {
  SynthConfig config;
  config.num_frames = frames;
  return config;
}

class SynthDatasetTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = std::make_unique<TempDir>("mvpt_synth");
    manifest_ = std::make_unique<DatasetManifest>(SynthScene(SmallConfig(12), 11, dir_->path()));
  }
  static void TearDownTestSuite() {
    manifest_.reset();
    dir_.reset();
  }
  static Dataset Open() { return Dataset::Open(dir_->path()); }

  static std::unique_ptr<TempDir> dir_;
  static std::unique_ptr<DatasetManifest> manifest_;
};
std::unique_ptr<TempDir> SynthDatasetTest::dir_;
std::unique_ptr<DatasetManifest> SynthDatasetTest::manifest_;

TEST_F(SynthDatasetTest, SameSeedGivesByteIdenticalDataset) {
  TempDir again("mvpt_synth_again");
  SynthScene(SmallConfig(12), 11, again.path());
  EXPECT_EQ(HashDirectory(dir_->path()), HashDirectory(again.path()));

  TempDir other("mvpt_synth_other");
  SynthScene(SmallConfig(12), 12, other.path());
  EXPECT_NE(HashDirectory(dir_->path()), HashDirectory(other.path()));
}

TEST_F(SynthDatasetTest, ManifestRoundTrip) {
  const DatasetManifest read = ReadManifest(dir_->path());
  EXPECT_TRUE(read == *manifest_);
  EXPECT_EQ(read.source, "synthetic");
  EXPECT_EQ(read.units, "cm");
  ASSERT_EQ(read.cameras.size(), 2u);
  EXPECT_EQ(read.samples[0].size(), 12u);
  EXPECT_EQ(read.samples[1].size(), 12u);
}

TEST_F(SynthDatasetTest, StoredPose2DIsTheProjection) {
  for (int p = 0; p < 2; ++p) {
    for (const SampleRecord& r : manifest_->samples[p]) {
      ASSERT_EQ(r.gt_2d.size(), manifest_->cameras.size());
      for (size_t v = 0; v < manifest_->cameras.size(); ++v) {
        const Pose2D expected = Project(r.gt_pose, manifest_->cameras[v]);
        EXPECT_EQ(r.gt_2d[v].points, expected.points);
      }
    }
  }
}

TEST_F(SynthDatasetTest, RasterizedJointsMatchProjection) {
  double worst = 0.0;
  for (int p = 0; p < 2; ++p) {
    for (const SampleRecord& r : manifest_->samples[p]) {
      for (size_t v = 0; v < manifest_->cameras.size(); ++v) {
        const CameraView& camera = manifest_->cameras[v];
        for (int j = 0; j < kNumJoints; ++j) {
          const Eigen::Vector2d expected = r.gt_2d[v].points.row(j).transpose();
          const cv::Mat marker = RenderJointMarker(r.gt_pose, camera, j, 3.0);
          worst = std::max(worst, (Centroid(marker) - expected).norm());
        }
      }
    }
  }
  EXPECT_LE(worst, 0.5);
}

TEST_F(SynthDatasetTest, EveryJointIsInsideTheFrame) {
  for (int p = 0; p < 2; ++p) {
    for (const SampleRecord& r : manifest_->samples[p]) {
      for (size_t v = 0; v < manifest_->cameras.size(); ++v) {
        const CameraView& c = manifest_->cameras[v];
        for (int j = 0; j < kNumJoints; ++j) {
          const double x = r.gt_2d[v].points(j, 0), y = r.gt_2d[v].points(j, 1);
          EXPECT_TRUE(x > 0 && y > 0 && x < c.width - 1 && y < c.height - 1);
        }
      }
    }
  }
}

TEST_F(SynthDatasetTest, SampleWithoutAugmentationIsDeterministic) {
  const Dataset dataset = Open();
  std::mt19937_64 rng_a(1), rng_b(2);
  const MultiViewSample a = SampleBatch(dataset, Person::kB, 3, false, rng_a, CropOptions{});
  const MultiViewSample b = SampleBatch(dataset, Person::kB, 3, false, rng_b, CropOptions{});
  ASSERT_EQ(a.images.size(), 2u);
  for (size_t v = 0; v < a.images.size(); ++v) {
    EXPECT_EQ(a.images[v].rows, 64);
    EXPECT_EQ(a.images[v].type(), CV_8UC3);
    EXPECT_EQ(cv::norm(a.images[v], b.images[v], cv::NORM_INF), 0.0);
    EXPECT_EQ(a.crops[v].crop_to_frame, b.crops[v].crop_to_frame);
    EXPECT_TRUE(a.crops[v].Invertible());
  }
}

TEST_F(SynthDatasetTest, AugmentedCropStaysOnRenderedJoints) {
  const Dataset dataset = Open();
  std::mt19937_64 rng(5);
  const CropOptions options;
  double worst = 0.0;
  for (int index = 0; index < dataset.NumSamples(Person::kA); index += 3) {
    const MultiViewSample s = SampleBatch(dataset, Person::kA, index, true, rng, options);
    EXPECT_EQ(s.gt_pose.joints, dataset.Record(Person::kA, index).gt_pose.joints);
    for (size_t v = 0; v < s.crops.size(); ++v) {
      const CameraView& camera = dataset.cameras()[v];
      for (const int j : {0, 9, 10, 15, 16}) {
        const cv::Mat marker = RenderJointMarker(s.gt_pose, camera, j, 8.0);
        const cv::Mat crop = ExtractCrop(marker, s.crops[v], options.resolution);
        const Eigen::Vector2d expected = s.crops[v].ToCrop(
            ProjectPoint(camera.projection, s.gt_pose.joints.row(j).transpose()));
        worst = std::max(worst, (Centroid(crop) - expected).norm());
      }
    }
  }
  EXPECT_LE(worst, 0.5);
}

TEST_F(SynthDatasetTest, ShiftNeverCropsTheBody) {
  const Dataset dataset = Open();
  const CropOptions options;
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> pick(0, dataset.NumSamples(Person::kA) - 1);
  int draws = 0;
  double max_shift_seen = 0.0;
  for (; draws < 10000; ++draws) {
    const Person person = draws % 2 ? Person::kB : Person::kA;
    const int index = pick(rng);
    const SampleRecord& record = dataset.Record(person, index);
    const MultiViewSample s = SampleBatch(dataset, person, index, true, rng, options);
    for (size_t v = 0; v < s.crops.size(); ++v) {
      const CropTransform centered =
          PersonCrop(record.gt_pose, dataset.cameras()[v], options, 0.0);
      // Only the horizontal offset may change.
      EXPECT_EQ(s.crops[v].crop_to_frame.leftCols<2>(), centered.crop_to_frame.leftCols<2>());
      EXPECT_EQ(s.crops[v].crop_to_frame(1, 2), centered.crop_to_frame(1, 2));
      max_shift_seen = std::max(
          max_shift_seen, std::abs(s.crops[v].crop_to_frame(0, 2) - centered.crop_to_frame(0, 2)));
      for (int j = 0; j < kNumJoints; ++j) {
        const Eigen::Vector2d u = s.crops[v].ToCrop(record.gt_2d[v].points.row(j).transpose());
        ASSERT_GE(u.x(), -0.5);
        ASSERT_LE(u.x(), options.resolution - 0.5);
        ASSERT_GE(u.y(), -0.5);
        ASSERT_LE(u.y(), options.resolution - 0.5);
      }
    }
  }
  EXPECT_EQ(draws, 10000);
  EXPECT_GT(max_shift_seen, 1.0);
}

TEST_F(SynthDatasetTest, OutOfRangeIndexIsRejected) {
  const Dataset dataset = Open();
  std::mt19937_64 rng(0);
  try {
    SampleBatch(dataset, Person::kA, 12, false, rng, CropOptions{});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kOutOfRange);
  }
  EXPECT_THROW(dataset.Record(Person::kB, -1), Error);
}

TEST(CropTest, TransformRoundTripsAndCentersTheBox) {
  SynthConfig config;
  const auto rig = MakeRig(config, 3);
  const Pose3D pose = BuildBodyPose(BodyShape{}, BodyPoseParams{});
  const CropOptions options;
  const CropTransform crop = PersonCrop(pose, rig[0], options, 0.0);
  const Eigen::Vector2d x(12.25, -3.5);
  EXPECT_LT((crop.ToCrop(crop.ToFrame(x)) - x).norm(), 1e-12);

  // The crop window's continuous extent is [-0.5, R - 0.5]; the bbox is
  // centered in it.
  const Pose2D p = Project(pose, rig[0]);
  const Eigen::Vector2d lo = p.points.colwise().minCoeff().transpose();
  const Eigen::Vector2d hi = p.points.colwise().maxCoeff().transpose();
  const Eigen::Vector2d center = crop.ToCrop(0.5 * (lo + hi));
  EXPECT_NEAR(center.x(), 0.5 * (options.resolution - 1), 1e-9);
  EXPECT_NEAR(center.y(), 0.5 * (options.resolution - 1), 1e-9);
  const double span = std::max(hi.x() - lo.x(), hi.y() - lo.y());
  EXPECT_NEAR(crop.crop_to_frame(0, 0), options.margin * span / options.resolution, 1e-12);
  EXPECT_NEAR(MaxHorizontalShift(pose, rig[0], options),
              0.5 * (options.margin * span - (hi.x() - lo.x())), 1e-9);
}

TEST(CropTest, ExtractCropOfIdentityWindowCopiesTheFrame) {
  cv::Mat frame(64, 64, CV_8UC3);
  cv::randu(frame, 0, 255);
  CropTransform identity;
  identity.crop_to_frame << 1, 0, 0, 0, 1, 0;
  EXPECT_EQ(cv::norm(ExtractCrop(frame, identity, 64), frame, cv::NORM_INF), 0.0);
}

TEST(BodyPoseTest, BonesHaveTheShapeLengths) {
  const SynthConfig config;
  const MotionSequence motion(config.motion, 0.0, 4);
  for (const PersonAppearance& person : config.persons) {
    const BodyShape& s = person.shape;
    for (int t = 0; t < 50; t += 7) {
      const Pose3D pose = BuildBodyPose(s, motion.Frame(t));
      auto len = [&](int a, int b) { return (pose.joints.row(a) - pose.joints.row(b)).norm(); };
      for (int side = 0; side < 2; ++side) {
        EXPECT_NEAR(len(5 + side, 7 + side), s.upper_arm, 1e-9);
        EXPECT_NEAR(len(7 + side, 9 + side), s.forearm, 1e-9);
        EXPECT_NEAR(len(11 + side, 13 + side), s.thigh, 1e-9);
        EXPECT_NEAR(len(13 + side, 15 + side), s.shin, 1e-9);
      }
      EXPECT_NEAR(len(5, 6), 2.0 * s.shoulder_half_width, 1e-9);
      EXPECT_NEAR(len(11, 12), 2.0 * s.hip_half_width, 1e-9);
    }
  }
}

TEST(BodyPoseTest, LeftJointsAreOnTheLeftWhenFacingForward) {
  const Pose3D pose = BuildBodyPose(BodyShape{}, BodyPoseParams{});
  // Facing +y with z up, the person's left is -x.
  for (const int left : {1, 3, 5, 7, 9, 11, 13, 15}) {
    EXPECT_LT(pose.joints(left, 0), pose.joints(left + 1, 0));
  }
  EXPECT_GT(pose.joints(0, 2), pose.joints(5, 2));
  EXPECT_GT(pose.joints(11, 2), pose.joints(15, 2));
}

TEST(MotionTest, FrameIsPureAndSeedDependent) {
  const MotionConfig config;
  const MotionSequence a(config, 0.0, 1), a2(config, 0.0, 1), b(config, 0.0, 2);
  EXPECT_EQ(a.Frame(17).arm_elevation, a2.Frame(17).arm_elevation);
  EXPECT_EQ(a.Frame(17).arm_elevation, a.Frame(17).arm_elevation);
  EXPECT_NE(a.Frame(17).arm_elevation, b.Frame(17).arm_elevation);
}

TEST(MotionTest, PersonsShareTheMotionDistribution) {
  // Long-run statistics of two differently seeded sequences agree.
  const MotionConfig config;
  auto stats = [&](uint64_t seed) {
    const MotionSequence m(config, 0.0, seed);
    std::array<double, 4> mean{};
    const int n = 20000;
    for (int t = 0; t < n; ++t) {
      const BodyPoseParams q = m.Frame(t);
      mean[0] += q.heading / n;
      mean[1] += q.arm_elevation[0] / n;
      mean[2] += q.knee_flex[1] / n;
      mean[3] += q.hip_flex[0] / n;
    }
    return mean;
  };
  const auto a = stats(101), b = stats(202);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(a[i], b[i], 0.08) << i;
}

TEST(SynthConfigTest, DefaultPersonsDifferInAppearanceOnly) {
  const SynthConfig config;
  const PersonAppearance& a = config.persons[0];
  const PersonAppearance& b = config.persons[1];
  EXPECT_NE(a.style.left_upper, b.style.left_upper);
  EXPECT_NE(a.style.torso, b.style.torso);
  EXPECT_GT(b.style.limb_radius, a.style.limb_radius);
  EXPECT_NEAR(b.shape.thigh / a.shape.thigh, 1.10, 1e-12);
  EXPECT_NEAR(b.shape.upper_arm / a.shape.upper_arm, 1.08, 1e-12);
  EXPECT_NEAR(b.shape.torso_length / a.shape.torso_length, 0.95, 1e-12);
  EXPECT_NEAR(b.shape.shoulder_half_width / a.shape.shoulder_half_width, 1.15, 1e-12);
}

TEST(SynthConfigTest, JsonRoundTripAndValidation) {
  SynthConfig config;
  config.num_frames = 7;
  config.persons[1].style.limb_radius = 9.0;
  const SynthConfig back = SynthConfigFromJson(SynthConfigToJson(config));
  EXPECT_EQ(SynthConfigToJson(back), SynthConfigToJson(config));

  auto expect_invalid = [](const nlohmann::json& j) {
    try {
      SynthConfigFromJson(j);
      FAIL() << j.dump();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kInvalidConfig) << e.what();
    }
  };
  expect_invalid({{"num_views", 1}});
  expect_invalid({{"num_frame", 10}});
  expect_invalid({{"motion", {{"period", 3}}}});
  expect_invalid({{"persons", nlohmann::json::array()}});

  SynthConfig same = config;
  same.persons[1] = same.persons[0];
  same.persons[1].name = "B";
  EXPECT_THROW(same.Validate(), Error);
}

TEST(SynthConfigTest, FewerThanTwoViewsIsRejected) {
  SynthConfig config;
  config.num_views = 1;
  TempDir dir;
  try {
    SynthScene(config, 0, dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidConfig);
  }
}

TEST(SplitTest, LastFractionIsHeldOut) {
  const Split s = SplitIndices(250, 0.1);
  EXPECT_EQ(s.train.size(), 225u);
  EXPECT_EQ(s.heldout.size(), 25u);
  EXPECT_EQ(s.train.back(), 224);
  EXPECT_EQ(s.heldout.front(), 225);
  EXPECT_EQ(SplitIndices(1, 0.5).train.size(), 1u);
  EXPECT_THROW(SplitIndices(0, 0.1), Error);
}

TEST(ManifestTest, ValidationCatchesMissingPersonAndCamera) {
  DatasetManifest m;
  SynthConfig config;
  m.cameras = MakeRig(config, 0);
  SampleRecord r;
  r.gt_pose = BuildBodyPose(BodyShape{}, BodyPoseParams{});
  r.images = {"a.png", "b.png"};
  m.samples[0] = {r};
  EXPECT_THROW(ValidateManifest(m), Error);
  m.samples[1] = {r};
  EXPECT_NO_THROW(ValidateManifest(m));
  m.samples[1][0].images.pop_back();
  try {
    ValidateManifest(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMissingCamera);
  }
}

}  // namespace
}  // namespace mvpt
