#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>
#include <opencv2/core.hpp>

#include "mvpt/geometry.h"
#include "mvpt/skeleton.h"

namespace mvpt {

enum class Person { kA = 0, kB = 1 };

inline int Index(Person p) { return static_cast<int>(p); }
inline Person Other(Person p) { return p == Person::kA ? Person::kB : Person::kA; }
std::string_view PersonName(Person p);
Person ParsePerson(std::string_view name);

// Affine map from crop pixels to full-frame pixels (both with pixel centers
// at integer coordinates).
struct CropTransform {
  Eigen::Matrix<double, 2, 3> crop_to_frame = Eigen::Matrix<double, 2, 3>::Zero();

  Eigen::Vector2d ToFrame(const Eigen::Vector2d& crop_px) const;
  Eigen::Vector2d ToCrop(const Eigen::Vector2d& frame_px) const;
  bool Invertible() const;
};

struct SampleRecord {
  int t = 0;
  std::vector<std::string> images;  // per view, relative to the image root
  Pose3D gt_pose;
  std::vector<Pose2D> gt_2d;  // per view; empty when not provided
  bool operator==(const SampleRecord& other) const;
};

struct DatasetManifest {
  std::string source = "synthetic";  // "synthetic" | "panoptic"
  std::string units = "cm";
  std::vector<CameraView> cameras;
  std::array<std::string, 2> person_names{"A", "B"};
  std::array<std::vector<SampleRecord>, 2> samples;
  std::array<int, kNumJoints> skeleton_parent = Skeleton::Coco17().parent();
  // Directory images are resolved against; relative paths are relative to
  // the manifest directory.
  std::string image_root = ".";
  nlohmann::json info = nlohmann::json::object();  // provenance (config, report)

  bool operator==(const DatasetManifest& other) const;
};

// Throws kInvalidConfig / kMissingCamera on structural problems.
void ValidateManifest(const DatasetManifest& manifest);

// Layout: <dir>/manifest.json plus <dir>/poses/<person>.jsonl with one
// sample record per line.
void WriteManifest(const DatasetManifest& manifest, const std::filesystem::path& dir);
DatasetManifest ReadManifest(const std::filesystem::path& dir);

struct CropOptions {
  int resolution = 64;
  double margin = 1.2;  // crop side relative to the larger GT-2D bbox side
};

// Square crop around the GT 2D bounding box, moved horizontally by `shift_px`
// full-frame pixels.
CropTransform PersonCrop(const Pose3D& gt_pose, const CameraView& camera,
                         const CropOptions& options, double shift_px = 0.0);

// Largest |shift| that keeps the GT 2D bounding box inside the crop.
double MaxHorizontalShift(const Pose3D& gt_pose, const CameraView& camera,
                          const CropOptions& options);

// Resamples the crop (anti-aliased when shrinking). Pixels outside the frame
// replicate the border.
cv::Mat ExtractCrop(const cv::Mat& frame, const CropTransform& crop, int resolution);

struct MultiViewSample {
  int index = 0;  // position in the person's sample list
  int t = 0;
  Person person = Person::kA;
  std::vector<cv::Mat> images;  // BGR8 crops, one per view
  Pose3D gt_pose;
  std::vector<CropTransform> crops;
};

// Read-only view over a manifest with a decoded-frame cache. Safe for
// concurrent readers.
class Dataset {
 public:
  Dataset(DatasetManifest manifest, std::filesystem::path dir);
  static Dataset Open(const std::filesystem::path& dir);

  const DatasetManifest& manifest() const { return manifest_; }
  const std::vector<CameraView>& cameras() const { return manifest_.cameras; }
  const std::filesystem::path& dir() const { return dir_; }
  int NumSamples(Person p) const;
  const SampleRecord& Record(Person p, int index) const;
  cv::Mat FrameImage(Person p, int index, int view) const;

 private:
  struct Cache;
  DatasetManifest manifest_;
  std::filesystem::path dir_;
  std::filesystem::path image_root_;
  std::shared_ptr<Cache> cache_;
};

// Loads the per-view person crops for one frame. With `augment`, each view's
// crop window is shifted horizontally by an independent uniform amount within
// MaxHorizontalShift; the crop transform carries the shift.
MultiViewSample SampleBatch(const Dataset& dataset, Person person, int index,
                            bool augment, std::mt19937_64& rng,
                            const CropOptions& options);

struct Split {
  std::vector<int> train;
  std::vector<int> heldout;
};

// Temporal split: the last ceil(fraction * n) samples are held out.
Split SplitIndices(int n, double heldout_fraction);

// Mean bone lengths of a person over the given samples.
LimbProfile PersonLimbProfile(const Dataset& dataset, Person person,
                              std::span<const int> indices, const Skeleton& skeleton);

}  // namespace mvpt
