#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mvpt/dataset.h"

namespace mvpt {

// Joint order of the Panoptic 19-keypoint body format.
constexpr int kPanopticJoints = 19;
const std::array<std::string_view, kPanopticJoints>& PanopticJointNames();

// Source index for each COCO-17 joint, matched by name.
const std::array<int, kNumJoints>& PanopticToCocoIndex();

// Selects the 17 COCO joints from a flat joints19 array of 19 * 4 values
// (x, y, z, confidence). A joint is valid when its confidence exceeds
// `min_confidence`. Throws kMalformedSkeleton on the wrong arity.
Pose3D MapPanopticToCoco(std::span<const double> joints19, double min_confidence = 0.0);

// Reads calibration_<sequence>.json. Distortion coefficients are ignored:
// the projection is K [R | t]. Throws kMissingCalibration when the file is
// absent or unreadable and kMissingCamera naming the first unknown id.
std::vector<CameraView> ReadPanopticCameras(const std::filesystem::path& calibration_file,
                                            std::span<const std::string> camera_ids);

struct PanopticPerson {
  std::string sequence;
  int body_id = -1;  // -1 takes the first body of each frame
};

struct PanopticIngestOptions {
  std::filesystem::path root;
  std::vector<std::string> camera_ids;  // at least two
  std::array<PanopticPerson, 2> persons;
  int frame_stride = 1;
  int max_frames = 0;  // per person, 0 keeps all
  double min_confidence = 0.0;
  std::string image_dir = "hdImgs";
  std::string image_ext = ".jpg";
};

void to_json(nlohmann::json& j, const PanopticIngestOptions& o);
void from_json(const nlohmann::json& j, PanopticIngestOptions& o);

struct PanopticPersonReport {
  int skeleton_frames = 0;
  int kept = 0;
  int dropped_no_body = 0;
  int dropped_few_joints = 0;
  std::map<std::string, int> dropped_missing_view;  // by camera id
  long joints_projected = 0;
  long joints_inside = 0;
};

struct IngestReport {
  std::array<PanopticPersonReport, 2> persons;

  // Share of valid GT joints that project inside the image, over all kept
  // samples and views.
  double InsideFraction() const;
};

void to_json(nlohmann::json& j, const PanopticPersonReport& r);
void to_json(nlohmann::json& j, const IngestReport& r);

// Expected layout under `root`, per sequence:
//   <seq>/calibration_<seq>.json
//   <seq>/hdPose3d_stage1_coco19/body3DScene_<frame:08d>.json
//   <seq>/<image_dir>/<cam>/<cam>_<frame:08d><image_ext>
// Frames are paired across views by index. A frame missing in any view is
// dropped and counted. Both sequences must share one calibration for the
// chosen cameras (kInvalidConfig otherwise). Throws kMissingFrames when a
// camera has no frame directory or nothing survives, and kMalformedSkeleton
// on unreadable skeleton files.
DatasetManifest IngestPanoptic(const PanopticIngestOptions& options, IngestReport* report = nullptr);

}  // namespace mvpt
