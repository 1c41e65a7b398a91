#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "mvpt/panoptic.h"
#include "mvpt/render.h"
#include "mvpt/synth.h"

namespace mvpt::testing {

// Writes a small tree in the Panoptic layout: two sequences filmed by one
// rig, one moving figure each (plus a second body in the second sequence),
// rendered frames per camera and joints19 skeleton files. The neck and body
// center are synthesized as shoulder and hip midpoints.
struct PanopticLayout {
  std::vector<std::string> sequences = {"seq_a", "seq_b"};
  std::vector<std::string> camera_ids = {"00_03", "00_07", "00_12"};
  int frames = 8;
  int first_frame = 120;
  int width = 320;
  int height = 240;
  uint64_t seed = 3;
  int target_body = 2;      // body id of the figure in the second sequence
  int distractor_body = 5;  // extra body in the second sequence

  std::vector<CameraView> Cameras() const {
    SynthConfig config;
    config.num_views = static_cast<int>(camera_ids.size());
    config.frame_width = width;
    config.frame_height = height;
    config.focal_px = 320.0;
    config.camera_distance_cm = 520.0;
    std::vector<CameraView> rig = MakeRig(config, seed);
    for (size_t v = 0; v < rig.size(); ++v) rig[v].view_id = camera_ids[v];
    return rig;
  }

  Pose3D Pose(int sequence, int frame) const {
    const auto persons = SynthConfig::DefaultPersons();
    const MotionSequence motion(MotionConfig{}, 0.0, seed * 31 + sequence);
    return BuildBodyPose(persons[sequence].shape, motion.Frame(frame));
  }

  static std::string Frame(int frame) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%08d", frame);
    return buf;
  }

  static nlohmann::json Joints19(const Pose3D& pose) {
    std::vector<double> out(4 * kPanopticJoints, 0.0);
    const auto& index = PanopticToCocoIndex();
    for (int j = 0; j < kNumJoints; ++j) {
      for (int c = 0; c < 3; ++c) out[4 * index[j] + c] = pose.joints(j, c);
      out[4 * index[j] + 3] = 0.9;
    }
    const Eigen::RowVector3d neck = 0.5 * (pose.joints.row(5) + pose.joints.row(6));
    const Eigen::RowVector3d center = 0.5 * (pose.joints.row(11) + pose.joints.row(12));
    for (int c = 0; c < 3; ++c) {
      out[c] = neck(c);
      out[8 + c] = center(c);
    }
    out[3] = out[11] = 0.9;
    return out;
  }

  static void WriteJson(const std::filesystem::path& file, const nlohmann::json& j) {
    std::ofstream(file) << j.dump(1);
  }

  void Write(const std::filesystem::path& root) const {
    namespace fs = std::filesystem;
    const std::vector<CameraView> cameras = Cameras();
    const auto persons = SynthConfig::DefaultPersons();
    for (size_t s = 0; s < sequences.size(); ++s) {
      const fs::path dir = root / sequences[s];
      fs::create_directories(dir / "hdPose3d_stage1_coco19");
      nlohmann::json cams = nlohmann::json::array();
      // An extra camera that is never requested.
      for (size_t v = 0; v <= cameras.size(); ++v) {
        const CameraView& cam = cameras[v % cameras.size()];
        const CameraDecomposition d = DecomposeProjection(cam.projection);
        nlohmann::json K, R;
        for (int r = 0; r < 3; ++r) {
          K.push_back({d.K(r, 0), d.K(r, 1), d.K(r, 2)});
          R.push_back({d.R(r, 0), d.R(r, 1), d.R(r, 2)});
        }
        cams.push_back({{"name", v < cameras.size() ? cam.view_id : "50_01"},
                        {"type", "hd"},
                        {"resolution", {cam.width, cam.height}},
                        {"panel", 0},
                        {"node", v},
                        {"K", K},
                        {"distCoef", {0.0, 0.0, 0.0, 0.0, 0.0}},
                        {"R", R},
                        {"t", {{d.t(0)}, {d.t(1)}, {d.t(2)}}}});
      }
      WriteJson(dir / ("calibration_" + sequences[s] + ".json"),
                {{"calibDataSource", sequences[s]}, {"cameras", cams}});
      for (const CameraView& cam : cameras) fs::create_directories(dir / "hdImgs" / cam.view_id);

      for (int k = 0; k < frames; ++k) {
        const int frame = first_frame + k;
        const Pose3D pose = Pose(static_cast<int>(s), k);
        nlohmann::json bodies = nlohmann::json::array();
        if (s == 1) {
          Pose3D other = pose;
          other.joints.col(0).array() += 400.0;
          bodies.push_back({{"id", distractor_body}, {"joints19", Joints19(other)}});
        }
        bodies.push_back({{"id", s == 1 ? target_body : 0}, {"joints19", Joints19(pose)}});
        WriteJson(dir / "hdPose3d_stage1_coco19" / ("body3DScene_" + Frame(frame) + ".json"),
                  {{"version", 0.7}, {"univTime", 1000.0 + k}, {"fpsType", "hd_29_97"},
                   {"bodies", bodies}});
        for (const CameraView& cam : cameras) {
          const cv::Mat image = RenderFigure(pose, cam, persons[s].style, Rgb{60, 60, 60});
          cv::imwrite((dir / "hdImgs" / cam.view_id / (cam.view_id + "_" + Frame(frame) + ".jpg"))
                          .string(),
                      image);
        }
      }
    }
  }

  PanopticIngestOptions Options(const std::filesystem::path& root) const {
    PanopticIngestOptions o;
    o.root = root;
    o.camera_ids = {camera_ids[0], camera_ids[1]};
    o.persons = {PanopticPerson{sequences[0], -1}, PanopticPerson{sequences[1], target_body}};
    return o;
  }
};

}  // namespace mvpt::testing
