#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvpt/dataset.h"
#include "mvpt/geometry.h"
#include "mvpt/render.h"

namespace mvpt {

// Body proportions of a synthetic person, in cm.
struct BodyShape {
  double hip_half_width = 11.0;
  double shoulder_half_width = 18.0;
  double torso_length = 52.0;
  double neck_length = 24.0;
  double thigh = 44.0;
  double shin = 42.0;
  double upper_arm = 30.0;
  double forearm = 27.0;
  double ankle_height = 6.0;
};

// One frame of the shared motion distribution. Angles in radians.
struct BodyPoseParams {
  double heading = 0.0;      // rotation about the vertical axis
  double root_x = 0.0;
  double root_y = 0.0;
  double lean = 0.0;         // torso forward lean
  std::array<double, 2> arm_elevation{};  // from hanging down; [left, right]
  std::array<double, 2> arm_azimuth{};    // 0 = sideways, +pi/2 = forward
  std::array<double, 2> elbow_flex{};
  std::array<double, 2> hip_flex{};
  std::array<double, 2> hip_abduction{};
  std::array<double, 2> knee_flex{};
  double head_yaw = 0.0;
  double head_pitch = 0.0;
};

// Forward kinematics of the figure: COCO-17 joints in world cm, z up.
Pose3D BuildBodyPose(const BodyShape& shape, const BodyPoseParams& params);

struct MotionConfig {
  double heading_range_deg = 60.0;  // about the direction facing the rig
  double root_range_cm = 25.0;
  double min_period_frames = 40.0;
  double max_period_frames = 120.0;
  double jitter_deg = 2.0;
};

// Smooth random trajectory through the motion distribution. Every person is
// driven by an instance of this with the same config and a different seed.
class MotionSequence {
 public:
  MotionSequence(const MotionConfig& config, double facing, uint64_t seed);

  // Pure in t: jitter is drawn from a per-frame stream.
  BodyPoseParams Frame(int t) const;

 private:
  struct Wave {
    double period;
    double phase;
  };
  double Wave01(int index, int t) const;  // in [-1, 1]

  MotionConfig config_;
  double facing_;
  std::vector<Wave> waves_;
  uint64_t seed_;
};

struct PersonAppearance {
  std::string name;
  BodyShape shape;
  FigureStyle style;
};

struct SynthConfig {
  int num_views = 2;
  int num_frames = 250;  // per person
  int frame_width = 160;
  int frame_height = 160;
  double focal_px = 200.0;
  double camera_distance_cm = 450.0;
  double camera_height_cm = 110.0;
  double view_separation_deg = 90.0;
  Rgb background{70, 70, 70};
  MotionConfig motion;
  std::array<PersonAppearance, 2> persons = DefaultPersons();

  static std::array<PersonAppearance, 2> DefaultPersons();
  // Throws kInvalidConfig naming the violated constraint.
  void Validate() const;
};

nlohmann::json SynthConfigToJson(const SynthConfig& config);
// Applies the keys present in `j` over the defaults; unknown keys are
// rejected with kInvalidConfig.
SynthConfig SynthConfigFromJson(const nlohmann::json& j);

std::vector<CameraView> MakeRig(const SynthConfig& config, uint64_t seed);

// Renders both persons from every camera and writes manifest.json, images/
// and poses/ under `out_dir`. Deterministic in (config, seed).
DatasetManifest SynthScene(const SynthConfig& config, uint64_t seed,
                           const std::filesystem::path& out_dir);

}  // namespace mvpt
