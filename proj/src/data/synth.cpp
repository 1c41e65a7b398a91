#include "mvpt/synth.h"

#include <cmath>
#include <cstdio>
#include <numbers>

#include <Eigen/Dense>
#include <opencv2/imgcodecs.hpp>

#include "mvpt/error.h"
#include "mvpt/hash.h"
#include "mvpt/geometry_json.h"
#include "mvpt/json_fields.h"

namespace mvpt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

Eigen::Vector3d Perpendicular(const Eigen::Vector3d& d, const Eigen::Vector3d& hint) {
  Eigen::Vector3d n = hint - hint.dot(d) * d;
  if (n.norm() < 1e-6) n = Eigen::Vector3d::UnitZ() - d.z() * d;
  return n.normalized();
}

// Rotates `d` towards `toward` by `angle` within the plane they span.
Eigen::Vector3d Bend(const Eigen::Vector3d& d, const Eigen::Vector3d& toward, double angle) {
  return (std::cos(angle) * d + std::sin(angle) * Perpendicular(d, toward)).normalized();
}

}  // namespace

Pose3D BuildBodyPose(const BodyShape& s, const BodyPoseParams& q) {
  // Local frame: +x right, +y forward, +z up; heading rotates about z.
  const Eigen::Vector3d right = Eigen::Vector3d::UnitX();
  const Eigen::Vector3d fwd = Eigen::Vector3d::UnitY();
  const Eigen::Vector3d up = Eigen::Vector3d::UnitZ();

  Pose3D pose;
  pose.joints.setZero();
  pose.valid.fill(true);
  auto set = [&](int j, const Eigen::Vector3d& x) { pose.joints.row(j) = x.transpose(); };

  const Eigen::Vector3d pelvis(0.0, 0.0, s.thigh + s.shin + s.ankle_height);
  const Eigen::Vector3d torso_up(0.0, std::sin(q.lean), std::cos(q.lean));
  const Eigen::Vector3d chest = pelvis + s.torso_length * torso_up;

  for (int side = 0; side < 2; ++side) {  // 0 = left
    const double sign = side == 0 ? -1.0 : 1.0;
    const Eigen::Vector3d out = sign * right;

    const Eigen::Vector3d shoulder = chest + s.shoulder_half_width * out;
    const Eigen::Vector3d arm_dir =
        (std::cos(q.arm_elevation[side]) * -up +
         std::sin(q.arm_elevation[side]) *
             (std::cos(q.arm_azimuth[side]) * out + std::sin(q.arm_azimuth[side]) * fwd))
            .normalized();
    const Eigen::Vector3d elbow = shoulder + s.upper_arm * arm_dir;
    const Eigen::Vector3d wrist = elbow + s.forearm * Bend(arm_dir, fwd, q.elbow_flex[side]);

    const Eigen::Vector3d hip = pelvis + s.hip_half_width * out;
    const double ab = q.hip_abduction[side];
    const double fl = q.hip_flex[side];
    const Eigen::Vector3d thigh_dir =
        Eigen::Vector3d(sign * std::sin(ab), std::sin(fl) * std::cos(ab),
                        -std::cos(fl) * std::cos(ab))
            .normalized();
    const Eigen::Vector3d knee = hip + s.thigh * thigh_dir;
    const Eigen::Vector3d ankle = knee + s.shin * Bend(thigh_dir, -fwd, q.knee_flex[side]);

    set(5 + side, shoulder);
    set(7 + side, elbow);
    set(9 + side, wrist);
    set(11 + side, hip);
    set(13 + side, knee);
    set(15 + side, ankle);
  }

  const Eigen::Matrix3d head_rot =
      (Eigen::AngleAxisd(q.head_yaw, up) * Eigen::AngleAxisd(q.head_pitch, right) *
       Eigen::AngleAxisd(q.lean, right))
          .toRotationMatrix();
  const Eigen::Vector3d h_r = head_rot * right;
  const Eigen::Vector3d h_f = head_rot * fwd;
  const Eigen::Vector3d h_u = head_rot * up;
  const Eigen::Vector3d head = chest + s.neck_length * torso_up;
  set(0, head + 9.0 * h_f);
  set(1, head + 7.0 * h_f + 3.0 * h_u - 3.5 * h_r);
  set(2, head + 7.0 * h_f + 3.0 * h_u + 3.5 * h_r);
  set(3, head + 1.0 * h_u - 8.5 * h_r);
  set(4, head + 1.0 * h_u + 8.5 * h_r);

  const Eigen::Matrix3d world_rot = Eigen::AngleAxisd(q.heading, up).toRotationMatrix();
  const Eigen::RowVector3d root(q.root_x, q.root_y, 0.0);
  for (int j = 0; j < kNumJoints; ++j) {
    pose.joints.row(j) = (world_rot * pose.joints.row(j).transpose()).transpose() + root;
  }
  return pose;
}

namespace {

// Parameter centers and amplitudes (radians) of the joint-angle waves.
struct AngleRange {
  double center;
  double amplitude;
};
constexpr AngleRange kLean{0.08, 0.12};
constexpr AngleRange kArmElevation{1.2, 1.0};
constexpr AngleRange kArmAzimuth{0.6, 0.9};
constexpr AngleRange kElbowFlex{0.9, 0.8};
constexpr AngleRange kHipFlex{0.3, 0.5};
constexpr AngleRange kHipAbduction{0.12, 0.12};
constexpr AngleRange kKneeFlex{0.55, 0.5};
constexpr AngleRange kHeadYaw{0.0, 0.5};
constexpr AngleRange kHeadPitch{0.0, 0.2};
constexpr int kNumParams = 18;

}  // namespace

MotionSequence::MotionSequence(const MotionConfig& config, double facing, uint64_t seed)
    : config_(config), facing_(facing), seed_(seed) {
  std::mt19937_64 rng(SplitMix64(seed));
  std::uniform_real_distribution<double> period(config.min_period_frames,
                                                config.max_period_frames);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  for (int i = 0; i < 2 * kNumParams; ++i) waves_.push_back({period(rng), phase(rng)});
}

double MotionSequence::Wave01(int index, int t) const {
  const Wave& a = waves_[2 * index];
  const Wave& b = waves_[2 * index + 1];
  return 0.6 * std::sin(2.0 * kPi * t / a.period + a.phase) +
         0.4 * std::sin(2.0 * kPi * t / b.period + b.phase);
}

BodyPoseParams MotionSequence::Frame(int t) const {
  std::mt19937_64 rng(SplitMix64(seed_ ^ SplitMix64(static_cast<uint64_t>(t) + 1)));
  std::normal_distribution<double> jitter(0.0, config_.jitter_deg * kDeg);
  int next = 0;
  auto angle = [&](const AngleRange& r) {
    return r.center + r.amplitude * Wave01(next++, t) + jitter(rng);
  };

  BodyPoseParams q;
  q.heading = facing_ + config_.heading_range_deg * kDeg * Wave01(next++, t);
  q.root_x = config_.root_range_cm * Wave01(next++, t);
  q.root_y = config_.root_range_cm * Wave01(next++, t);
  q.lean = angle(kLean);
  for (int side = 0; side < 2; ++side) {
    q.arm_elevation[side] = angle(kArmElevation);
    q.arm_azimuth[side] = angle(kArmAzimuth);
    q.elbow_flex[side] = std::max(0.0, angle(kElbowFlex));
    q.hip_flex[side] = angle(kHipFlex);
    q.hip_abduction[side] = angle(kHipAbduction);
    q.knee_flex[side] = std::max(0.0, angle(kKneeFlex));
  }
  q.head_yaw = angle(kHeadYaw);
  q.head_pitch = angle(kHeadPitch);
  return q;
}

void to_json(json& j, const Rgb& c) { j = json::array({c.r, c.g, c.b}); }

void from_json(const json& j, Rgb& c) {
  if (!j.is_array() || j.size() != 3) Throw(ErrorKind::kInvalidConfig, "colors are [r, g, b]");
  c.r = j[0].get<uint8_t>();
  c.g = j[1].get<uint8_t>();
  c.b = j[2].get<uint8_t>();
}

std::array<PersonAppearance, 2> SynthConfig::DefaultPersons() {
  PersonAppearance a{"A", BodyShape{}, FigureStyle{}};

  PersonAppearance b{"B", BodyShape{}, FigureStyle{}};
  b.shape.thigh *= 1.10;
  b.shape.shin *= 1.10;
  b.shape.upper_arm *= 1.08;
  b.shape.forearm *= 1.08;
  b.shape.torso_length *= 0.95;
  b.shape.shoulder_half_width *= 1.15;
  b.shape.hip_half_width *= 1.10;
  b.style.left_upper = {40, 110, 220};
  b.style.left_lower = {90, 170, 245};
  b.style.right_upper = {30, 160, 80};
  b.style.right_lower = {130, 225, 150};
  b.style.torso = {20, 140, 160};
  b.style.head = {150, 100, 70};
  b.style.marker = {15, 15, 15};
  b.style.face = {245, 245, 245};
  b.style.limb_radius = 6.0;
  b.style.torso_radius = 7.0;
  b.style.head_radius = 11.0;
  return {a, b};
}

void SynthConfig::Validate() const {
  auto fail = [](const std::string& what) { Throw(ErrorKind::kInvalidConfig, what); };
  if (num_views < 2) fail("synth needs at least 2 views, got " + std::to_string(num_views));
  if (num_frames < 1) fail("num_frames must be positive");
  if (frame_width < 16 || frame_height < 16) fail("frame size must be at least 16 px");
  if (!(focal_px > 0.0)) fail("focal_px must be positive");
  if (!(camera_distance_cm > 100.0)) fail("camera_distance_cm must exceed 100");
  if (!(view_separation_deg > 0.0) || (num_views - 1) * view_separation_deg >= 360.0) {
    fail("view_separation_deg must be positive and keep the rig below a full circle");
  }
  if (!(motion.min_period_frames > 0.0) ||
      motion.max_period_frames < motion.min_period_frames) {
    fail("motion periods must satisfy 0 < min <= max");
  }
  if (motion.heading_range_deg < 0.0 || motion.root_range_cm < 0.0 || motion.jitter_deg < 0.0) {
    fail("motion ranges must be non-negative");
  }
  for (const PersonAppearance& p : persons) {
    if (p.name.empty()) fail("person names must be non-empty");
    const BodyShape& s = p.shape;
    for (const double v : {s.hip_half_width, s.shoulder_half_width, s.torso_length,
                           s.neck_length, s.thigh, s.shin, s.upper_arm, s.forearm}) {
      if (!(v > 0.0)) fail("body dimensions of person " + p.name + " must be positive");
    }
    const FigureStyle& st = p.style;
    for (const double v : {st.limb_radius, st.torso_radius, st.head_radius,
                           st.marker_radius, st.face_radius}) {
      if (!(v > 0.0)) fail("figure radii of person " + p.name + " must be positive");
    }
  }
  if (persons[0].name == persons[1].name) fail("person names must differ");
  const json a = SynthConfigToJson(*this)["persons"][0];
  const json b = SynthConfigToJson(*this)["persons"][1];
  if (a["shape"] == b["shape"] && a["style"] == b["style"]) {
    fail("persons must differ in appearance");
  }
}

namespace {

json ShapeToJson(const BodyShape& s) {
  return {{"hip_half_width", s.hip_half_width}, {"shoulder_half_width", s.shoulder_half_width},
          {"torso_length", s.torso_length},     {"neck_length", s.neck_length},
          {"thigh", s.thigh},                   {"shin", s.shin},
          {"upper_arm", s.upper_arm},           {"forearm", s.forearm},
          {"ankle_height", s.ankle_height}};
}

void ShapeFromJson(const json& j, const std::string& section, BodyShape& s) {
  JsonFields(j, section)
      .Read("hip_half_width", s.hip_half_width)
      .Read("shoulder_half_width", s.shoulder_half_width)
      .Read("torso_length", s.torso_length)
      .Read("neck_length", s.neck_length)
      .Read("thigh", s.thigh)
      .Read("shin", s.shin)
      .Read("upper_arm", s.upper_arm)
      .Read("forearm", s.forearm)
      .Read("ankle_height", s.ankle_height)
      .Finish();
}

json StyleToJson(const FigureStyle& s) {
  return {{"left_upper", json(s.left_upper)},
          {"left_lower", json(s.left_lower)},
          {"right_upper", json(s.right_upper)},
          {"right_lower", json(s.right_lower)},
          {"torso", json(s.torso)},
          {"head", json(s.head)},
          {"marker", json(s.marker)},
          {"face", json(s.face)},
          {"limb_radius", s.limb_radius},
          {"torso_radius", s.torso_radius},
          {"head_radius", s.head_radius},
          {"marker_radius", s.marker_radius},
          {"face_radius", s.face_radius}};
}

void StyleFromJson(const json& j, const std::string& section, FigureStyle& s) {
  JsonFields(j, section)
      .Read("left_upper", s.left_upper)
      .Read("left_lower", s.left_lower)
      .Read("right_upper", s.right_upper)
      .Read("right_lower", s.right_lower)
      .Read("torso", s.torso)
      .Read("head", s.head)
      .Read("marker", s.marker)
      .Read("face", s.face)
      .Read("limb_radius", s.limb_radius)
      .Read("torso_radius", s.torso_radius)
      .Read("head_radius", s.head_radius)
      .Read("marker_radius", s.marker_radius)
      .Read("face_radius", s.face_radius)
      .Finish();
}

}  // namespace

json SynthConfigToJson(const SynthConfig& c) {
  json persons = json::array();
  for (const PersonAppearance& p : c.persons) {
    persons.push_back({{"name", p.name}, {"shape", ShapeToJson(p.shape)},
                       {"style", StyleToJson(p.style)}});
  }
  return {{"num_views", c.num_views},
          {"num_frames", c.num_frames},
          {"frame_width", c.frame_width},
          {"frame_height", c.frame_height},
          {"focal_px", c.focal_px},
          {"camera_distance_cm", c.camera_distance_cm},
          {"camera_height_cm", c.camera_height_cm},
          {"view_separation_deg", c.view_separation_deg},
          {"background", json(c.background)},
          {"motion",
           {{"heading_range_deg", c.motion.heading_range_deg},
            {"root_range_cm", c.motion.root_range_cm},
            {"min_period_frames", c.motion.min_period_frames},
            {"max_period_frames", c.motion.max_period_frames},
            {"jitter_deg", c.motion.jitter_deg}}},
          {"persons", persons}};
}

SynthConfig SynthConfigFromJson(const json& j) {
  SynthConfig c;
  JsonFields(j, "synth")
      .Read("num_views", c.num_views)
      .Read("num_frames", c.num_frames)
      .Read("frame_width", c.frame_width)
      .Read("frame_height", c.frame_height)
      .Read("focal_px", c.focal_px)
      .Read("camera_distance_cm", c.camera_distance_cm)
      .Read("camera_height_cm", c.camera_height_cm)
      .Read("view_separation_deg", c.view_separation_deg)
      .Read("background", c.background)
      .Allow("motion")
      .Allow("persons")
      .Finish();
  if (j.contains("motion")) {
    JsonFields(j["motion"], "synth.motion")
        .Read("heading_range_deg", c.motion.heading_range_deg)
        .Read("root_range_cm", c.motion.root_range_cm)
        .Read("min_period_frames", c.motion.min_period_frames)
        .Read("max_period_frames", c.motion.max_period_frames)
        .Read("jitter_deg", c.motion.jitter_deg)
        .Finish();
  }
  if (j.contains("persons")) {
    const json& persons = j["persons"];
    if (!persons.is_array() || persons.size() != 2) {
      Throw(ErrorKind::kInvalidConfig, "synth.persons must list exactly two persons");
    }
    for (int p = 0; p < 2; ++p) {
      const std::string section = "synth.persons[" + std::to_string(p) + "]";
      PersonAppearance& person = c.persons[p];
      JsonFields(persons[p], section)
          .Read("name", person.name)
          .Allow("shape")
          .Allow("style")
          .Finish();
      if (persons[p].contains("shape")) {
        ShapeFromJson(persons[p]["shape"], section + ".shape", person.shape);
      }
      if (persons[p].contains("style")) {
        StyleFromJson(persons[p]["style"], section + ".style", person.style);
      }
    }
  }
  c.Validate();
  return c;
}

std::vector<CameraView> MakeRig(const SynthConfig& config, uint64_t seed) {
  config.Validate();
  std::mt19937_64 rng(SplitMix64(seed ^ 0x5eedc0ffeeULL));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const Eigen::Vector3d target(0.0, 0.0, 95.0);
  const double cx = 0.5 * (config.frame_width - 1);
  const double cy = 0.5 * (config.frame_height - 1);
  std::vector<CameraView> rig;
  for (int v = 0; v < config.num_views; ++v) {
    // The rig faces the persons' forward (+y) direction; small seeded
    // placement jitter keeps cameras from being exactly symmetric.
    const double azimuth =
        ((v - 0.5 * (config.num_views - 1)) * config.view_separation_deg + 2.0 * unit(rng)) *
        kDeg;
    const double distance = config.camera_distance_cm + 10.0 * unit(rng);
    const Eigen::Vector3d eye(distance * std::sin(azimuth), distance * std::cos(azimuth),
                              config.camera_height_cm + 5.0 * unit(rng));
    const Eigen::Vector3d forward = (target - eye).normalized();
    const Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ()).normalized();
    const Eigen::Vector3d down = forward.cross(right);
    Eigen::Matrix3d R;
    R.row(0) = right.transpose();
    R.row(1) = down.transpose();
    R.row(2) = forward.transpose();
    Eigen::Matrix3d K;
    K << config.focal_px, 0.0, cx, 0.0, config.focal_px, cy, 0.0, 0.0, 1.0;
    rig.push_back(CameraView::FromKRt("cam" + std::to_string(v), K, R, -R * eye,
                                      config.frame_width, config.frame_height));
  }
  return rig;
}

DatasetManifest SynthScene(const SynthConfig& config, uint64_t seed, const fs::path& out_dir) {
  config.Validate();
  DatasetManifest manifest;
  manifest.source = "synthetic";
  manifest.cameras = MakeRig(config, seed);
  manifest.image_root = ".";
  manifest.info = {{"generator", "synth"}, {"seed", seed}, {"config", SynthConfigToJson(config)}};
  const std::vector<int> png_params = {cv::IMWRITE_PNG_COMPRESSION, 3};

  for (int p = 0; p < 2; ++p) {
    const PersonAppearance& person = config.persons[p];
    manifest.person_names[p] = person.name;
    const MotionSequence motion(config.motion, 0.0, SplitMix64(seed + 1 + p));
    for (const CameraView& camera : manifest.cameras) {
      fs::create_directories(out_dir / "images" / person.name / camera.view_id);
    }
    for (int t = 0; t < config.num_frames; ++t) {
      SampleRecord record;
      record.t = t;
      record.gt_pose = BuildBodyPose(person.shape, motion.Frame(t));
      for (const CameraView& camera : manifest.cameras) {
        char name[32];
        std::snprintf(name, sizeof(name), "%05d.png", t);
        const std::string rel = "images/" + person.name + "/" + camera.view_id + "/" + name;
        const cv::Mat image =
            RenderFigure(record.gt_pose, camera, person.style, config.background);
        if (!cv::imwrite((out_dir / rel).string(), image, png_params)) {
          Throw(ErrorKind::kIo, "cannot write " + (out_dir / rel).string());
        }
        record.images.push_back(rel);
        record.gt_2d.push_back(Project(record.gt_pose, camera));
      }
      manifest.samples[p].push_back(std::move(record));
    }
  }
  WriteManifest(manifest, out_dir);
  return manifest;
}

}  // namespace mvpt
