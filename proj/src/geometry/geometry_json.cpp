#include "mvpt/geometry_json.h"

#include "mvpt/error.h"

namespace mvpt {

using nlohmann::json;

namespace {

void RequireArray(const json& j, size_t size, const char* what) {
  if (!j.is_array() || j.size() != size) {
    Throw(ErrorKind::kInvalidArgument,
          std::string(what) + " must be an array of " + std::to_string(size));
  }
}

}  // namespace

void to_json(json& j, const CameraView& camera) {
  json P = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) P.push_back(camera.projection(r, c));
  j = json{{"view_id", camera.view_id},
           {"P", P},
           {"width", camera.width},
           {"height", camera.height}};
}

void from_json(const json& j, CameraView& camera) {
  camera.view_id = j.at("view_id").get<std::string>();
  const json& P = j.at("P");
  RequireArray(P, 12, "camera P");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) camera.projection(r, c) = P[4 * r + c].get<double>();
  camera.width = j.at("width").get<int>();
  camera.height = j.at("height").get<int>();
}

void to_json(json& j, const Pose3D& pose) {
  json joints = json::array();
  json valid = json::array();
  for (int k = 0; k < kNumJoints; ++k) {
    joints.push_back({pose.joints(k, 0), pose.joints(k, 1), pose.joints(k, 2)});
    valid.push_back(pose.valid[k]);
  }
  j = json{{"joints", joints}, {"valid", valid}, {"units", "cm"}};
}

void from_json(const json& j, Pose3D& pose) {
  if (j.contains("units") && j.at("units") != "cm") {
    Throw(ErrorKind::kInvalidArgument,
          "pose units must be \"cm\", got " + j.at("units").dump());
  }
  const json& joints = j.at("joints");
  const json& valid = j.at("valid");
  RequireArray(joints, kNumJoints, "pose joints");
  RequireArray(valid, kNumJoints, "pose valid");
  for (int k = 0; k < kNumJoints; ++k) {
    RequireArray(joints[k], 3, "pose joint");
    for (int c = 0; c < 3; ++c) pose.joints(k, c) = joints[k][c].get<double>();
    pose.valid[k] = valid[k].get<bool>();
  }
}

void to_json(json& j, const Pose2D& pose) {
  json points = json::array();
  json confidence = json::array();
  for (int k = 0; k < kNumJoints; ++k) {
    points.push_back({pose.points(k, 0), pose.points(k, 1)});
    confidence.push_back(pose.confidence(k));
  }
  j = json{{"points", points}, {"confidence", confidence}};
}

void from_json(const json& j, Pose2D& pose) {
  const json& points = j.at("points");
  const json& confidence = j.at("confidence");
  RequireArray(points, kNumJoints, "pose2d points");
  RequireArray(confidence, kNumJoints, "pose2d confidence");
  for (int k = 0; k < kNumJoints; ++k) {
    RequireArray(points[k], 2, "pose2d point");
    pose.points(k, 0) = points[k][0].get<double>();
    pose.points(k, 1) = points[k][1].get<double>();
    pose.confidence(k) = confidence[k].get<double>();
  }
}

void to_json(json& j, const LimbProfile& profile) {
  j = json{{"bone_lengths", profile.bone_lengths}, {"units", "cm"}};
}

void from_json(const json& j, LimbProfile& profile) {
  profile.bone_lengths = j.at("bone_lengths").get<std::vector<double>>();
}

}  // namespace mvpt
