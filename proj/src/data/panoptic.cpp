#include "mvpt/panoptic.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <regex>

#include <Eigen/Geometry>

#include "mvpt/error.h"
#include "mvpt/json_fields.h"

namespace mvpt {

namespace fs = std::filesystem;
using nlohmann::json;

const std::array<std::string_view, kPanopticJoints>& PanopticJointNames() {
  static const std::array<std::string_view, kPanopticJoints> names = {
      "neck",  "nose",    "body_center", "l_shoulder", "l_elbow",    "l_wrist", "l_hip",
      "l_knee", "l_ankle", "r_shoulder", "r_elbow",    "r_wrist",    "r_hip",   "r_knee",
      "r_ankle", "l_eye",  "l_ear",      "r_eye",      "r_ear"};
  return names;
}

const std::array<int, kNumJoints>& PanopticToCocoIndex() {
  static const std::array<int, kNumJoints> table = [] {
    std::array<int, kNumJoints> out{};
    const auto& source = PanopticJointNames();
    for (int j = 0; j < kNumJoints; ++j) {
      const auto it = std::find(source.begin(), source.end(), CocoJointNames()[j]);
      if (it == source.end()) {
        Throw(ErrorKind::kMalformedSkeleton,
              "no Panoptic joint named " + std::string(CocoJointNames()[j]));
      }
      out[j] = static_cast<int>(it - source.begin());
    }
    return out;
  }();
  return table;
}

Pose3D MapPanopticToCoco(std::span<const double> joints19, double min_confidence) {
  if (joints19.size() != 4 * kPanopticJoints) {
    Throw(ErrorKind::kMalformedSkeleton, "joints19 must hold 76 values, got " +
                                             std::to_string(joints19.size()));
  }
  Pose3D pose;
  for (int j = 0; j < kNumJoints; ++j) {
    const size_t s = 4 * static_cast<size_t>(PanopticToCocoIndex()[j]);
    pose.joints.row(j) << joints19[s], joints19[s + 1], joints19[s + 2];
    pose.valid[j] = joints19[s + 3] > min_confidence && pose.joints.row(j).allFinite();
  }
  return pose;
}

namespace {

json ReadJsonFile(const fs::path& file, ErrorKind kind, const std::string& what) {
  std::ifstream in(file);
  if (!in) Throw(kind, what + " not found: " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    Throw(kind, what + " is not valid JSON: " + file.string() + ": " + e.what());
  }
}

template <int R, int C>
Eigen::Matrix<double, R, C> ReadMatrix(const json& j, const std::string& name) {
  Eigen::Matrix<double, R, C> m;
  if (!j.is_array() || j.size() != R) Throw(ErrorKind::kMissingCalibration, name + " has the wrong shape");
  for (int r = 0; r < R; ++r) {
    const json& row = j[r];
    if (!row.is_array() || row.size() != C) {
      Throw(ErrorKind::kMissingCalibration, name + " has the wrong shape");
    }
    for (int c = 0; c < C; ++c) m(r, c) = row[c].get<double>();
  }
  return m;
}

std::string FrameName(int frame) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08d", frame);
  return buf;
}

// Skeleton files of one sequence, sorted by frame number.
std::vector<std::pair<int, fs::path>> SkeletonFrames(const fs::path& dir) {
  if (!fs::is_directory(dir)) Throw(ErrorKind::kMissingFrames, "no skeleton directory " + dir.string());
  static const std::regex pattern(R"(body3DScene_(\d+)\.json)");
  std::vector<std::pair<int, fs::path>> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) out.emplace_back(std::stoi(m[1]), entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// The chosen body's joints19, or empty when it is not in the frame.
std::vector<double> BodyJoints(const json& scene, int body_id, const fs::path& file) {
  if (!scene.is_object() || !scene.contains("bodies") || !scene["bodies"].is_array()) {
    Throw(ErrorKind::kMalformedSkeleton, "missing 'bodies' array in " + file.string());
  }
  for (const json& body : scene["bodies"]) {
    if (!body.is_object() || !body.contains("joints19")) {
      Throw(ErrorKind::kMalformedSkeleton, "body without 'joints19' in " + file.string());
    }
    if (body_id >= 0 && body.value("id", -1) != body_id) continue;
    try {
      return body["joints19"].get<std::vector<double>>();
    } catch (const json::exception&) {
      Throw(ErrorKind::kMalformedSkeleton, "non-numeric joints19 in " + file.string());
    }
  }
  return {};
}

bool SameCameras(const std::vector<CameraView>& a, const std::vector<CameraView>& b) {
  for (size_t v = 0; v < a.size(); ++v) {
    const double scale = a[v].projection.cwiseAbs().maxCoeff();
    if (a[v].width != b[v].width || a[v].height != b[v].height ||
        (a[v].projection - b[v].projection).cwiseAbs().maxCoeff() > 1e-9 * scale) {
      return false;
    }
  }
  return true;
}

}  // namespace

std::vector<CameraView> ReadPanopticCameras(const fs::path& calibration_file,
                                            std::span<const std::string> camera_ids) {
  const json calib = ReadJsonFile(calibration_file, ErrorKind::kMissingCalibration, "calibration");
  if (!calib.contains("cameras") || !calib["cameras"].is_array()) {
    Throw(ErrorKind::kMissingCalibration, "no 'cameras' array in " + calibration_file.string());
  }
  std::vector<CameraView> out;
  for (const std::string& id : camera_ids) {
    const auto& cams = calib["cameras"];
    const auto it = std::find_if(cams.begin(), cams.end(),
                                 [&](const json& c) { return c.value("name", "") == id; });
    if (it == cams.end()) {
      Throw(ErrorKind::kMissingCamera,
            "camera '" + id + "' is not in " + calibration_file.filename().string());
    }
    try {
      const json& c = *it;
      const auto K = ReadMatrix<3, 3>(c.at("K"), id + ".K");
      const auto R = ReadMatrix<3, 3>(c.at("R"), id + ".R");
      const auto t = ReadMatrix<3, 1>(c.at("t"), id + ".t");
      const auto res = c.at("resolution").get<std::array<int, 2>>();
      CameraView view = CameraView::FromKRt(id, K, R, t, res[0], res[1]);
      ValidateCamera(view);
      out.push_back(std::move(view));
    } catch (const json::exception& e) {
      Throw(ErrorKind::kMissingCalibration, "camera '" + id + "': " + e.what());
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kMissingCalibration) throw;
      Throw(ErrorKind::kMissingCalibration, "camera '" + id + "': " + e.what());
    }
  }
  return out;
}

void to_json(json& j, const PanopticIngestOptions& o) {
  json persons = json::array();
  for (const auto& p : o.persons) persons.push_back({{"sequence", p.sequence}, {"body_id", p.body_id}});
  j = {{"root", o.root.string()},         {"camera_ids", o.camera_ids},
       {"persons", persons},              {"frame_stride", o.frame_stride},
       {"max_frames", o.max_frames},      {"min_confidence", o.min_confidence},
       {"image_dir", o.image_dir},        {"image_ext", o.image_ext}};
}

void from_json(const json& j, PanopticIngestOptions& o) {
  std::string root = o.root.string();
  json persons;
  JsonFields f(j, "ingest");
  f.Read("root", root)
      .Read("camera_ids", o.camera_ids)
      .Read("persons", persons)
      .Read("frame_stride", o.frame_stride)
      .Read("max_frames", o.max_frames)
      .Read("min_confidence", o.min_confidence)
      .Read("image_dir", o.image_dir)
      .Read("image_ext", o.image_ext)
      .Finish();
  o.root = root;
  if (!persons.is_null()) {
    if (!persons.is_array() || persons.size() != 2) {
      Throw(ErrorKind::kInvalidConfig, "ingest.persons must list two persons");
    }
    for (size_t i = 0; i < 2; ++i) {
      JsonFields p(persons[i], "ingest.persons[" + std::to_string(i) + "]");
      p.Read("sequence", o.persons[i].sequence).Read("body_id", o.persons[i].body_id).Finish();
    }
  }
}

double IngestReport::InsideFraction() const {
  long projected = 0, inside = 0;
  for (const auto& p : persons) {
    projected += p.joints_projected;
    inside += p.joints_inside;
  }
  return projected == 0 ? 0.0 : static_cast<double>(inside) / static_cast<double>(projected);
}

void to_json(json& j, const PanopticPersonReport& r) {
  j = {{"skeleton_frames", r.skeleton_frames},   {"kept", r.kept},
       {"dropped_no_body", r.dropped_no_body},   {"dropped_few_joints", r.dropped_few_joints},
       {"dropped_missing_view", r.dropped_missing_view},
       {"joints_projected", r.joints_projected}, {"joints_inside", r.joints_inside}};
}

void to_json(json& j, const IngestReport& r) {
  j = {{"persons", r.persons}, {"inside_fraction", r.InsideFraction()}};
}

DatasetManifest IngestPanoptic(const PanopticIngestOptions& options, IngestReport* report) {
  if (options.camera_ids.size() < 2) {
    Throw(ErrorKind::kInvalidConfig, "ingest needs at least two camera ids");
  }
  if (options.frame_stride < 1 || options.max_frames < 0) {
    Throw(ErrorKind::kInvalidConfig, "frame_stride must be >= 1 and max_frames >= 0");
  }
  for (const auto& p : options.persons) {
    if (p.sequence.empty()) Throw(ErrorKind::kInvalidConfig, "ingest person without a sequence");
  }
  const fs::path root = fs::absolute(options.root).lexically_normal();
  const Skeleton skeleton = Skeleton::Coco17();

  DatasetManifest manifest;
  manifest.source = "panoptic";
  manifest.units = "cm";
  manifest.image_root = root.string();
  IngestReport local;

  for (int i = 0; i < 2; ++i) {
    const PanopticPerson& person = options.persons[i];
    const fs::path seq_dir = root / person.sequence;
    const std::vector<CameraView> cameras = ReadPanopticCameras(
        seq_dir / ("calibration_" + person.sequence + ".json"), options.camera_ids);
    if (i == 0) {
      manifest.cameras = cameras;
    } else if (!SameCameras(manifest.cameras, cameras)) {
      Throw(ErrorKind::kInvalidConfig, "sequences " + options.persons[0].sequence + " and " +
                                           person.sequence +
                                           " have different calibrations for the chosen cameras");
    }
    for (const std::string& id : options.camera_ids) {
      const fs::path dir = seq_dir / options.image_dir / id;
      if (!fs::is_directory(dir)) {
        Throw(ErrorKind::kMissingFrames, "no frames for camera '" + id + "': " + dir.string());
      }
    }

    PanopticPersonReport& rep = local.persons[i];
    manifest.person_names[i] =
        person.sequence + (person.body_id >= 0 ? "_body" + std::to_string(person.body_id) : "");
    const auto frames = SkeletonFrames(seq_dir / "hdPose3d_stage1_coco19");
    for (size_t k = 0; k < frames.size(); k += options.frame_stride) {
      if (options.max_frames > 0 && rep.kept >= options.max_frames) break;
      const auto& [frame, file] = frames[k];
      ++rep.skeleton_frames;
      const json scene = ReadJsonFile(file, ErrorKind::kMalformedSkeleton, "skeleton file");
      const std::vector<double> joints19 = BodyJoints(scene, person.body_id, file);
      if (joints19.empty()) {
        ++rep.dropped_no_body;
        continue;
      }
      const Pose3D pose = MapPanopticToCoco(joints19, options.min_confidence);
      if (!pose.valid[skeleton.root()] || pose.NumValid() < 2) {
        ++rep.dropped_few_joints;
        continue;
      }
      SampleRecord record;
      record.t = frame;
      record.gt_pose = pose;
      bool complete = true;
      for (const std::string& id : options.camera_ids) {
        const fs::path rel = fs::path(person.sequence) / options.image_dir / id /
                             (id + "_" + FrameName(frame) + options.image_ext);
        if (!fs::is_regular_file(root / rel)) {
          ++rep.dropped_missing_view[id];
          complete = false;
          break;
        }
        record.images.push_back(rel.generic_string());
      }
      if (!complete) continue;
      for (const CameraView& c : cameras) {
        for (int j = 0; j < kNumJoints; ++j) {
          if (!pose.valid[j]) continue;
          ++rep.joints_projected;
          const Eigen::Vector3d h = c.projection * pose.joints.row(j).transpose().homogeneous();
          if (h(2) <= 0) continue;  // behind the camera
          const double x = h(0) / h(2), y = h(1) / h(2);
          if (x >= 0 && y >= 0 && x <= c.width - 1 && y <= c.height - 1) ++rep.joints_inside;
        }
      }
      manifest.samples[i].push_back(std::move(record));
      ++rep.kept;
    }
    if (manifest.samples[i].empty()) {
      Throw(ErrorKind::kMissingFrames,
            "no synchronized frames with a valid skeleton in sequence " + person.sequence);
    }
  }

  manifest.info = {{"ingest", options}, {"report", local}};
  manifest.info["ingest"]["root"] = root.string();
  ValidateManifest(manifest);
  if (report) *report = local;
  return manifest;
}

}  // namespace mvpt
