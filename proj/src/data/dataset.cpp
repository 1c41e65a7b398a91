#include "mvpt/dataset.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <tuple>

#include <Eigen/Dense>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "mvpt/error.h"
#include "mvpt/geometry_json.h"

namespace mvpt {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view PersonName(Person p) { return p == Person::kA ? "A" : "B"; }

Person ParsePerson(std::string_view name) {
  if (name == "A" || name == "a") return Person::kA;
  if (name == "B" || name == "b") return Person::kB;
  Throw(ErrorKind::kInvalidArgument, "person must be A or B, got '" + std::string(name) + "'");
}

Eigen::Vector2d CropTransform::ToFrame(const Eigen::Vector2d& crop_px) const {
  return crop_to_frame.leftCols<2>() * crop_px + crop_to_frame.col(2);
}

Eigen::Vector2d CropTransform::ToCrop(const Eigen::Vector2d& frame_px) const {
  return crop_to_frame.leftCols<2>().inverse() * (frame_px - crop_to_frame.col(2));
}

bool CropTransform::Invertible() const {
  return std::abs(crop_to_frame.leftCols<2>().determinant()) > 1e-12;
}

bool SampleRecord::operator==(const SampleRecord& other) const {
  if (t != other.t || images != other.images) return false;
  if (gt_pose.joints != other.gt_pose.joints || gt_pose.valid != other.gt_pose.valid)
    return false;
  if (gt_2d.size() != other.gt_2d.size()) return false;
  for (size_t v = 0; v < gt_2d.size(); ++v) {
    if (gt_2d[v].points != other.gt_2d[v].points ||
        gt_2d[v].confidence != other.gt_2d[v].confidence)
      return false;
  }
  return true;
}

bool DatasetManifest::operator==(const DatasetManifest& other) const {
  if (source != other.source || units != other.units ||
      person_names != other.person_names || samples != other.samples ||
      skeleton_parent != other.skeleton_parent || image_root != other.image_root ||
      info != other.info || cameras.size() != other.cameras.size())
    return false;
  for (size_t v = 0; v < cameras.size(); ++v) {
    const CameraView& a = cameras[v];
    const CameraView& b = other.cameras[v];
    if (a.view_id != b.view_id || a.projection != b.projection ||
        a.width != b.width || a.height != b.height)
      return false;
  }
  return true;
}

void ValidateManifest(const DatasetManifest& manifest) {
  if (manifest.units != "cm") {
    Throw(ErrorKind::kInvalidConfig, "dataset units must be cm, got " + manifest.units);
  }
  if (manifest.cameras.size() < 2) {
    Throw(ErrorKind::kInvalidConfig, "dataset needs at least 2 views");
  }
  for (const CameraView& camera : manifest.cameras) ValidateCamera(camera);
  Skeleton{manifest.skeleton_parent};
  for (int p = 0; p < 2; ++p) {
    if (manifest.samples[p].empty()) {
      Throw(ErrorKind::kInvalidConfig,
            "person " + manifest.person_names[p] + " has no samples");
    }
    for (const SampleRecord& r : manifest.samples[p]) {
      if (r.images.size() != manifest.cameras.size()) {
        Throw(ErrorKind::kMissingCamera,
              "sample t=" + std::to_string(r.t) + " does not reference every camera");
      }
      if (!r.gt_2d.empty() && r.gt_2d.size() != manifest.cameras.size()) {
        Throw(ErrorKind::kInvalidConfig,
              "sample t=" + std::to_string(r.t) + " has mismatched 2D poses");
      }
    }
  }
}

namespace {

json RecordToJson(const SampleRecord& r) {
  json j = {{"t", r.t}, {"images", r.images}, {"pose3d", r.gt_pose}};
  if (!r.gt_2d.empty()) j["pose2d"] = r.gt_2d;
  return j;
}

SampleRecord RecordFromJson(const json& j) {
  SampleRecord r;
  r.t = j.at("t").get<int>();
  r.images = j.at("images").get<std::vector<std::string>>();
  r.gt_pose = j.at("pose3d").get<Pose3D>();
  if (j.contains("pose2d")) r.gt_2d = j.at("pose2d").get<std::vector<Pose2D>>();
  return r;
}

}  // namespace

void WriteManifest(const DatasetManifest& manifest, const fs::path& dir) {
  fs::create_directories(dir / "poses");
  json persons = json::array();
  for (int p = 0; p < 2; ++p) {
    const std::string file = "poses/" + manifest.person_names[p] + ".jsonl";
    std::ofstream out(dir / file);
    if (!out) Throw(ErrorKind::kIo, "cannot write " + (dir / file).string());
    for (const SampleRecord& r : manifest.samples[p]) out << RecordToJson(r).dump() << '\n';
    persons.push_back({{"name", manifest.person_names[p]},
                       {"poses", file},
                       {"num_samples", manifest.samples[p].size()}});
  }
  std::vector<std::string> joint_names(CocoJointNames().begin(), CocoJointNames().end());
  const json j = {{"source", manifest.source},
                  {"units", manifest.units},
                  {"cameras", manifest.cameras},
                  {"persons", persons},
                  {"joint_names", joint_names},
                  {"skeleton_parent", manifest.skeleton_parent},
                  {"image_root", manifest.image_root},
                  {"info", manifest.info}};
  std::ofstream out(dir / "manifest.json");
  if (!out) Throw(ErrorKind::kIo, "cannot write " + (dir / "manifest.json").string());
  out << j.dump(2) << '\n';
}

DatasetManifest ReadManifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) Throw(ErrorKind::kIo, "cannot read " + (dir / "manifest.json").string());
  DatasetManifest m;
  try {
    const json j = json::parse(in);
    m.source = j.at("source").get<std::string>();
    m.units = j.at("units").get<std::string>();
    m.cameras = j.at("cameras").get<std::vector<CameraView>>();
    m.skeleton_parent = j.at("skeleton_parent").get<std::array<int, kNumJoints>>();
    m.image_root = j.at("image_root").get<std::string>();
    m.info = j.value("info", json::object());
    const json& persons = j.at("persons");
    if (!persons.is_array() || persons.size() != 2) {
      Throw(ErrorKind::kInvalidConfig, "manifest must list exactly two persons");
    }
    for (int p = 0; p < 2; ++p) {
      m.person_names[p] = persons[p].at("name").get<std::string>();
      std::ifstream lines(dir / persons[p].at("poses").get<std::string>());
      if (!lines) Throw(ErrorKind::kIo, "missing pose file for person " + m.person_names[p]);
      std::string line;
      while (std::getline(lines, line)) {
        if (!line.empty()) m.samples[p].push_back(RecordFromJson(json::parse(line)));
      }
    }
  } catch (const json::exception& e) {
    Throw(ErrorKind::kInvalidConfig, std::string("malformed manifest: ") + e.what());
  }
  ValidateManifest(m);
  return m;
}

namespace {

struct Bbox {
  double x0, y0, x1, y1;
};

Bbox JointBbox(const Pose3D& gt_pose, const CameraView& camera) {
  const Pose2D p = Project(gt_pose, camera);
  Bbox b{1e300, 1e300, -1e300, -1e300};
  bool any = false;
  for (int j = 0; j < kNumJoints; ++j) {
    if (p.confidence(j) <= 0.0) continue;
    any = true;
    b.x0 = std::min(b.x0, p.points(j, 0));
    b.x1 = std::max(b.x1, p.points(j, 0));
    b.y0 = std::min(b.y0, p.points(j, 1));
    b.y1 = std::max(b.y1, p.points(j, 1));
  }
  if (!any) Throw(ErrorKind::kEmptyPose, "cannot crop a pose without valid joints");
  return b;
}

double CropSide(const Bbox& b, const CropOptions& options) {
  return std::max(options.margin * std::max(b.x1 - b.x0, b.y1 - b.y0), 1.0);
}

}  // namespace

CropTransform PersonCrop(const Pose3D& gt_pose, const CameraView& camera,
                         const CropOptions& options, double shift_px) {
  if (options.resolution <= 0 || !(options.margin >= 1.0)) {
    Throw(ErrorKind::kInvalidConfig, "crop needs resolution > 0 and margin >= 1");
  }
  const Bbox b = JointBbox(gt_pose, camera);
  const double side = CropSide(b, options);
  const double k = side / options.resolution;
  const double x0 = 0.5 * (b.x0 + b.x1) + shift_px - 0.5 * side;
  const double y0 = 0.5 * (b.y0 + b.y1) - 0.5 * side;
  CropTransform crop;
  crop.crop_to_frame << k, 0.0, x0 + 0.5 * k, 0.0, k, y0 + 0.5 * k;
  return crop;
}

double MaxHorizontalShift(const Pose3D& gt_pose, const CameraView& camera,
                          const CropOptions& options) {
  const Bbox b = JointBbox(gt_pose, camera);
  return 0.5 * (CropSide(b, options) - (b.x1 - b.x0));
}

cv::Mat ExtractCrop(const cv::Mat& frame, const CropTransform& crop, int resolution) {
  if (frame.empty()) Throw(ErrorKind::kIo, "empty frame image");
  const double k = crop.crop_to_frame.col(0).norm();
  Eigen::Matrix<double, 2, 3> m = crop.crop_to_frame;
  cv::Mat source = frame;
  if (k > 1.0) {
    // Low-pass only the region the crop reads from.
    const double sigma = 0.5 * std::sqrt(k * k - 1.0);
    const int pad = static_cast<int>(std::ceil(3.0 * sigma)) + 2;
    Eigen::Vector2d lo(1e300, 1e300), hi(-1e300, -1e300);
    for (const double u : {-0.5, resolution - 0.5})
      for (const double v : {-0.5, resolution - 0.5}) {
        const Eigen::Vector2d p = crop.ToFrame({u, v});
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
      }
    const int x0 = std::clamp(static_cast<int>(std::floor(lo.x())) - pad, 0, frame.cols - 1);
    const int y0 = std::clamp(static_cast<int>(std::floor(lo.y())) - pad, 0, frame.rows - 1);
    const int x1 = std::clamp(static_cast<int>(std::ceil(hi.x())) + pad, x0 + 1, frame.cols);
    const int y1 = std::clamp(static_cast<int>(std::ceil(hi.y())) + pad, y0 + 1, frame.rows);
    cv::GaussianBlur(frame(cv::Rect(x0, y0, x1 - x0, y1 - y0)), source, cv::Size(0, 0),
                     sigma, sigma, cv::BORDER_REPLICATE);
    m(0, 2) -= x0;
    m(1, 2) -= y0;
  }
  cv::Mat M(2, 3, CV_64F);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) M.at<double>(r, c) = m(r, c);
  cv::Mat out;
  cv::warpAffine(source, out, M, cv::Size(resolution, resolution),
                 cv::INTER_LINEAR | cv::WARP_INVERSE_MAP, cv::BORDER_REPLICATE);
  return out;
}

struct Dataset::Cache {
  using Key = std::tuple<int, int, int>;
  std::mutex mutex;
  std::map<Key, cv::Mat> images;
  std::deque<Key> order;
  size_t capacity = 0;  // 0 = unbounded
};

Dataset::Dataset(DatasetManifest manifest, fs::path dir)
    : manifest_(std::move(manifest)), dir_(std::move(dir)), cache_(std::make_shared<Cache>()) {
  ValidateManifest(manifest_);
  const fs::path root(manifest_.image_root);
  image_root_ = root.is_absolute() ? root : dir_ / root;
  const auto& cam = manifest_.cameras.front();
  if (static_cast<int64_t>(cam.width) * cam.height > 640 * 480) cache_->capacity = 64;
}

Dataset Dataset::Open(const fs::path& dir) { return Dataset(ReadManifest(dir), dir); }

int Dataset::NumSamples(Person p) const {
  return static_cast<int>(manifest_.samples[Index(p)].size());
}

const SampleRecord& Dataset::Record(Person p, int index) const {
  const auto& samples = manifest_.samples[Index(p)];
  if (index < 0 || index >= static_cast<int>(samples.size())) {
    Throw(ErrorKind::kOutOfRange,
          "sample index " + std::to_string(index) + " outside [0, " +
              std::to_string(samples.size()) + ") for person " + std::string(PersonName(p)));
  }
  return samples[index];
}

cv::Mat Dataset::FrameImage(Person p, int index, int view) const {
  const SampleRecord& record = Record(p, index);
  if (view < 0 || view >= static_cast<int>(record.images.size())) {
    Throw(ErrorKind::kOutOfRange, "view index " + std::to_string(view) + " out of range");
  }
  const Cache::Key key{Index(p), index, view};
  {
    std::lock_guard<std::mutex> lock(cache_->mutex);
    const auto it = cache_->images.find(key);
    if (it != cache_->images.end()) return it->second;
  }
  const fs::path path = image_root_ / record.images[view];
  cv::Mat image = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (image.empty()) Throw(ErrorKind::kIo, "cannot read image " + path.string());
  std::lock_guard<std::mutex> lock(cache_->mutex);
  if (cache_->capacity > 0 && cache_->order.size() >= cache_->capacity) {
    cache_->images.erase(cache_->order.front());
    cache_->order.pop_front();
  }
  if (cache_->images.emplace(key, image).second) cache_->order.push_back(key);
  return image;
}

MultiViewSample SampleBatch(const Dataset& dataset, Person person, int index,
                            bool augment, std::mt19937_64& rng,
                            const CropOptions& options) {
  const SampleRecord& record = dataset.Record(person, index);
  MultiViewSample sample;
  sample.index = index;
  sample.t = record.t;
  sample.person = person;
  sample.gt_pose = record.gt_pose;
  const auto& cameras = dataset.cameras();
  for (size_t v = 0; v < cameras.size(); ++v) {
    double shift = 0.0;
    if (augment) {
      const double limit = MaxHorizontalShift(record.gt_pose, cameras[v], options);
      shift = std::uniform_real_distribution<double>(-limit, limit)(rng);
    }
    const CropTransform crop = PersonCrop(record.gt_pose, cameras[v], options, shift);
    sample.images.push_back(
        ExtractCrop(dataset.FrameImage(person, index, static_cast<int>(v)), crop,
                    options.resolution));
    sample.crops.push_back(crop);
  }
  return sample;
}

Split SplitIndices(int n, double heldout_fraction) {
  if (n <= 0 || heldout_fraction < 0.0 || heldout_fraction >= 1.0) {
    Throw(ErrorKind::kInvalidConfig, "split needs n > 0 and fraction in [0, 1)");
  }
  int held = static_cast<int>(std::ceil(heldout_fraction * n));
  held = std::min(held, n - 1);
  Split split;
  for (int i = 0; i < n; ++i) (i < n - held ? split.train : split.heldout).push_back(i);
  return split;
}

LimbProfile PersonLimbProfile(const Dataset& dataset, Person person,
                              std::span<const int> indices, const Skeleton& skeleton) {
  std::vector<Pose3D> poses;
  poses.reserve(indices.size());
  for (const int i : indices) poses.push_back(dataset.Record(person, i).gt_pose);
  return ComputeLimbProfile(poses, skeleton);
}

}  // namespace mvpt
