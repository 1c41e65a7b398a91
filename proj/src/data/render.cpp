#include "mvpt/render.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "mvpt/error.h"

namespace mvpt {
namespace {

enum class Shape { kCapsule, kDisc, kQuad };

struct Primitive {
  Shape shape;
  double depth;
  std::array<Eigen::Vector2d, 4> points;  // pixel space
  double radius0 = 0.0;
  double radius1 = 0.0;
  Rgb color;
};

double CapsuleDistance(const Eigen::Vector2d& p, const Primitive& prim) {
  const Eigen::Vector2d& a = prim.points[0];
  const Eigen::Vector2d ba = prim.points[1] - a;
  const double len2 = ba.squaredNorm();
  const double h =
      len2 > 0.0 ? std::clamp((p - a).dot(ba) / len2, 0.0, 1.0) : 0.0;
  return (p - a - h * ba).norm() -
         (prim.radius0 + h * (prim.radius1 - prim.radius0));
}

double SegmentDistance(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                       const Eigen::Vector2d& b) {
  const Eigen::Vector2d ba = b - a;
  const double len2 = ba.squaredNorm();
  const double h =
      len2 > 0.0 ? std::clamp((p - a).dot(ba) / len2, 0.0, 1.0) : 0.0;
  return (p - a - h * ba).norm();
}

double QuadDistance(const Eigen::Vector2d& p, const Primitive& prim) {
  double d = 1e30;
  bool inside = false;
  for (int i = 0, j = 3; i < 4; j = i++) {
    const Eigen::Vector2d& a = prim.points[i];
    const Eigen::Vector2d& b = prim.points[j];
    d = std::min(d, SegmentDistance(p, a, b));
    if (((a.y() > p.y()) != (b.y() > p.y())) &&
        (p.x() < (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x())) {
      inside = !inside;
    }
  }
  return inside ? -d : d;
}

class Canvas {
 public:
  Canvas(int width, int height, const Rgb& background)
      : image_(height, width, CV_32FC3,
               cv::Scalar(background.b, background.g, background.r)) {}

  void Paint(const Primitive& prim) {
    Eigen::Vector2d lo(1e30, 1e30), hi(-1e30, -1e30);
    const int n = prim.shape == Shape::kQuad ? 4 : (prim.shape == Shape::kCapsule ? 2 : 1);
    for (int i = 0; i < n; ++i) {
      lo = lo.cwiseMin(prim.points[i]);
      hi = hi.cwiseMax(prim.points[i]);
    }
    const double pad = std::max(prim.radius0, prim.radius1) + 1.0;
    const int x0 = std::max(0, static_cast<int>(std::floor(lo.x() - pad)));
    const int y0 = std::max(0, static_cast<int>(std::floor(lo.y() - pad)));
    const int x1 = std::min(image_.cols - 1, static_cast<int>(std::ceil(hi.x() + pad)));
    const int y1 = std::min(image_.rows - 1, static_cast<int>(std::ceil(hi.y() + pad)));
    const cv::Vec3f color(prim.color.b, prim.color.g, prim.color.r);
    for (int y = y0; y <= y1; ++y) {
      auto* row = image_.ptr<cv::Vec3f>(y);
      for (int x = x0; x <= x1; ++x) {
        const Eigen::Vector2d p(x, y);
        double d = 0.0;
        switch (prim.shape) {
          case Shape::kCapsule: d = CapsuleDistance(p, prim); break;
          case Shape::kDisc: d = (p - prim.points[0]).norm() - prim.radius0; break;
          case Shape::kQuad: d = QuadDistance(p, prim); break;
        }
        const float alpha = static_cast<float>(std::clamp(0.5 - d, 0.0, 1.0));
        if (alpha > 0.0f) row[x] = row[x] * (1.0f - alpha) + color * alpha;
      }
    }
  }

  cv::Mat ToBgr8() const {
    cv::Mat out;
    image_.convertTo(out, CV_8UC3);  // rounds and saturates
    return out;
  }

 private:
  cv::Mat image_;
};

// Projects world points and measures perspective scale for one camera.
class ViewProjector {
 public:
  explicit ViewProjector(const CameraView& camera)
      : camera_(camera), decomposition_(DecomposeProjection(camera.projection)) {}

  Eigen::Vector2d Pixel(const Eigen::Vector3d& X) const {
    return ProjectPoint(camera_.projection, X);
  }
  double Depth(const Eigen::Vector3d& X) const {
    return (decomposition_.R * X + decomposition_.t).z();
  }
  double Radius(const Eigen::Vector3d& X, double radius_cm) const {
    const double f = 0.5 * (decomposition_.K(0, 0) + decomposition_.K(1, 1));
    return radius_cm * f / std::max(Depth(X), 1e-6);
  }

 private:
  const CameraView& camera_;
  CameraDecomposition decomposition_;
};

Eigen::Vector3d Joint(const Pose3D& pose, int j) {
  return pose.joints.row(j).transpose();
}

}  // namespace

cv::Mat RenderFigure(const Pose3D& pose, const CameraView& camera,
                     const FigureStyle& style, const Rgb& background) {
  ValidatePose(pose);
  const ViewProjector view(camera);
  std::vector<Primitive> prims;

  auto capsule = [&](const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                     double radius, const Rgb& color, double depth_bias = 0.0) {
    Primitive p{Shape::kCapsule, 0.5 * (view.Depth(a) + view.Depth(b)) + depth_bias,
                {view.Pixel(a), view.Pixel(b)}, view.Radius(a, radius),
                view.Radius(b, radius), color};
    prims.push_back(p);
  };
  auto disc = [&](const Eigen::Vector3d& c, double radius, const Rgb& color,
                  double depth) {
    Primitive p{Shape::kDisc, depth, {view.Pixel(c)}, view.Radius(c, radius),
                view.Radius(c, radius), color};
    prims.push_back(p);
  };
  auto ok = [&](std::initializer_list<int> joints) {
    return std::all_of(joints.begin(), joints.end(),
                       [&](int j) { return pose.valid[j]; });
  };

  // Torso: filled quad outlined with capsules.
  if (ok({5, 6, 11, 12})) {
    const std::array<int, 4> corners = {5, 6, 12, 11};
    Primitive quad{Shape::kQuad, 0.0, {}, 0.0, 0.0, style.torso};
    for (int i = 0; i < 4; ++i) {
      quad.points[i] = view.Pixel(Joint(pose, corners[i]));
      quad.depth += 0.25 * view.Depth(Joint(pose, corners[i]));
    }
    prims.push_back(quad);
  }
  for (const auto& [a, b] : std::initializer_list<std::pair<int, int>>{
           {5, 6}, {11, 12}, {5, 11}, {6, 12}}) {
    if (ok({a, b})) capsule(Joint(pose, a), Joint(pose, b), style.torso_radius, style.torso);
  }

  // Head and neck.
  if (ok({3, 4})) {
    const Eigen::Vector3d head = 0.5 * (Joint(pose, 3) + Joint(pose, 4));
    const double head_depth = view.Depth(head);
    if (ok({5, 6})) {
      capsule(0.5 * (Joint(pose, 5) + Joint(pose, 6)), head,
              0.6 * style.limb_radius, style.head, 1.0);
    }
    disc(head, style.head_radius, style.head, head_depth);
    const std::array<Rgb, 5> face_colors = {style.face, style.left_upper,
                                            style.right_upper, style.left_lower,
                                            style.right_lower};
    for (int j = 0; j < 5; ++j) {
      if (!pose.valid[j]) continue;
      const double depth = view.Depth(Joint(pose, j));
      // Features on the far side of the head are hidden by it.
      if (depth > head_depth + 0.3 * style.head_radius) continue;
      disc(Joint(pose, j), style.face_radius, face_colors[j],
           std::min(depth, head_depth - 0.1));
    }
  }

  // Limbs.
  const struct {
    int a, b;
    Rgb color;
  } limbs[] = {{5, 7, style.left_upper},   {7, 9, style.left_lower},
               {6, 8, style.right_upper},  {8, 10, style.right_lower},
               {11, 13, style.left_upper}, {13, 15, style.left_lower},
               {12, 14, style.right_upper}, {14, 16, style.right_lower}};
  for (const auto& limb : limbs) {
    if (ok({limb.a, limb.b}))
      capsule(Joint(pose, limb.a), Joint(pose, limb.b), style.limb_radius, limb.color);
  }

  // Joint markers sit on top of the limbs meeting at them.
  for (int j = 5; j < kNumJoints; ++j) {
    if (!pose.valid[j]) continue;
    disc(Joint(pose, j), style.marker_radius, style.marker,
         view.Depth(Joint(pose, j)) - 3.0);
  }

  std::stable_sort(prims.begin(), prims.end(),
                   [](const Primitive& x, const Primitive& y) { return x.depth > y.depth; });
  Canvas canvas(camera.width, camera.height, background);
  for (const Primitive& p : prims) canvas.Paint(p);
  return canvas.ToBgr8();
}

cv::Mat RenderJointMarker(const Pose3D& pose, const CameraView& camera,
                          int joint, double radius_cm) {
  if (joint < 0 || joint >= kNumJoints || !pose.valid[joint]) {
    Throw(ErrorKind::kInvalidArgument, "marker joint must be a valid joint index");
  }
  const ViewProjector view(camera);
  const Eigen::Vector3d X = Joint(pose, joint);
  Primitive p{Shape::kDisc, 0.0, {view.Pixel(X)}, view.Radius(X, radius_cm),
              view.Radius(X, radius_cm), Rgb{255, 255, 255}};
  Canvas canvas(camera.width, camera.height, Rgb{0, 0, 0});
  canvas.Paint(p);
  return canvas.ToBgr8();
}

}  // namespace mvpt
