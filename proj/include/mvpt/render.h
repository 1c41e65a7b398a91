#pragma once

#include <cstdint>

#include <json.hpp>
#include <opencv2/core.hpp>

#include "mvpt/geometry.h"

namespace mvpt {

struct Rgb {
  uint8_t r = 0;
  uint8_t g = 0;
  uint8_t b = 0;
  bool operator==(const Rgb&) const = default;
};

// Serialized as [r, g, b].
void to_json(nlohmann::json& j, const Rgb& c);
void from_json(const nlohmann::json& j, Rgb& c);

// Appearance of the articulated capsule figure. Radii are in world units
// (cm) and shrink with depth under perspective.
struct FigureStyle {
  Rgb left_upper{230, 80, 40};
  Rgb left_lower{250, 130, 60};
  Rgb right_upper{220, 200, 30};
  Rgb right_lower{250, 235, 110};
  Rgb torso{170, 50, 140};
  Rgb head{235, 195, 165};
  Rgb marker{255, 255, 255};
  Rgb face{120, 30, 30};
  double limb_radius = 4.0;
  double torso_radius = 5.0;
  double head_radius = 10.0;
  double marker_radius = 2.5;
  double face_radius = 1.8;
};

// Renders the figure over a flat background with painter's ordering by
// camera depth and analytic edge anti-aliasing. Output is an 8-bit BGR image
// of the camera's size. Pixel centers sit at integer coordinates, matching
// Project().
cv::Mat RenderFigure(const Pose3D& pose, const CameraView& camera,
                     const FigureStyle& style, const Rgb& background);

// White disc of world radius `radius_cm` at one joint on black; used to
// check that rasterized positions agree with Project().
cv::Mat RenderJointMarker(const Pose3D& pose, const CameraView& camera,
                          int joint, double radius_cm);

}  // namespace mvpt
