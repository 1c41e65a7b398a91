#pragma once

#include <json.hpp>

#include "mvpt/geometry.h"
#include "mvpt/skeleton.h"

namespace mvpt {

// Camera: {"view_id", "P": 12 row-major reals, "width", "height"}.
void to_json(nlohmann::json& j, const CameraView& camera);
void from_json(const nlohmann::json& j, CameraView& camera);

// Pose3D: {"joints": 17x3, "valid": 17 booleans, "units": "cm"}.
void to_json(nlohmann::json& j, const Pose3D& pose);
void from_json(const nlohmann::json& j, Pose3D& pose);

// Pose2D: {"points": 17x2, "confidence": 17 reals}.
void to_json(nlohmann::json& j, const Pose2D& pose);
void from_json(const nlohmann::json& j, Pose2D& pose);

void to_json(nlohmann::json& j, const LimbProfile& profile);
void from_json(const nlohmann::json& j, LimbProfile& profile);

}  // namespace mvpt
