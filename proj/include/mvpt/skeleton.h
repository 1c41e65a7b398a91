#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "mvpt/geometry.h"

namespace mvpt {

struct Bone {
  int child = 0;
  int parent = 0;
};

// Kinematic tree over the 17 COCO joints. The default tree is rooted at the
// left hip (COCO-17 has no pelvis joint):
//
//   l_hip -> r_hip -> r_knee -> r_ankle
//         -> l_knee -> l_ankle
//         -> l_shoulder -> l_elbow -> l_wrist
//                       -> r_shoulder -> r_elbow -> r_wrist
//                       -> nose -> l_eye -> l_ear
//                               -> r_eye -> r_ear
class Skeleton {
 public:
  // Throws kInvalidArgument unless `parent` encodes a single tree.
  explicit Skeleton(const std::array<int, kNumJoints>& parent);

  static Skeleton Coco17();

  int root() const { return root_; }
  const std::array<int, kNumJoints>& parent() const { return parent_; }
  // (j, parent[j]) for every non-root j, in joint-index order.
  const std::vector<Bone>& bones() const { return bones_; }
  // Joints ordered so that every parent precedes its children.
  const std::vector<int>& topological_order() const { return order_; }
  std::string BoneName(size_t bone_index) const;

 private:
  std::array<int, kNumJoints> parent_;
  int root_ = -1;
  std::vector<Bone> bones_;
  std::vector<int> order_;
};

struct LimbProfile {
  std::vector<double> bone_lengths;  // indexed like Skeleton::bones()
};

// Per-bone mean length over the poses in which both endpoints are valid.
LimbProfile ComputeLimbProfile(std::span<const Pose3D> poses,
                               const Skeleton& skeleton);

// Retargets `source` to the target bone lengths: walking the tree from the
// root, each bone keeps its source direction and takes the target length.
// The root stays where it is. Joints whose parent chain is invalid come back
// invalid.
Pose3D ScalePose(const Pose3D& source, const Skeleton& skeleton,
                 const LimbProfile& target);

}  // namespace mvpt
