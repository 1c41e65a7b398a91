#include "mvpt/skeleton.h"

#include <cmath>
#include <deque>

#include "mvpt/error.h"

namespace mvpt {

Skeleton::Skeleton(const std::array<int, kNumJoints>& parent)
    : parent_(parent) {
  for (int j = 0; j < kNumJoints; ++j) {
    if (parent_[j] < 0) {
      if (root_ >= 0) {
        Throw(ErrorKind::kInvalidArgument, "skeleton has more than one root");
      }
      root_ = j;
    } else if (parent_[j] >= kNumJoints || parent_[j] == j) {
      Throw(ErrorKind::kInvalidArgument,
            "joint " + std::to_string(j) + " has an invalid parent");
    }
  }
  if (root_ < 0) {
    Throw(ErrorKind::kInvalidArgument, "skeleton has no root");
  }

  std::array<std::vector<int>, kNumJoints> children;
  for (int j = 0; j < kNumJoints; ++j) {
    if (j != root_) {
      children[parent_[j]].push_back(j);
      bones_.push_back({j, parent_[j]});
    }
  }
  std::deque<int> queue = {root_};
  while (!queue.empty()) {
    const int j = queue.front();
    queue.pop_front();
    order_.push_back(j);
    for (const int c : children[j]) queue.push_back(c);
  }
  if (order_.size() != static_cast<size_t>(kNumJoints)) {
    Throw(ErrorKind::kInvalidArgument,
          "skeleton parent array contains a cycle");
  }
}

Skeleton Skeleton::Coco17() {
  return Skeleton(
      {5, 0, 0, 1, 2, 11, 5, 5, 6, 7, 8, -1, 11, 11, 12, 13, 14});
}

std::string Skeleton::BoneName(size_t bone_index) const {
  const Bone& b = bones_.at(bone_index);
  return std::string(CocoJointNames()[b.parent]) + "->" +
         std::string(CocoJointNames()[b.child]);
}

LimbProfile ComputeLimbProfile(std::span<const Pose3D> poses,
                               const Skeleton& skeleton) {
  if (poses.empty()) {
    Throw(ErrorKind::kInvalidArgument, "limb profile needs at least one pose");
  }
  const auto& bones = skeleton.bones();
  LimbProfile profile;
  profile.bone_lengths.assign(bones.size(), 0.0);
  for (size_t b = 0; b < bones.size(); ++b) {
    double sum = 0.0;
    int n = 0;
    for (const Pose3D& pose : poses) {
      if (!pose.valid[bones[b].child] || !pose.valid[bones[b].parent]) continue;
      sum += (pose.joints.row(bones[b].child) - pose.joints.row(bones[b].parent))
                 .norm();
      ++n;
    }
    if (n == 0) {
      Throw(ErrorKind::kIncompleteProfile,
            "bone " + skeleton.BoneName(b) + " is never measurable");
    }
    profile.bone_lengths[b] = sum / n;
  }
  return profile;
}

Pose3D ScalePose(const Pose3D& source, const Skeleton& skeleton,
                 const LimbProfile& target) {
  const auto& bones = skeleton.bones();
  if (target.bone_lengths.size() != bones.size()) {
    Throw(ErrorKind::kIncompleteProfile,
          "profile has " + std::to_string(target.bone_lengths.size()) +
              " bones, skeleton has " + std::to_string(bones.size()));
  }
  for (size_t b = 0; b < bones.size(); ++b) {
    if (!(target.bone_lengths[b] > 0.0)) {
      Throw(ErrorKind::kIncompleteProfile,
            "bone " + skeleton.BoneName(b) + " has a non-positive length");
    }
  }
  const int root = skeleton.root();
  if (!source.valid[root]) {
    Throw(ErrorKind::kInvalidArgument, "source root joint is invalid");
  }

  // Bone index by child joint.
  std::array<int, kNumJoints> bone_of{};
  bone_of.fill(-1);
  for (size_t b = 0; b < bones.size(); ++b) bone_of[bones[b].child] = int(b);

  Pose3D out;
  out.joints.row(root) = source.joints.row(root);
  out.valid[root] = true;
  for (const int j : skeleton.topological_order()) {
    if (j == root) continue;
    const int p = skeleton.parent()[j];
    if (!out.valid[p] || !source.valid[j] || !source.valid[p]) continue;
    const Eigen::RowVector3d d = source.joints.row(j) - source.joints.row(p);
    const double length = d.norm();
    if (!(length > 0.0)) {
      Throw(ErrorKind::kDegenerateBone,
            "bone " + skeleton.BoneName(bone_of[j]) + " has zero length");
    }
    out.joints.row(j) =
        out.joints.row(p) + d * (target.bone_lengths[bone_of[j]] / length);
    out.valid[j] = true;
  }
  return out;
}

}  // namespace mvpt
