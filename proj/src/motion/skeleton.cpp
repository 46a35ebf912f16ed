#include "mstyle/motion/skeleton.hpp"

#include <algorithm>

namespace mstyle::motion {

Skeleton::Skeleton(std::vector<Joint> joints) : joints_(std::move(joints)) {
  if (joints_.empty()) {
    throw std::invalid_argument("skeleton needs at least one joint");
  }
  if (joints_.front().parent != -1) {
    throw std::invalid_argument("joint 0 must be the root");
  }
  for (std::size_t i = 1; i < joints_.size(); ++i) {
    const int parent = joints_[i].parent;
    if (parent < 0 || parent >= static_cast<int>(i)) {
      throw std::invalid_argument("joint '" + joints_[i].name + "' must have a parent that precedes it");
    }
  }
}

std::vector<std::string> Skeleton::joint_names() const {
  std::vector<std::string> names;
  names.reserve(joints_.size());
  for (const auto& j : joints_) {
    names.push_back(j.name);
  }
  return names;
}

std::optional<std::size_t> Skeleton::find(std::string_view name) const {
  for (std::size_t i = 0; i < joints_.size(); ++i) {
    if (joints_[i].name == name) {
      return i;
    }
  }
  return std::nullopt;
}

std::size_t Skeleton::index_of(std::string_view name) const {
  if (auto i = find(name)) {
    return *i;
  }
  throw MappingError("skeleton has no joint named '" + std::string(name) + "'");
}

std::vector<std::size_t> Skeleton::children(std::size_t joint) const {
  std::vector<std::size_t> out;
  for (std::size_t i = joint + 1; i < joints_.size(); ++i) {
    if (joints_[i].parent == static_cast<int>(joint)) {
      out.push_back(i);
    }
  }
  return out;
}

std::vector<std::size_t> Skeleton::ancestors(std::size_t joint) const {
  std::vector<std::size_t> out;
  for (int p = joints_.at(joint).parent; p >= 0; p = joints_[static_cast<std::size_t>(p)].parent) {
    out.push_back(static_cast<std::size_t>(p));
  }
  return out;
}

bool operator==(const Skeleton& a, const Skeleton& b) {
  return std::equal(a.joints_.begin(), a.joints_.end(), b.joints_.begin(), b.joints_.end(),
                    [](const Joint& x, const Joint& y) {
                      return x.name == y.name && x.parent == y.parent && x.offset == y.offset &&
                             x.rotation_order == y.rotation_order;
                    });
}

std::string_view gait_name(Gait gait) {
  switch (gait) {
    case Gait::stand:
      return "stand";
    case Gait::walk:
      return "walk";
    case Gait::run:
      return "run";
  }
  return "stand";
}

std::optional<Gait> parse_gait(std::string_view name) {
  for (Gait g : {Gait::stand, Gait::walk, Gait::run}) {
    if (gait_name(g) == name) {
      return g;
    }
  }
  return std::nullopt;
}

bool MotionClip::has_labels() const {
  return action_labels.size() == frames.size() && contact_labels.size() == frames.size() && !frames.empty();
}

void MotionClip::validate() const {
  if (!(frame_time > 0.0)) {
    throw std::invalid_argument("clip '" + name + "': frame_time must be positive");
  }
  if (!action_labels.empty() && action_labels.size() != frames.size()) {
    throw std::invalid_argument("clip '" + name + "': action label count differs from frame count");
  }
  if (!contact_labels.empty() && contact_labels.size() != frames.size()) {
    throw std::invalid_argument("clip '" + name + "': contact label count differs from frame count");
  }
  for (const MotionFrame& f : frames) {
    if (f.local_rotations.size() != skeleton.size()) {
      throw std::invalid_argument("clip '" + name + "': frame rotation count differs from skeleton");
    }
  }
}

MotionFrame rest_frame(const Skeleton& skeleton) {
  MotionFrame frame;
  frame.local_rotations.assign(skeleton.size(), Eigen::Quaterniond::Identity());
  forward_kinematics(skeleton, frame);
  return frame;
}

std::vector<Eigen::Quaterniond> world_rotations(const Skeleton& skeleton, const MotionFrame& frame) {
  std::vector<Eigen::Quaterniond> world(skeleton.size());
  for (std::size_t j = 0; j < skeleton.size(); ++j) {
    const int parent = skeleton.joint(j).parent;
    world[j] = parent < 0 ? frame.local_rotations[j]
                          : world[static_cast<std::size_t>(parent)] * frame.local_rotations[j];
  }
  return world;
}

void forward_kinematics(const Skeleton& skeleton, MotionFrame& frame) {
  const std::size_t n = skeleton.size();
  frame.world_positions.resize(n);
  std::vector<Eigen::Quaterniond> world(n);
  for (std::size_t j = 0; j < n; ++j) {
    const Joint& joint = skeleton.joint(j);
    if (joint.parent < 0) {
      world[j] = frame.local_rotations[j];
      frame.world_positions[j] = frame.root_position;
      continue;
    }
    const auto p = static_cast<std::size_t>(joint.parent);
    world[j] = world[p] * frame.local_rotations[j];
    frame.world_positions[j] = frame.world_positions[p] + world[p] * joint.offset;
  }
}

Skeleton humanoid18() {
  using V = Eigen::Vector3d;
  std::vector<Joint> joints = {
      {"Hips", -1, V(0, 0, 0)},
      {"Spine", 0, V(0, 0.12, 0)},
      {"Chest", 1, V(0, 0.22, 0)},
      {"Head", 2, V(0, 0.30, 0)},
      {"LeftArm", 2, V(0.19, 0.20, 0)},
      {"LeftForeArm", 4, V(0, -0.29, 0)},
      {"LeftHand", 5, V(0, -0.26, 0)},
      {"RightArm", 2, V(-0.19, 0.20, 0)},
      {"RightForeArm", 7, V(0, -0.29, 0)},
      {"RightHand", 8, V(0, -0.26, 0)},
      {"LeftUpLeg", 0, V(0.10, -0.07, 0)},
      {"LeftLeg", 10, V(0, -0.45, 0)},
      {"LeftFoot", 11, V(0, -0.45, 0)},
      {"LeftToe", 12, V(0, -0.07, 0.13)},
      {"RightUpLeg", 0, V(-0.10, -0.07, 0)},
      {"RightLeg", 14, V(0, -0.45, 0)},
      {"RightFoot", 15, V(0, -0.45, 0)},
      {"RightToe", 16, V(0, -0.07, 0.13)},
  };
  return Skeleton(std::move(joints));
}

}  // namespace mstyle::motion
