#pragma once

#include "mstyle/errors.hpp"

#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mstyle::motion {

struct Joint {
  std::string name;
  int parent = -1;
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();
  /// Euler channel order used for BVH I/O, e.g. "ZXY".
  std::string rotation_order = "ZXY";
};

/// Topologically ordered joint hierarchy with a single root at index 0.
class Skeleton {
 public:
  Skeleton() = default;
  explicit Skeleton(std::vector<Joint> joints);

  std::size_t size() const { return joints_.size(); }
  const Joint& joint(std::size_t i) const { return joints_.at(i); }
  const std::vector<Joint>& joints() const { return joints_; }
  static constexpr std::size_t root() { return 0; }
  std::vector<std::string> joint_names() const;

  std::optional<std::size_t> find(std::string_view name) const;
  /// Throws MappingError if absent.
  std::size_t index_of(std::string_view name) const;
  std::vector<std::size_t> children(std::size_t joint) const;
  /// Ancestors from the parent upward, excluding `joint` itself.
  std::vector<std::size_t> ancestors(std::size_t joint) const;

  friend bool operator==(const Skeleton& a, const Skeleton& b);

 private:
  std::vector<Joint> joints_;
};

/// Per-frame pose. `local_rotations[0]` is the root orientation.
struct MotionFrame {
  Eigen::Vector3d root_position = Eigen::Vector3d::Zero();
  std::vector<Eigen::Quaterniond> local_rotations;
  std::vector<Eigen::Vector3d> world_positions;

  const Eigen::Quaterniond& root_orientation() const { return local_rotations.front(); }
};

enum class Gait : std::uint8_t { stand = 0, walk = 1, run = 2 };
inline constexpr std::size_t kGaitCount = 3;
std::string_view gait_name(Gait gait);
std::optional<Gait> parse_gait(std::string_view name);

/// Foot contacts in the order left heel, left toe, right heel, right toe.
using ContactLabels = std::array<bool, 4>;
enum ContactIndex : std::size_t { kLeftHeel = 0, kLeftToe = 1, kRightHeel = 2, kRightToe = 3 };

struct MotionClip {
  Skeleton skeleton;
  std::vector<MotionFrame> frames;
  double frame_time = 1.0 / 60.0;
  std::string name;
  std::string style_label;
  std::vector<Gait> action_labels;
  std::vector<ContactLabels> contact_labels;

  std::size_t frame_count() const { return frames.size(); }
  bool has_labels() const;
  /// Throws std::invalid_argument if per-frame arrays disagree or frame_time <= 0.
  void validate() const;
};

/// Identity-rotation frame at the origin for `skeleton`, with world positions filled in.
MotionFrame rest_frame(const Skeleton& skeleton);

/// Recomputes `frame.world_positions` from root position and local rotations.
void forward_kinematics(const Skeleton& skeleton, MotionFrame& frame);
std::vector<Eigen::Quaterniond> world_rotations(const Skeleton& skeleton, const MotionFrame& frame);

/// The 18-joint character used throughout the toolkit (meters, +Y up, +Z forward).
Skeleton humanoid18();

/// Joint names of the four contact joints in ContactIndex order.
inline constexpr std::array<std::string_view, 4> kContactJoints = {"LeftFoot", "LeftToe", "RightFoot", "RightToe"};

}  // namespace mstyle::motion
