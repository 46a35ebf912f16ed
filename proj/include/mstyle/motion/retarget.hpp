#pragma once

#include "mstyle/motion/skeleton.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mstyle::motion {

/// Correspondence from source joint names to template joint names.
struct JointMap {
  std::map<std::string, std::string> source_to_target;

  /// Source joint mapped onto `target`, if any.
  std::optional<std::string> source_for(std::string_view target) const;
  /// Maps every template joint to the source joint of the same name.
  static JointMap identity(const Skeleton& skeleton);
};

/// Parses `source = target` lines; `#` starts a comment. Throws ParseError on malformed lines.
JointMap parse_joint_map(std::string_view text);
JointMap read_joint_map_file(const std::filesystem::path& path);

/// Re-expresses `source` on `target` proportions. Every template joint must be mapped.
MotionClip scale_skeleton(const MotionClip& source, const Skeleton& target, const JointMap& map);
MotionClip scale_skeleton(const MotionClip& source, const Skeleton& target);
/// Ratio of rest-pose root heights above the lowest joint, target over source.
double root_height_ratio(const Skeleton& source, const Skeleton& target);

struct IkTarget {
  std::size_t joint = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  /// Number of nearest ancestors allowed to rotate; negative means all of them, root included.
  int chain_length = -1;
};

struct IkResult {
  MotionFrame frame;
  /// ‖e‖ before the first iteration followed by ‖e‖ after each iteration.
  std::vector<double> residuals;
};

inline constexpr double kIkDamping = 2.0;
inline constexpr int kIkIterations = 20;

/// Damped least squares over world-axis rotations of the targets' ancestor joints.
IkResult ik_damped_ls(const Skeleton& skeleton, const MotionFrame& frame, const std::vector<IkTarget>& targets,
                      double damping = kIkDamping, int iterations = kIkIterations);

struct ToeJoints {
  std::string left = "LeftToe";
  std::string right = "RightToe";
};

/// 5th percentile of toe heights over the whole clip.
double estimate_ground_height(const MotionClip& clip, const ToeJoints& toes = {});

/// Shifts the root vertically on toe-contact frames so the lowest contacting toe sits at `ground_height`.
MotionClip fix_toe_height(const MotionClip& clip, double ground_height, const ToeJoints& toes = {});

struct RetargetOptions {
  std::vector<std::string> end_effectors = {"LeftHand", "RightHand", "LeftFoot", "RightFoot"};
  double damping = kIkDamping;
  int iterations = kIkIterations;
  std::optional<double> ground_height;
  ToeJoints toes;
};

/// Scaling, IK toward the ratio-scaled source end-effector positions, then toe correction.
MotionClip retarget(const MotionClip& source, const Skeleton& target, const JointMap& map,
                    const RetargetOptions& options = {});

}  // namespace mstyle::motion
