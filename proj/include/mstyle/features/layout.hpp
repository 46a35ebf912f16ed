#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mstyle::features {

inline constexpr std::size_t kTrajectorySamples = 13;
inline constexpr std::size_t kCenterSample = 6;
inline constexpr std::size_t kGaitClasses = 3;
inline constexpr std::size_t kTrajectoryStride = 4;  // pos x, pos z, dir x, dir z

/// Channel layout of one frame's feature vector and of the regression target.
///
/// Input  X_t: [pose m_t | root trajectory r_t | gait trajectory γ_t]
/// Target Y_t: [pose m_{t+1} | r_{t+1} | γ_{t+1} | phase increment]
///
/// Pose m_t: root-relative joint positions (3 per joint), 6-D rotations
/// (forward then up column, 6 per joint), root velocity (Δx, Δz, Δyaw).
struct FeatureLayout {
  std::size_t joints = 18;

  std::size_t position_offset() const { return 0; }
  std::size_t rotation_offset() const { return 3 * joints; }
  std::size_t velocity_offset() const { return 9 * joints; }
  std::size_t pose_dim() const { return 9 * joints + 3; }
  /// Positions and rotations only; the channels scored by replay error.
  std::size_t pose_error_dim() const { return 9 * joints; }

  std::size_t trajectory_offset() const { return pose_dim(); }
  std::size_t trajectory_dim() const { return kTrajectorySamples * kTrajectoryStride; }
  std::size_t gait_offset() const { return trajectory_offset() + trajectory_dim(); }
  std::size_t gait_dim() const { return kTrajectorySamples * kGaitClasses; }

  std::size_t input_dim() const { return gait_offset() + gait_dim(); }
  std::size_t phase_delta_channel() const { return input_dim(); }
  std::size_t output_dim() const { return input_dim() + 1; }

  std::vector<std::string> input_channel_names(const std::vector<std::string>& joint_names) const;
  std::vector<std::string> output_channel_names(const std::vector<std::string>& joint_names) const;

  friend bool operator==(const FeatureLayout&, const FeatureLayout&) = default;
};

}  // namespace mstyle::features
