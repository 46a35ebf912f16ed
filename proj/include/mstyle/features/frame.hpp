#pragma once

#include "mstyle/features/layout.hpp"
#include "mstyle/motion/skeleton.hpp"

#include <array>
#include <span>
#include <vector>

namespace mstyle::features {

/// Ground-projected character frame: planar position and heading about +Y.
/// Heading 0 faces +Z; forward is (sin h, cos h) in (x, z).
struct RootFrame {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double heading = 0.0;

  Eigen::Vector3d to_local(const Eigen::Vector3d& world) const;
  Eigen::Vector3d to_world(const Eigen::Vector3d& local) const;
  Eigen::Vector2d planar_to_local(const Eigen::Vector2d& world) const;
  Eigen::Vector2d direction_to_local(const Eigen::Vector2d& world) const;
  Eigen::Vector2d forward() const;
  Eigen::Quaterniond rotation() const;

  /// Applies a root velocity (Δx, Δz in this frame, Δyaw).
  RootFrame advanced(double dx, double dz, double dyaw) const;
};

double wrap_angle(double radians);

RootFrame root_frame(const motion::MotionFrame& frame);
std::vector<RootFrame> root_frames(const motion::MotionClip& clip);

/// Forward (local +Z) and up (local +Y) columns of a rotation.
std::array<double, 6> rotation_to_6d(const Eigen::Quaterniond& q);
/// Gram-Schmidt reconstruction from forward/up columns.
Eigen::Quaterniond rotation_from_6d(std::span<const float> six);

struct Trajectory {
  std::array<Eigen::Vector2d, kTrajectorySamples> positions;
  std::array<Eigen::Vector2d, kTrajectorySamples> directions;
  std::array<std::array<float, kGaitClasses>, kTrajectorySamples> gait{};
};

/// Frame index of trajectory sample `k` around frame `t`, clamped to the clip.
std::size_t sample_frame(std::size_t t, std::size_t k, double frame_time, std::size_t frame_count);

Trajectory extract_trajectory(const motion::MotionClip& clip, std::size_t t);
Trajectory extract_trajectory(const motion::MotionClip& clip, const std::vector<RootFrame>& roots, std::size_t t);

/// Writes the pose channels m_t; `prev` supplies the root velocity (zero when absent).
void encode_pose(const motion::Skeleton& skeleton, const motion::MotionFrame& frame, const RootFrame& root,
                 const RootFrame* prev, const FeatureLayout& layout, std::span<float> out);
void encode_trajectory(const Trajectory& trajectory, const FeatureLayout& layout, std::span<float> out);

/// Full input vector X_t of frame t.
std::vector<float> frame_features(const motion::MotionClip& clip, const std::vector<RootFrame>& roots, std::size_t t,
                                  const FeatureLayout& layout);

/// World joint positions recovered from pose channels relative to `root`.
std::vector<Eigen::Vector3d> decode_positions(std::span<const float> pose, const RootFrame& root,
                                              const FeatureLayout& layout);

}  // namespace mstyle::features
