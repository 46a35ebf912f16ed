#include "mstyle/features/frame.hpp"

#include <cmath>
#include <numbers>

namespace mstyle::features {

using motion::MotionClip;
using motion::MotionFrame;

double wrap_angle(double radians) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(radians + std::numbers::pi, two_pi);
  if (r < 0.0) {
    r += two_pi;
  }
  return r - std::numbers::pi;
}

Eigen::Vector2d RootFrame::forward() const { return {std::sin(heading), std::cos(heading)}; }

Eigen::Quaterniond RootFrame::rotation() const {
  return Eigen::Quaterniond(Eigen::AngleAxisd(heading, Eigen::Vector3d::UnitY()));
}

Eigen::Vector2d RootFrame::direction_to_local(const Eigen::Vector2d& w) const {
  const double c = std::cos(heading);
  const double s = std::sin(heading);
  // Inverse of the yaw rotation restricted to the (x, z) plane.
  return {c * w.x() - s * w.y(), s * w.x() + c * w.y()};
}

Eigen::Vector2d RootFrame::planar_to_local(const Eigen::Vector2d& w) const { return direction_to_local(w - position); }

Eigen::Vector3d RootFrame::to_local(const Eigen::Vector3d& world) const {
  const Eigen::Vector2d p = planar_to_local({world.x(), world.z()});
  return {p.x(), world.y(), p.y()};
}

Eigen::Vector3d RootFrame::to_world(const Eigen::Vector3d& local) const {
  const double c = std::cos(heading);
  const double s = std::sin(heading);
  return {position.x() + c * local.x() + s * local.z(), local.y(), position.y() - s * local.x() + c * local.z()};
}

RootFrame RootFrame::advanced(double dx, double dz, double dyaw) const {
  const Eigen::Vector3d p = to_world({dx, 0.0, dz});
  return RootFrame{{p.x(), p.z()}, wrap_angle(heading + dyaw)};
}

RootFrame root_frame(const MotionFrame& frame) {
  const Eigen::Vector3d f = frame.root_orientation() * Eigen::Vector3d::UnitZ();
  double heading = 0.0;
  if (std::hypot(f.x(), f.z()) > 1e-9) {
    heading = std::atan2(f.x(), f.z());
  }
  return RootFrame{{frame.root_position.x(), frame.root_position.z()}, heading};
}

std::vector<RootFrame> root_frames(const MotionClip& clip) {
  std::vector<RootFrame> out;
  out.reserve(clip.frames.size());
  for (const auto& f : clip.frames) {
    out.push_back(root_frame(f));
  }
  return out;
}

std::array<double, 6> rotation_to_6d(const Eigen::Quaterniond& q) {
  const Eigen::Matrix3d m = q.toRotationMatrix();
  return {m(0, 2), m(1, 2), m(2, 2), m(0, 1), m(1, 1), m(2, 1)};
}

Eigen::Quaterniond rotation_from_6d(std::span<const float> six) {
  Eigen::Vector3d z(six[0], six[1], six[2]);
  Eigen::Vector3d y(six[3], six[4], six[5]);
  if (z.norm() < 1e-9) {
    z = Eigen::Vector3d::UnitZ();
  }
  z.normalize();
  y -= z * z.dot(y);
  if (y.norm() < 1e-9) {
    y = z.unitOrthogonal();
  }
  y.normalize();
  Eigen::Matrix3d m;
  m.col(0) = y.cross(z);
  m.col(1) = y;
  m.col(2) = z;
  return Eigen::Quaterniond(m).normalized();
}

std::size_t sample_frame(std::size_t t, std::size_t k, double frame_time, std::size_t frame_count) {
  const double seconds = (static_cast<double>(k) - static_cast<double>(kCenterSample)) / 6.0;
  const auto offset = static_cast<long>(std::lround(seconds / frame_time));
  const long index = static_cast<long>(t) + offset;
  return static_cast<std::size_t>(std::clamp(index, 0L, static_cast<long>(frame_count) - 1));
}

Trajectory extract_trajectory(const MotionClip& clip, const std::vector<RootFrame>& roots, std::size_t t) {
  Trajectory traj;
  const RootFrame& here = roots.at(t);
  for (std::size_t k = 0; k < kTrajectorySamples; ++k) {
    const std::size_t f = sample_frame(t, k, clip.frame_time, roots.size());
    if (k == kCenterSample) {
      traj.positions[k] = Eigen::Vector2d::Zero();
      traj.directions[k] = Eigen::Vector2d(0.0, 1.0);
    } else {
      traj.positions[k] = here.planar_to_local(roots[f].position);
      traj.directions[k] = here.direction_to_local(roots[f].forward());
    }
    if (f < clip.action_labels.size()) {
      traj.gait[k][static_cast<std::size_t>(clip.action_labels[f])] = 1.0f;
    } else {
      traj.gait[k][static_cast<std::size_t>(motion::Gait::stand)] = 1.0f;
    }
  }
  return traj;
}

Trajectory extract_trajectory(const MotionClip& clip, std::size_t t) {
  return extract_trajectory(clip, root_frames(clip), t);
}

void encode_pose(const motion::Skeleton& skeleton, const MotionFrame& frame, const RootFrame& root,
                 const RootFrame* prev, const FeatureLayout& layout, std::span<float> out) {
  const std::size_t n = layout.joints;
  const Eigen::Quaterniond inv_heading = root.rotation().conjugate();
  for (std::size_t j = 0; j < n; ++j) {
    const Eigen::Vector3d p = root.to_local(frame.world_positions[j]);
    for (int a = 0; a < 3; ++a) {
      out[layout.position_offset() + 3 * j + static_cast<std::size_t>(a)] = static_cast<float>(p[a]);
    }
    const Eigen::Quaterniond q = skeleton.joint(j).parent < 0 ? inv_heading * frame.local_rotations[j]
                                                              : frame.local_rotations[j];
    const auto six = rotation_to_6d(q);
    for (std::size_t c = 0; c < 6; ++c) {
      out[layout.rotation_offset() + 6 * j + c] = static_cast<float>(six[c]);
    }
  }
  const std::size_t v = layout.velocity_offset();
  if (prev == nullptr) {
    out[v] = out[v + 1] = out[v + 2] = 0.0f;
    return;
  }
  const Eigen::Vector2d d = prev->planar_to_local(root.position);
  out[v] = static_cast<float>(d.x());
  out[v + 1] = static_cast<float>(d.y());
  out[v + 2] = static_cast<float>(wrap_angle(root.heading - prev->heading));
}

void encode_trajectory(const Trajectory& trajectory, const FeatureLayout& layout, std::span<float> out) {
  for (std::size_t k = 0; k < kTrajectorySamples; ++k) {
    const std::size_t base = layout.trajectory_offset() + kTrajectoryStride * k;
    out[base] = static_cast<float>(trajectory.positions[k].x());
    out[base + 1] = static_cast<float>(trajectory.positions[k].y());
    out[base + 2] = static_cast<float>(trajectory.directions[k].x());
    out[base + 3] = static_cast<float>(trajectory.directions[k].y());
    for (std::size_t g = 0; g < kGaitClasses; ++g) {
      out[layout.gait_offset() + kGaitClasses * k + g] = trajectory.gait[k][g];
    }
  }
}

std::vector<float> frame_features(const MotionClip& clip, const std::vector<RootFrame>& roots, std::size_t t,
                                  const FeatureLayout& layout) {
  std::vector<float> x(layout.input_dim(), 0.0f);
  encode_pose(clip.skeleton, clip.frames[t], roots[t], t > 0 ? &roots[t - 1] : nullptr, layout, x);
  encode_trajectory(extract_trajectory(clip, roots, t), layout, x);
  return x;
}

std::vector<Eigen::Vector3d> decode_positions(std::span<const float> pose, const RootFrame& root,
                                              const FeatureLayout& layout) {
  std::vector<Eigen::Vector3d> out(layout.joints);
  for (std::size_t j = 0; j < layout.joints; ++j) {
    const std::size_t b = layout.position_offset() + 3 * j;
    out[j] = root.to_world({pose[b], pose[b + 1], pose[b + 2]});
  }
  return out;
}

}  // namespace mstyle::features
