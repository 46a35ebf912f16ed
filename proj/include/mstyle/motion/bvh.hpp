#pragma once

#include "mstyle/motion/skeleton.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace mstyle::motion {

/// Euler angles in degrees for channel order `order` (e.g. "ZXY"), applied left to right.
Eigen::Quaterniond euler_to_quaternion(std::string_view order, const Eigen::Vector3d& degrees);
Eigen::Vector3d quaternion_to_euler(std::string_view order, const Eigen::Quaterniond& q);

/// Parses Biovision Hierarchy text. Root OFFSET is added to the root translation channels.
/// Translation channels on non-root joints are accepted and ignored.
MotionClip parse_bvh(std::string_view text);
std::string write_bvh(const MotionClip& clip);

MotionClip read_bvh_file(const std::filesystem::path& path);
void write_bvh_file(const std::filesystem::path& path, const MotionClip& clip);

}  // namespace mstyle::motion
