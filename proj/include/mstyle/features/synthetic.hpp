#pragma once

#include "mstyle/motion/skeleton.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mstyle::features {

/// Procedural walking style. Lengths in meters, angles in radians.
struct StyleSpec {
  std::string name;
  double stride_length = 1.3;  // distance per full gait cycle
  double cadence = 1.0;        // gait cycles per second
  double arm_swing = 0.3;      // shoulder swing amplitude
  double torso_lean = 0.0;     // forward spine pitch
  double bounce = 0.02;        // vertical hip oscillation amplitude
};

struct SyntheticConfig {
  std::vector<StyleSpec> styles;
  double seconds_per_style = 15.0;  // duration of each clip
  double fps = 60.0;
  std::uint64_t seed = 1;  // noise of the i-th clip of every style is drawn from derive(seed, i)
  std::size_t clips_per_style = 2;  // alternating counterclockwise / clockwise circles
  double stand_seconds = 1.0;
  double ramp_seconds = 1.0;
  double path_radius = 3.0;
  double noise = 1.0;  // scale of per-cycle variation

  void validate() const;
};

/// Four clearly separable styles used by the tools and the acceptance suite.
std::vector<StyleSpec> default_styles();

std::vector<motion::MotionClip> generate_synthetic_corpus(const SyntheticConfig& config);
std::vector<motion::MotionClip> generate_synthetic_corpus(const std::vector<StyleSpec>& styles,
                                                          double seconds_per_style, double fps, std::uint64_t seed);

/// Contact thresholds used for labeling: height above the flat-foot rest height and planar speed.
inline constexpr double kContactHeight = 0.02;
inline constexpr double kContactSpeed = 0.1;

/// Labels heel (ankle joint) and toe contacts from joint heights and planar speeds.
std::vector<motion::ContactLabels> label_contacts(const motion::MotionClip& clip, double ground = 0.0);

}  // namespace mstyle::features
