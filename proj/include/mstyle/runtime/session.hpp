#pragma once

#include "mstyle/features/frame.hpp"
#include "mstyle/models/model.hpp"

#include <deque>
#include <optional>
#include <string>
#include <vector>

namespace mstyle::runtime {

/// User intent for the next frames.
struct ControlState {
  Eigen::Vector2d direction{0.0, 1.0};  // world (x, z), unit length
  double speed = 0.0;                   // m/s
  motion::Gait gait = motion::Gait::stand;

  /// Throws ConfigError for a negative or non-finite speed or a zero direction.
  void validate() const;
};

/// Linear style blend from `from` to `to` over `frames` ticks.
struct StyleRamp {
  std::vector<float> from;
  std::vector<float> to;
  std::size_t frames = 0;
  std::size_t elapsed = 0;
  double fps_duration = 0.0;  // fps * duration, the ramp denominator

  double lambda() const;
  bool done() const { return elapsed >= frames; }
};

/// Throws ConfigError unless weights are finite, non-negative, sum to 1 and match `styles`.
void validate_style_weights(std::span<const float> weights, std::size_t styles);

struct SessionConfig {
  double fps = 60.0;
  /// Weight left on the model's own future trajectory, per future sample step.
  double trajectory_blend = 0.5;
};

/// One generated frame.
struct Frame {
  std::uint64_t t = 0;
  features::RootFrame root;
  std::vector<float> pose;                     // pose channels relative to `root`
  std::vector<Eigen::Vector3d> positions;      // world joint positions
  std::vector<Eigen::Quaterniond> rotations;   // world joint rotations
  std::vector<std::vector<float>> experts;     // post-modulation expert weights per layer
  double lambda = 1.0;
  float phase = 0.0f;
  std::vector<float> style;                    // embedding used for this frame
  bool faulted = false;
  std::optional<std::string> fault;            // set on the first faulted tick only
};

/// Interactive generation state around one model.
///
/// Not thread-safe; one session is driven by one loop.
class Session {
 public:
  Session(models::MotionModel& model, SessionConfig config = {});

  /// Starts from the mean pose at the origin. The seed picks the initial phase.
  void reset(std::uint64_t seed);
  /// Starts from the given pose channels (relative to the origin frame) and phase.
  void reset(std::uint64_t seed, std::span<const float> pose, float phase);

  void set_control(const ControlState& control);
  /// Ramps from the current embedding to `weights` over `duration_s` seconds.
  void set_style(std::vector<float> weights, double duration_s);

  /// Advances one frame. After a model failure the last valid pose is repeated
  /// until reset; the failure message is reported on the first such frame.
  Frame tick();

  /// Past samples from recorded roots, origin at the center, future samples
  /// blended from the model's last prediction toward the control target.
  features::Trajectory predict_control_trajectory() const;

  const ControlState& control() const { return control_; }
  const StyleRamp& ramp() const { return ramp_; }
  std::vector<float> current_style() const;
  const features::RootFrame& root() const { return root_; }
  const std::vector<float>& pose() const { return pose_; }
  std::uint64_t frame_index() const { return t_; }
  bool faulted() const { return faulted_; }
  /// Trajectory the model predicted for the current frame, if any.
  const std::optional<features::Trajectory>& predicted_trajectory() const { return predicted_; }
  std::uint64_t seed() const { return seed_; }
  models::MotionModel& model() { return model_; }
  const SessionConfig& config() const { return config_; }

 private:
  std::vector<float> build_input() const;
  Frame make_frame(const std::vector<std::vector<float>>& experts) const;

  models::MotionModel& model_;
  SessionConfig config_;
  features::FeatureLayout layout_;
  std::size_t past_stride_ = 10;  // frames between trajectory samples

  ControlState control_;
  StyleRamp ramp_;
  std::uint64_t seed_ = 0;
  std::uint64_t t_ = 0;
  float phase_ = 0.0f;
  features::RootFrame root_;
  std::vector<float> pose_;
  std::deque<std::vector<float>> pose_history_;        // oldest first, ends at the current pose
  std::deque<features::RootFrame> root_history_;       // oldest first, ends at the current root
  std::deque<motion::Gait> gait_history_;
  std::optional<features::Trajectory> predicted_;      // model's trajectory for the current frame
  std::vector<std::vector<float>> last_experts_;
  bool faulted_ = false;
  bool fault_reported_ = false;
};

/// Future samples (after the center) pulled from `own` toward a straight walk
/// along `target_dir` (root frame) at `speed`. Sample k after the center keeps
/// blend^k of `own` and sits k * sample_seconds ahead on the target line.
/// Past and center samples are copied from `own`.
features::Trajectory blend_future(const features::Trajectory& own, const Eigen::Vector2d& target_dir, double speed,
                                  double sample_seconds, double blend);

/// Frame quantities in world space from pose channels relative to `root`.
void pose_to_world(const motion::Skeleton& skeleton, const features::FeatureLayout& layout,
                   std::span<const float> pose, const features::RootFrame& root,
                   std::vector<Eigen::Vector3d>& positions, std::vector<Eigen::Quaterniond>& rotations);

}  // namespace mstyle::runtime
