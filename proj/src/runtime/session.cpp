#include "mstyle/runtime/session.hpp"

#include "mstyle/features/phase.hpp"

#include <cmath>

namespace mstyle::runtime {

using features::RootFrame;
using features::Trajectory;

void ControlState::validate() const {
  if (!std::isfinite(speed) || speed < 0.0) {
    throw ConfigError("control speed must be finite and non-negative");
  }
  if (!direction.allFinite() || direction.norm() < 1e-9) {
    throw ConfigError("control direction must be a non-zero finite vector");
  }
}

double StyleRamp::lambda() const {
  if (frames == 0) {
    return 1.0;
  }
  return std::min(1.0, static_cast<double>(elapsed) / fps_duration);
}

void validate_style_weights(std::span<const float> weights, std::size_t styles) {
  if (weights.size() != styles) {
    throw ConfigError("style weights have " + std::to_string(weights.size()) + " entries, expected " +
                      std::to_string(styles));
  }
  double total = 0.0;
  for (const float w : weights) {
    if (!std::isfinite(w) || w < 0.0f) {
      throw ConfigError("style weights must be finite and non-negative");
    }
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-4) {
    throw ConfigError("style weights sum to " + std::to_string(total) + ", expected 1");
  }
}

features::Trajectory blend_future(const Trajectory& own, const Eigen::Vector2d& target_dir, double speed,
                                  double sample_seconds, double blend) {
  Trajectory out = own;
  double keep = 1.0;
  for (std::size_t k = features::kCenterSample + 1; k < features::kTrajectorySamples; ++k) {
    keep *= blend;
    const double ahead = static_cast<double>(k - features::kCenterSample) * sample_seconds;
    const Eigen::Vector2d target_pos = target_dir * speed * ahead;
    out.positions[k] = keep * own.positions[k] + (1.0 - keep) * target_pos;
    const Eigen::Vector2d dir = keep * own.directions[k] + (1.0 - keep) * target_dir;
    out.directions[k] = dir.norm() > 1e-9 ? Eigen::Vector2d(dir.normalized()) : target_dir;
  }
  return out;
}

void pose_to_world(const motion::Skeleton& skeleton, const features::FeatureLayout& layout,
                   std::span<const float> pose, const RootFrame& root, std::vector<Eigen::Vector3d>& positions,
                   std::vector<Eigen::Quaterniond>& rotations) {
  positions = features::decode_positions(pose, root, layout);
  motion::MotionFrame frame;
  frame.local_rotations.resize(layout.joints);
  for (std::size_t j = 0; j < layout.joints; ++j) {
    frame.local_rotations[j] = features::rotation_from_6d(pose.subspan(layout.rotation_offset() + 6 * j, 6));
  }
  frame.local_rotations[0] = root.rotation() * frame.local_rotations[0];
  frame.root_position = positions[0];
  rotations = motion::world_rotations(skeleton, frame);
}

Session::Session(models::MotionModel& model, SessionConfig config)
    : model_(model), config_(config), layout_(model.layout()) {
  if (!(config_.fps > 0.0) || !(config_.trajectory_blend >= 0.0 && config_.trajectory_blend <= 1.0)) {
    throw ConfigError("session needs fps > 0 and trajectory_blend in [0, 1]");
  }
  past_stride_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(config_.fps / 6.0)));
  ramp_.to = models::one_hot(0, model_.styles().size());
  ramp_.from = ramp_.to;
  reset(0);
}

void Session::reset(std::uint64_t seed) {
  std::vector<float> pose(model_.stats().input.mean.begin(),
                          model_.stats().input.mean.begin() + static_cast<std::ptrdiff_t>(layout_.pose_dim()));
  const std::size_t v = layout_.velocity_offset();
  pose[v] = pose[v + 1] = pose[v + 2] = 0.0f;
  Rng rng = Rng::derive(seed, 0x7068617365ULL);
  reset(seed, pose, static_cast<float>(rng.uniform()));
}

void Session::reset(std::uint64_t seed, std::span<const float> pose, float phase) {
  if (pose.size() != layout_.pose_dim()) {
    throw DimensionError("initial pose has " + std::to_string(pose.size()) + " channels, expected " +
                         std::to_string(layout_.pose_dim()));
  }
  seed_ = seed;
  t_ = 0;
  phase_ = static_cast<float>(features::wrap_phase(phase));
  root_ = RootFrame{};
  pose_.assign(pose.begin(), pose.end());
  pose_history_ = {pose_};
  root_history_ = {root_};
  gait_history_ = {control_.gait};
  predicted_.reset();
  last_experts_.clear();
  ramp_ = StyleRamp{current_style(), current_style(), 0, 0, 0.0};
  faulted_ = false;
  fault_reported_ = false;
}

void Session::set_control(const ControlState& control) {
  control.validate();
  control_ = control;
  control_.direction.normalize();
}

void Session::set_style(std::vector<float> weights, double duration_s) {
  validate_style_weights(weights, model_.styles().size());
  if (!std::isfinite(duration_s) || duration_s < 0.0) {
    throw ConfigError("transition duration must be finite and non-negative");
  }
  StyleRamp ramp;
  ramp.from = current_style();
  ramp.to = std::move(weights);
  ramp.fps_duration = config_.fps * duration_s;
  ramp.frames = static_cast<std::size_t>(std::ceil(ramp.fps_duration - 1e-9));
  ramp_ = std::move(ramp);
}

std::vector<float> Session::current_style() const {
  if (ramp_.from.empty() || ramp_.frames == 0) {
    return ramp_.to;
  }
  return models::blend_styles(ramp_.from, ramp_.to, ramp_.lambda());
}

Trajectory Session::predict_control_trajectory() const {
  Trajectory traj;
  const std::size_t center = features::kCenterSample;
  const auto gait_slot = [](motion::Gait g) { return static_cast<std::size_t>(g); };
  for (std::size_t k = 0; k < center; ++k) {
    const std::size_t back = (center - k) * past_stride_;
    const std::size_t last = root_history_.size() - 1;
    const std::size_t i = back > last ? 0 : last - back;
    traj.positions[k] = root_.planar_to_local(root_history_[i].position);
    traj.directions[k] = root_.direction_to_local(root_history_[i].forward());
    traj.gait[k][gait_slot(gait_history_[i])] = 1.0f;
  }
  traj.positions[center] = Eigen::Vector2d::Zero();
  traj.directions[center] = Eigen::Vector2d(0.0, 1.0);
  traj.gait[center][gait_slot(control_.gait)] = 1.0f;

  const Eigen::Vector2d target_dir = root_.direction_to_local(control_.direction).normalized();
  const double sample_seconds = static_cast<double>(past_stride_) / config_.fps;
  Trajectory own = traj;
  for (std::size_t k = center + 1; k < features::kTrajectorySamples; ++k) {
    const double ahead = static_cast<double>(k - center) * sample_seconds;
    own.positions[k] = predicted_ ? predicted_->positions[k] : Eigen::Vector2d(target_dir * control_.speed * ahead);
    own.directions[k] = predicted_ ? predicted_->directions[k] : target_dir;
    own.gait[k] = {};
    own.gait[k][gait_slot(control_.gait)] = 1.0f;
  }
  traj = blend_future(own, target_dir, control_.speed, sample_seconds, config_.trajectory_blend);
  return traj;
}

std::vector<float> Session::build_input() const {
  std::vector<float> x(layout_.input_dim(), 0.0f);
  std::copy(pose_.begin(), pose_.end(), x.begin());
  features::encode_trajectory(predict_control_trajectory(), layout_, x);
  return x;
}

Frame Session::make_frame(const std::vector<std::vector<float>>& experts) const {
  Frame frame;
  frame.t = t_;
  frame.root = root_;
  frame.pose = pose_;
  pose_to_world(model_.skeleton(), layout_, pose_, root_, frame.positions, frame.rotations);
  frame.experts = experts;
  frame.lambda = ramp_.lambda();
  frame.phase = phase_;
  frame.style = current_style();
  frame.faulted = faulted_;
  return frame;
}

Frame Session::tick() {
  if (faulted_) {
    ++t_;
    Frame frame = make_frame(last_experts_);
    if (!fault_reported_) {
      fault_reported_ = true;
      frame.fault = "model failure; reset required";
    }
    return frame;
  }
  if (!ramp_.done()) {
    ++ramp_.elapsed;
  }
  const std::vector<float> style = current_style();
  const std::vector<float> input = build_input();
  const std::vector<std::vector<float>> history(pose_history_.begin(), pose_history_.end());

  models::StepResult result;
  try {
    result = model_.step({input, phase_, &history, style});
  } catch (const NumericError& e) {
    faulted_ = true;
    fault_reported_ = true;
    ++t_;
    Frame frame = make_frame(last_experts_);
    frame.fault = e.what();
    return frame;
  }

  const auto& out = result.output;
  const std::size_t v = layout_.velocity_offset();
  root_ = root_.advanced(out[v], out[v + 1], out[v + 2]);
  pose_.assign(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(layout_.pose_dim()));
  phase_ = static_cast<float>(features::wrap_phase(phase_ + out[layout_.phase_delta_channel()]));

  Trajectory predicted;
  for (std::size_t k = 0; k < features::kTrajectorySamples; ++k) {
    const std::size_t base = layout_.trajectory_offset() + features::kTrajectoryStride * k;
    predicted.positions[k] = {out[base], out[base + 1]};
    predicted.directions[k] = {out[base + 2], out[base + 3]};
  }
  predicted_ = predicted;

  const std::size_t pose_capacity = model_.config().temporal() ? model_.config().window() : 1;
  const std::size_t root_capacity = features::kCenterSample * past_stride_ + 1;
  pose_history_.push_back(pose_);
  root_history_.push_back(root_);
  gait_history_.push_back(control_.gait);
  while (pose_history_.size() > pose_capacity) {
    pose_history_.pop_front();
  }
  while (root_history_.size() > root_capacity) {
    root_history_.pop_front();
    gait_history_.pop_front();
  }
  last_experts_ = std::move(result.experts);
  ++t_;
  return make_frame(last_experts_);
}

}  // namespace mstyle::runtime
