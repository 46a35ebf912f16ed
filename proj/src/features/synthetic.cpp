#include "mstyle/features/synthetic.hpp"

#include "mstyle/numerics/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace mstyle::features {

using motion::Gait;
using motion::MotionClip;
using motion::MotionFrame;
using motion::Skeleton;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kStandPhase = 0.05;  // both feet planted
constexpr double kStanceFraction = 0.6;
constexpr double kHeelOffStart = 0.4;
constexpr double kHeelOffPitch = 0.5;
constexpr double kSwingClearance = 0.07;
constexpr double kSway = 0.025;
constexpr double kPelvicYaw = 0.08;
constexpr double kReachFraction = 0.985;

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

double smoothstep_integral(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * x - 0.5 * x * x * x * x;
}

Eigen::Quaterniond rot(const Eigen::Vector3d& axis, double angle) {
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis));
}

Eigen::Vector3d forward_of(double heading) { return {std::sin(heading), 0.0, std::cos(heading)}; }
Eigen::Vector3d left_of(double heading) { return {std::cos(heading), 0.0, -std::sin(heading)}; }

/// Soft minimum that never exceeds either argument.
double soft_min(double a, double b, double k) {
  const double m = std::min(a, b);
  return m - k * std::log(std::exp((m - a) / k) + std::exp((m - b) / k));
}

struct Footprint {
  Eigen::Vector3d ankle;  // flat-foot ankle position
  double yaw;
};

struct FootPose {
  Eigen::Vector3d ankle;
  Eigen::Quaterniond rotation;
};

class ClipBuilder {
 public:
  ClipBuilder(const StyleSpec& style, const SyntheticConfig& cfg, std::size_t clip_index, bool clockwise)
      : style_(style), cfg_(cfg), skeleton_(motion::humanoid18()) {
    const auto& j = skeleton_;
    idx_ = {j.index_of("Hips"),        j.index_of("Spine"),      j.index_of("Chest"),   j.index_of("Head"),
            j.index_of("LeftArm"),     j.index_of("LeftForeArm"), j.index_of("LeftHand"), j.index_of("RightArm"),
            j.index_of("RightForeArm"), j.index_of("RightHand"), j.index_of("LeftUpLeg"), j.index_of("LeftLeg"),
            j.index_of("LeftFoot"),    j.index_of("LeftToe"),    j.index_of("RightUpLeg"), j.index_of("RightLeg"),
            j.index_of("RightFoot"),   j.index_of("RightToe")};
    upper_ = -j.joint(idx_.left_leg).offset.y();
    lower_ = -j.joint(idx_.left_foot).offset.y();
    toe_offset_ = j.joint(idx_.left_toe).offset;
    hip_offset_ = j.joint(idx_.left_upleg).offset;
    ankle_height_ = -toe_offset_.y();

    Rng rng(Rng::derive(cfg.seed, clip_index));
    heading0_ = rng.uniform(-std::numbers::pi, std::numbers::pi);
    turn_ = clockwise ? -1.0 : 1.0;

    const double dt = 1.0 / cfg.fps;
    frames_ = static_cast<std::size_t>(std::lround(cfg.seconds_per_style * cfg.fps));
    t_walk0_ = cfg.stand_seconds;
    t_walk1_ = static_cast<double>(frames_ - 1) * dt - cfg.stand_seconds;
    const double cruise_time = t_walk1_ - t_walk0_ - cfg.ramp_seconds;
    const double nominal = style.stride_length * style.cadence * cruise_time;
    const double half = 0.5 * style.stride_length;
    const double halves = std::max(2.0, std::round(nominal / half));
    distance_ = halves * half;
    cruise_speed_ = distance_ / cruise_time;

    cycles_ = static_cast<int>(std::ceil(distance_ / style.stride_length)) + 4;
    const auto count = static_cast<std::size_t>(cycles_ + 4);
    for (auto* v : {&long_noise_[0], &long_noise_[1], &lat_noise_[0], &lat_noise_[1], &arm_noise_, &lift_noise_}) {
      v->resize(count);
    }
    for (std::size_t k = 0; k < count; ++k) {
      for (int side = 0; side < 2; ++side) {
        long_noise_[side][k] = 0.015 * cfg.noise * rng.normal();
        lat_noise_[side][k] = 0.008 * cfg.noise * rng.normal();
      }
      arm_noise_[k] = 1.0 + 0.06 * cfg.noise * rng.normal();
      lift_noise_[k] = 0.01 * cfg.noise * rng.normal();
    }
  }

  MotionClip build(const std::string& name) {
    MotionClip clip;
    clip.skeleton = skeleton_;
    clip.frame_time = 1.0 / cfg_.fps;
    clip.name = name;
    clip.style_label = style_.name;
    clip.frames.reserve(frames_);
    for (std::size_t i = 0; i < frames_; ++i) {
      const double t = static_cast<double>(i) * clip.frame_time;
      clip.frames.push_back(pose_at(t));
      clip.action_labels.push_back(ratio(t) > 0.0 ? Gait::walk : Gait::stand);
    }
    clip.contact_labels = label_contacts(clip);
    return clip;
  }

 private:
  struct Indices {
    std::size_t hips, spine, chest, head, left_arm, left_forearm, left_hand, right_arm, right_forearm, right_hand,
        left_upleg, left_leg, left_foot, left_toe, right_upleg, right_leg, right_foot, right_toe;
  };

  double arc(double t) const {
    const double ramp = cfg_.ramp_seconds;
    if (t <= t_walk0_) {
      return 0.0;
    }
    if (t >= t_walk1_) {
      return distance_;
    }
    if (t < t_walk0_ + ramp) {
      return cruise_speed_ * ramp * smoothstep_integral((t - t_walk0_) / ramp);
    }
    if (t > t_walk1_ - ramp) {
      return distance_ - cruise_speed_ * ramp * smoothstep_integral((t_walk1_ - t) / ramp);
    }
    return cruise_speed_ * (0.5 * ramp + (t - t_walk0_ - ramp));
  }

  double ratio(double t) const {
    if (t <= t_walk0_ || t >= t_walk1_) {
      return 0.0;
    }
    const double ramp = cfg_.ramp_seconds;
    return std::min(smoothstep((t - t_walk0_) / ramp), smoothstep((t_walk1_ - t) / ramp));
  }

  double heading_at(double s) const { return heading0_ + turn_ * s / cfg_.path_radius; }

  Eigen::Vector3d path_at(double s) const {
    // Circle through the origin, tangent to heading0 at s = 0.
    const Eigen::Vector3d centre = turn_ * cfg_.path_radius * left_of(heading0_);
    return centre - turn_ * cfg_.path_radius * left_of(heading_at(s));
  }

  double noise_at(const std::vector<double>& v, int k) const {
    const int i = std::clamp(k + 2, 0, static_cast<int>(v.size()) - 1);
    return v[static_cast<std::size_t>(i)];
  }

  double smooth_noise(const std::vector<double>& v, double phase) const {
    const double k = std::floor(phase);
    const double a = smoothstep(phase - k);
    return (1.0 - a) * noise_at(v, static_cast<int>(k)) + a * noise_at(v, static_cast<int>(k) + 1);
  }

  Footprint footprint(int side, int k) const {
    const double mid_stance = static_cast<double>(k) + 0.3 + (side == 0 ? 0.0 : 0.5);
    const double s = (mid_stance - kStandPhase) * style_.stride_length + noise_at(long_noise_[side], k);
    const double heading = heading_at(s);
    const double lateral = (side == 0 ? 1.0 : -1.0) * (hip_offset_.x() + noise_at(lat_noise_[side], k));
    Eigen::Vector3d ankle = path_at(s) + lateral * left_of(heading);
    ankle.y() = ankle_height_;
    return {ankle, heading};
  }

  FootPose stance_pose(const Footprint& fp, double pitch) const {
    const Eigen::Quaterniond yaw = rot(Eigen::Vector3d::UnitY(), fp.yaw);
    const Eigen::Vector3d toe = fp.ankle + yaw * toe_offset_;
    const Eigen::Quaterniond r = yaw * rot(Eigen::Vector3d::UnitX(), pitch);
    return {toe - r * toe_offset_, r};
  }

  FootPose foot_pose(int side, double phase, double r) const {
    const double local = phase - (side == 0 ? 0.0 : 0.5);
    const double kf = std::floor(local);
    const int k = static_cast<int>(kf);
    const double u = local - kf;
    const Footprint here = footprint(side, k);
    const double off_pitch = kHeelOffPitch * r;
    if (u < kStanceFraction) {
      const double pitch = u < kHeelOffStart ? 0.0 : off_pitch * smoothstep((u - kHeelOffStart) / (kStanceFraction - kHeelOffStart));
      return stance_pose(here, pitch);
    }
    const double w = (u - kStanceFraction) / (1.0 - kStanceFraction);
    const double e = smoothstep(w);
    const FootPose from = stance_pose(here, off_pitch);
    const Footprint next = footprint(side, k + 1);
    Eigen::Vector3d ankle = (1.0 - e) * from.ankle + e * next.ankle;
    ankle.y() = (1.0 - e) * from.ankle.y() + e * next.ankle.y() +
                (kSwingClearance + noise_at(lift_noise_, k)) * std::sin(std::numbers::pi * w);
    const double yaw = here.yaw + e * (next.yaw - here.yaw);
    const double pitch = off_pitch * (1.0 - e);
    return {ankle, rot(Eigen::Vector3d::UnitY(), yaw) * rot(Eigen::Vector3d::UnitX(), pitch)};
  }

  /// Two-bone leg: returns world rotations of the thigh and shin reaching `ankle` from `hip`.
  std::pair<Eigen::Quaterniond, Eigen::Quaterniond> leg_rotations(const Eigen::Vector3d& hip, const Eigen::Vector3d& ankle,
                                                                  const Eigen::Vector3d& pole) const {
    Eigen::Vector3d to_ankle = ankle - hip;
    double d = to_ankle.norm();
    const double reach = upper_ + lower_;
    d = std::clamp(d, 1e-6, reach * (1.0 - 1e-9));
    const Eigen::Vector3d u = to_ankle.normalized();
    Eigen::Vector3d v = pole - u * u.dot(pole);
    if (v.norm() < 1e-9) {
      v = u.unitOrthogonal();
    }
    v.normalize();
    const double cos_a = std::clamp((upper_ * upper_ + d * d - lower_ * lower_) / (2.0 * upper_ * d), -1.0, 1.0);
    const double a = std::acos(cos_a);
    const Eigen::Vector3d knee = hip + upper_ * (std::cos(a) * u + std::sin(a) * v);
    const Eigen::Vector3d foot = hip + d * u;
    auto frame = [&](const Eigen::Vector3d& bone) {
      const Eigen::Vector3d y = -bone.normalized();
      Eigen::Vector3d z = pole - y * y.dot(pole);
      if (z.norm() < 1e-9) {
        z = y.unitOrthogonal();
      }
      z.normalize();
      Eigen::Matrix3d m;
      m.col(0) = y.cross(z);
      m.col(1) = y;
      m.col(2) = z;
      return Eigen::Quaterniond(m).normalized();
    };
    return {frame(knee - hip), frame(foot - knee)};
  }

  MotionFrame pose_at(double t) const {
    const double r = ratio(t);
    const double s = arc(t);
    const double phase = kStandPhase + s / style_.stride_length;
    const double heading = heading_at(s);
    const double c1 = std::cos(kTwoPi * phase);
    const double s1 = std::sin(kTwoPi * phase);

    const double pelvic_yaw = -kPelvicYaw * r * c1;
    const Eigen::Quaterniond hips_rot = rot(Eigen::Vector3d::UnitY(), heading + pelvic_yaw);
    Eigen::Vector3d root = path_at(s) + kSway * r * s1 * left_of(heading);

    const FootPose left = foot_pose(0, phase, r);
    const FootPose right = foot_pose(1, phase, r);

    // Hip height: nominal bounce, limited so both ankles stay reachable.
    const double leg = upper_ + lower_;
    const double nominal = ankle_height_ - hip_offset_.y() + 0.96 * leg +
                           style_.bounce * r * std::cos(2.0 * kTwoPi * (phase - 0.3));
    double height = nominal;
    const double radius = kReachFraction * leg;
    for (const auto& [foot, sign] : {std::pair{&left, 1.0}, std::pair{&right, -1.0}}) {
      Eigen::Vector3d off = hip_offset_;
      off.x() *= sign;
      const Eigen::Vector3d hip_xz = root + hips_rot * Eigen::Vector3d(off.x(), 0.0, off.z());
      const double dh = std::hypot(hip_xz.x() - foot->ankle.x(), hip_xz.z() - foot->ankle.z());
      const double limit = foot->ankle.y() - off.y() + std::sqrt(std::max(radius * radius - dh * dh, 0.0));
      height = soft_min(height, limit, 0.008);
    }
    root.y() = height;

    MotionFrame f;
    f.root_position = root;
    f.local_rotations.assign(skeleton_.size(), Eigen::Quaterniond::Identity());
    f.local_rotations[idx_.hips] = hips_rot;

    const double lean = style_.torso_lean;
    const Eigen::Vector3d X = Eigen::Vector3d::UnitX();
    const Eigen::Vector3d Y = Eigen::Vector3d::UnitY();
    const Eigen::Vector3d Z = Eigen::Vector3d::UnitZ();
    f.local_rotations[idx_.spine] = rot(Y, -0.6 * pelvic_yaw) * rot(X, lean + 0.04 * r);
    f.local_rotations[idx_.chest] = rot(Y, -0.4 * pelvic_yaw) * rot(X, 0.3 * lean);
    f.local_rotations[idx_.head] = rot(X, -1.0 * lean);

    const double arm = style_.arm_swing * smooth_noise(arm_noise_, phase);
    const double fwd_left = 0.5 - 0.5 * c1;
    const double fwd_right = 0.5 + 0.5 * c1;
    f.local_rotations[idx_.left_arm] = rot(X, arm * r * c1) * rot(Z, 0.12);
    f.local_rotations[idx_.right_arm] = rot(X, -arm * r * c1) * rot(Z, -0.12);
    f.local_rotations[idx_.left_forearm] = rot(X, -(0.15 + 0.4 * style_.arm_swing + 0.3 * arm * r * fwd_left));
    f.local_rotations[idx_.right_forearm] = rot(X, -(0.15 + 0.4 * style_.arm_swing + 0.3 * arm * r * fwd_right));
    f.local_rotations[idx_.left_hand] = rot(X, -0.1);
    f.local_rotations[idx_.right_hand] = rot(X, -0.1);

    const Eigen::Vector3d pole = forward_of(heading);
    const struct {
      const FootPose* foot;
      double sign;
      std::size_t upleg, leg, ankle;
    } legs[] = {{&left, 1.0, idx_.left_upleg, idx_.left_leg, idx_.left_foot},
                {&right, -1.0, idx_.right_upleg, idx_.right_leg, idx_.right_foot}};
    for (const auto& l : legs) {
      Eigen::Vector3d off = hip_offset_;
      off.x() *= l.sign;
      const Eigen::Vector3d hip = root + hips_rot * off;
      const auto [thigh, shin] = leg_rotations(hip, l.foot->ankle, pole);
      f.local_rotations[l.upleg] = (hips_rot.conjugate() * thigh).normalized();
      f.local_rotations[l.leg] = (thigh.conjugate() * shin).normalized();
      f.local_rotations[l.ankle] = (shin.conjugate() * l.foot->rotation).normalized();
    }
    motion::forward_kinematics(skeleton_, f);
    return f;
  }

  StyleSpec style_;
  SyntheticConfig cfg_;
  Skeleton skeleton_;
  Indices idx_{};
  double upper_ = 0.45;
  double lower_ = 0.45;
  Eigen::Vector3d toe_offset_;
  Eigen::Vector3d hip_offset_;
  double ankle_height_ = 0.07;
  double heading0_ = 0.0;
  double turn_ = 1.0;
  std::size_t frames_ = 0;
  double t_walk0_ = 0.0;
  double t_walk1_ = 0.0;
  double distance_ = 0.0;
  double cruise_speed_ = 0.0;
  int cycles_ = 0;
  std::vector<double> long_noise_[2];
  std::vector<double> lat_noise_[2];
  std::vector<double> arm_noise_;
  std::vector<double> lift_noise_;
};

}  // namespace

void SyntheticConfig::validate() const {
  if (styles.size() < 2) {
    throw ConfigError("synthetic corpus needs at least 2 styles, got " + std::to_string(styles.size()));
  }
  if (!(fps >= 30.0)) {
    throw ConfigError("synthetic corpus needs fps >= 30");
  }
  std::set<std::string> names;
  for (const auto& s : styles) {
    if (s.name.empty() || !names.insert(s.name).second) {
      throw ConfigError("style names must be unique and non-empty");
    }
    if (s.stride_length <= 0.0 && s.cadence > 0.0) {
      throw ConfigError("style '" + s.name + "' is degenerate: stride_length 0 with cadence > 0");
    }
    if (!(s.stride_length > 0.0) || !(s.cadence > 0.0)) {
      throw ConfigError("style '" + s.name + "' needs positive stride_length and cadence");
    }
    if (s.stride_length > 2.0) {
      throw ConfigError("style '" + s.name + "' stride_length exceeds the 2 m the leg can reach");
    }
  }
  if (clips_per_style == 0) {
    throw ConfigError("clips_per_style must be at least 1");
  }
  if (!(path_radius > 0.5)) {
    throw ConfigError("path_radius must exceed 0.5 m");
  }
  if (!(stand_seconds >= 0.0) || !(ramp_seconds > 0.0) ||
      !(seconds_per_style > 2.0 * stand_seconds + 2.0 * ramp_seconds + 1.0)) {
    throw ConfigError("seconds_per_style must exceed both stand segments, both ramps and one second of walking");
  }
}

std::vector<StyleSpec> default_styles() {
  return {
      {"neutral", 1.30, 0.95, 0.35, 0.05, 0.015},
      {"proud", 1.45, 0.85, 0.22, -0.15, 0.010},
      {"tired", 0.95, 0.75, 0.08, 0.38, 0.006},
      {"bouncy", 1.10, 1.25, 0.60, 0.00, 0.040},
  };
}

std::vector<MotionClip> generate_synthetic_corpus(const SyntheticConfig& config) {
  config.validate();
  std::vector<MotionClip> clips;
  for (const auto& style : config.styles) {
    for (std::size_t c = 0; c < config.clips_per_style; ++c) {
      const bool clockwise = c % 2 == 1;
      ClipBuilder builder(style, config, c, clockwise);
      clips.push_back(builder.build(style.name + (clockwise ? "_cw" : "_ccw") + std::to_string(c / 2)));
    }
  }
  return clips;
}

std::vector<MotionClip> generate_synthetic_corpus(const std::vector<StyleSpec>& styles, double seconds_per_style,
                                                  double fps, std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.styles = styles;
  cfg.seconds_per_style = seconds_per_style;
  cfg.fps = fps;
  cfg.seed = seed;
  return generate_synthetic_corpus(cfg);
}

std::vector<motion::ContactLabels> label_contacts(const MotionClip& clip, double ground) {
  const Skeleton& sk = clip.skeleton;
  std::array<std::size_t, 4> joints{};
  for (std::size_t i = 0; i < 4; ++i) {
    joints[i] = sk.index_of(motion::kContactJoints[i]);
  }
  // Flat-foot rest heights relative to the lowest of the two toe joints.
  const MotionFrame rest = motion::rest_frame(sk);
  const double toe_rest = std::min(rest.world_positions[joints[1]].y(), rest.world_positions[joints[3]].y());
  std::array<double, 4> rest_height{};
  for (std::size_t i = 0; i < 4; ++i) {
    rest_height[i] = rest.world_positions[joints[i]].y() - toe_rest;
  }
  const std::size_t n = clip.frames.size();
  std::vector<motion::ContactLabels> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t a = t > 0 ? t - 1 : t;
    const std::size_t b = t + 1 < n ? t + 1 : t;
    const double span = static_cast<double>(b - a) * clip.frame_time;
    for (std::size_t i = 0; i < 4; ++i) {
      const Eigen::Vector3d& p = clip.frames[t].world_positions[joints[i]];
      const double height = p.y() - ground - rest_height[i];
      double speed = 0.0;
      if (span > 0.0) {
        const Eigen::Vector3d d = clip.frames[b].world_positions[joints[i]] - clip.frames[a].world_positions[joints[i]];
        speed = std::hypot(d.x(), d.z()) / span;
      }
      out[t][i] = height < kContactHeight && speed < kContactSpeed;
    }
  }
  return out;
}

}  // namespace mstyle::features
