#include "mstyle/features/synthetic.hpp"
#include "mstyle/motion/bvh.hpp"
#include "mstyle/motion/corpus.hpp"
#include "mstyle/motion/retarget.hpp"
#include "mstyle/numerics/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <numbers>

using namespace mstyle;
using namespace mstyle::motion;

namespace {

constexpr double kPi = std::numbers::pi;

const char* kTwoJoint = R"(HIERARCHY
ROOT Hips
{
  OFFSET 0 0 0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
  JOINT Chest
  {
    OFFSET 0 1 0
    CHANNELS 3 Zrotation Xrotation Yrotation
    End Site
    {
      OFFSET 0 1 0
    }
  }
}
MOTION
Frames: 1
Frame Time: 0.0166667
0 0 0 0 0 0 0 0 0
)";

const char* kThreeJoint = R"(HIERARCHY
ROOT Root
{
  OFFSET 0 0 0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
  JOINT Elbow
  {
    OFFSET 0 1 0
    CHANNELS 3 Zrotation Xrotation Yrotation
    JOINT Hand
    {
      OFFSET 1 0 0
      CHANNELS 3 Zrotation Xrotation Yrotation
      End Site
      {
        OFFSET 0.2 0 0
      }
    }
  }
}
MOTION
Frames: 2
Frame Time: 0.0333333
0 0 0 0 0 0 0 0 0 0 0 0
1 2 3 0 0 0 90 0 0 0 0 0
)";

Eigen::Quaterniond random_rotation(Rng& rng, double max_angle = kPi * 0.9) {
  Eigen::Vector3d axis(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  if (axis.norm() < 1e-6) {
    axis = Eigen::Vector3d::UnitY();
  }
  return Eigen::Quaterniond(Eigen::AngleAxisd(rng.uniform(-max_angle, max_angle), axis.normalized()));
}

MotionClip random_clip(const Skeleton& skeleton, std::size_t frames, Rng& rng, double max_angle = kPi * 0.9) {
  MotionClip clip;
  clip.skeleton = skeleton;
  clip.frame_time = 1.0 / 60.0;
  for (std::size_t t = 0; t < frames; ++t) {
    MotionFrame f;
    f.root_position = Eigen::Vector3d(rng.uniform(-2, 2), rng.uniform(0.5, 1.5), rng.uniform(-2, 2));
    for (std::size_t j = 0; j < skeleton.size(); ++j) {
      f.local_rotations.push_back(random_rotation(rng, max_angle));
    }
    forward_kinematics(skeleton, f);
    clip.frames.push_back(f);
  }
  return clip;
}

double rotation_distance(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
  return (a.toRotationMatrix() - b.toRotationMatrix()).cwiseAbs().maxCoeff();
}

Skeleton arm_skeleton() {
  return Skeleton(std::vector<Joint>{{"Shoulder", -1, Eigen::Vector3d::Zero()},
                   {"Elbow", 0, Eigen::Vector3d(1, 0, 0)},
                   {"Hand", 1, Eigen::Vector3d(1, 0, 0)}});
}

MotionFrame arm_frame(double shoulder, double elbow) {
  MotionFrame f;
  f.local_rotations = {Eigen::Quaterniond(Eigen::AngleAxisd(shoulder, Eigen::Vector3d::UnitZ())),
                       Eigen::Quaterniond(Eigen::AngleAxisd(elbow, Eigen::Vector3d::UnitZ())),
                       Eigen::Quaterniond::Identity()};
  forward_kinematics(arm_skeleton(), f);
  return f;
}

}  // namespace

TEST(Bvh, MinimalTwoJointZerosGiveIdentity) {
  const MotionClip clip = parse_bvh(kTwoJoint);
  ASSERT_EQ(clip.skeleton.size(), 2u);
  ASSERT_EQ(clip.frames.size(), 1u);
  EXPECT_EQ(clip.skeleton.joint(1).name, "Chest");
  EXPECT_NEAR(clip.frame_time, 0.0166667, 1e-12);
  EXPECT_EQ(clip.frames[0].root_position, Eigen::Vector3d::Zero());
  for (const auto& q : clip.frames[0].local_rotations) {
    EXPECT_NEAR(q.angularDistance(Eigen::Quaterniond::Identity()), 0.0, 1e-12);
  }
}

TEST(Bvh, NinetyDegreeZRotationMovesChild) {
  const MotionClip clip = parse_bvh(kThreeJoint);
  ASSERT_EQ(clip.frames.size(), 2u);
  const MotionFrame& f = clip.frames[1];
  // Root at (1,2,3); Elbow at root + (0,1,0); Hand offset (1,0,0) turned 90 degrees about Z gives (0,1,0).
  EXPECT_LT((f.world_positions[0] - Eigen::Vector3d(1, 2, 3)).norm(), 1e-12);
  EXPECT_LT((f.world_positions[1] - Eigen::Vector3d(1, 3, 3)).norm(), 1e-12);
  EXPECT_LT((f.world_positions[2] - Eigen::Vector3d(1, 4, 3)).norm(), 1e-9);
  EXPECT_LT((clip.frames[0].world_positions[2] - Eigen::Vector3d(1, 1, 0)).norm(), 1e-12);
}

TEST(Bvh, EulerOrderIsHonored) {
  const double a = 0.3;
  const double b = -1.1;
  const double c = 0.7;
  const Eigen::Matrix3d rx = Eigen::AngleAxisd(a, Eigen::Vector3d::UnitX()).toRotationMatrix();
  const Eigen::Matrix3d ry = Eigen::AngleAxisd(b, Eigen::Vector3d::UnitY()).toRotationMatrix();
  const Eigen::Matrix3d rz = Eigen::AngleAxisd(c, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  const Eigen::Vector3d deg(a * 180 / kPi, b * 180 / kPi, c * 180 / kPi);
  EXPECT_LT((euler_to_quaternion("XYZ", deg).toRotationMatrix() - rx * ry * rz).norm(), 1e-12);
  const Eigen::Vector3d zxy(c * 180 / kPi, a * 180 / kPi, b * 180 / kPi);
  EXPECT_LT((euler_to_quaternion("ZXY", zxy).toRotationMatrix() - rz * rx * ry).norm(), 1e-12);
}

TEST(Bvh, RoundTripWithinTolerance) {
  Rng rng(11);
  std::vector<Joint> joints = humanoid18().joints();
  const char* orders[] = {"ZXY", "XYZ", "YZX", "ZYX", "XZY", "YXZ"};
  for (std::size_t j = 0; j < joints.size(); ++j) {
    joints[j].rotation_order = orders[j % 6];
  }
  joints[0].offset = Eigen::Vector3d(0.1, 0.9, -0.2);
  const MotionClip clip = random_clip(Skeleton(joints), 25, rng);
  const MotionClip first = parse_bvh(write_bvh(clip));
  const MotionClip second = parse_bvh(write_bvh(first));
  ASSERT_EQ(first.skeleton, clip.skeleton);
  ASSERT_EQ(second.frames.size(), clip.frames.size());
  EXPECT_NEAR(first.frame_time, clip.frame_time, 1e-9);
  for (std::size_t t = 0; t < clip.frames.size(); ++t) {
    EXPECT_LT((first.frames[t].root_position - clip.frames[t].root_position).cwiseAbs().maxCoeff(), 1e-4);
    EXPECT_LT((second.frames[t].root_position - first.frames[t].root_position).cwiseAbs().maxCoeff(), 1e-4);
    for (std::size_t j = 0; j < joints.size(); ++j) {
      EXPECT_LT(rotation_distance(first.frames[t].local_rotations[j], clip.frames[t].local_rotations[j]), 1e-4);
      EXPECT_LT(rotation_distance(second.frames[t].local_rotations[j], first.frames[t].local_rotations[j]), 1e-4);
    }
  }
}

TEST(Bvh, TextRoundTripOfParsedFile) {
  const MotionClip a = parse_bvh(kThreeJoint);
  const MotionClip b = parse_bvh(write_bvh(a));
  ASSERT_EQ(b.frames.size(), a.frames.size());
  for (std::size_t t = 0; t < a.frames.size(); ++t) {
    for (std::size_t j = 0; j < a.skeleton.size(); ++j) {
      EXPECT_LT((a.frames[t].world_positions[j] - b.frames[t].world_positions[j]).norm(), 1e-4);
    }
  }
}

TEST(Bvh, EmptyClipWritesFramesZero) {
  MotionClip clip;
  clip.skeleton = humanoid18();
  const std::string text = write_bvh(clip);
  EXPECT_NE(text.find("Frames: 0"), std::string::npos);
  const MotionClip back = parse_bvh(text);
  EXPECT_EQ(back.frames.size(), 0u);
  EXPECT_EQ(back.skeleton.size(), 18u);
}

TEST(Bvh, ChannelCountMismatchReportsLine) {
  std::string text = kTwoJoint;
  text.replace(text.rfind("0 0 0 0 0 0 0 0 0"), 17, "0 0 0 0 0 0 0 0");
  try {
    parse_bvh(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 19u);
    EXPECT_NE(std::string(e.what()).find("channel-count"), std::string::npos);
  }
}

TEST(Bvh, FrameCountMismatchIsParseError) {
  std::string text = kTwoJoint;
  text.replace(text.find("Frames: 1"), 9, "Frames: 3");
  EXPECT_THROW(parse_bvh(text), ParseError);
  std::string extra = std::string(kTwoJoint) + "0 0 0 0 0 0 0 0 0\n";
  try {
    parse_bvh(extra);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 20u);
  }
}

TEST(Bvh, MalformedHeaderReportsLine) {
  std::string text = kTwoJoint;
  text.replace(text.find("OFFSET 0 1 0"), 12, "OFFSET 0 x 0");
  try {
    parse_bvh(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 8u);
  }
  EXPECT_THROW(parse_bvh("HIERARCHY\nJOINT A\n"), ParseError);
  EXPECT_THROW(parse_bvh(""), ParseError);
}

TEST(ForwardKinematics, RecomputationReproducesStoredPositions) {
  Rng rng(3);
  const Skeleton sk = humanoid18();
  MotionClip clip = random_clip(sk, 50, rng);
  for (MotionFrame f : clip.frames) {
    const auto stored = f.world_positions;
    forward_kinematics(sk, f);
    for (std::size_t j = 0; j < sk.size(); ++j) {
      EXPECT_LT((stored[j] - f.world_positions[j]).norm(), 1e-5);
    }
    for (const auto& q : f.local_rotations) {
      EXPECT_NEAR(q.norm(), 1.0, 1e-5);
    }
  }
}

TEST(Skeleton, RejectsBadTopology) {
  EXPECT_THROW(Skeleton(std::vector<Joint>{}), std::invalid_argument);
  EXPECT_THROW(Skeleton(std::vector<Joint>{{"A", -1, {}}, {"B", 2, {}}, {"C", 0, {}}}), std::invalid_argument);
  EXPECT_THROW(Skeleton(std::vector<Joint>{{"A", -1, {}}, {"B", -1, {}}}), std::invalid_argument);
  EXPECT_EQ(humanoid18().size(), 18u);
  EXPECT_THROW(humanoid18().index_of("Tail"), MappingError);
}

TEST(JointMapFile, ParsesPairsAndComments) {
  const JointMap map = parse_joint_map("# header\nHips = Hips\n  Spine1 = Spine  # trailing\n\nNeck=Head\n");
  EXPECT_EQ(map.source_to_target.size(), 3u);
  EXPECT_EQ(map.source_for("Spine"), std::optional<std::string>("Spine1"));
  EXPECT_EQ(map.source_for("Head"), std::optional<std::string>("Neck"));
  EXPECT_FALSE(map.source_for("Chest").has_value());
  try {
    parse_joint_map("A = B\nbroken line\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse_joint_map("A = B\nC = B\n"), ParseError);
}

TEST(ScaleSkeleton, SameSkeletonIsIdentity) {
  Rng rng(5);
  const Skeleton sk = humanoid18();
  const MotionClip clip = random_clip(sk, 10, rng);
  const MotionClip out = scale_skeleton(clip, sk);
  ASSERT_EQ(out.frames.size(), clip.frames.size());
  EXPECT_EQ(out.frame_time, clip.frame_time);
  for (std::size_t t = 0; t < clip.frames.size(); ++t) {
    EXPECT_LT((out.frames[t].root_position - clip.frames[t].root_position).norm(), 1e-6);
    for (std::size_t j = 0; j < sk.size(); ++j) {
      EXPECT_LT(rotation_distance(out.frames[t].local_rotations[j], clip.frames[t].local_rotations[j]), 1e-6);
      EXPECT_LT((out.frames[t].world_positions[j] - clip.frames[t].world_positions[j]).norm(), 1e-6);
    }
  }
}

TEST(ScaleSkeleton, UniformDoubleScalesRootRelativePositions) {
  Rng rng(6);
  const Skeleton sk = humanoid18();
  std::vector<Joint> doubled = sk.joints();
  for (auto& j : doubled) {
    j.offset *= 2.0;
  }
  const MotionClip clip = random_clip(sk, 10, rng);
  const MotionClip out = scale_skeleton(clip, Skeleton(doubled));
  for (std::size_t t = 0; t < clip.frames.size(); ++t) {
    const auto& a = clip.frames[t].world_positions;
    const auto& b = out.frames[t].world_positions;
    for (std::size_t j = 0; j < sk.size(); ++j) {
      EXPECT_LT(((b[j] - b[0]) - 2.0 * (a[j] - a[0])).norm(), 1e-4);
    }
  }
}

TEST(ScaleSkeleton, TPoseStaysTPoseWithParallelOffsets) {
  const Skeleton sk = humanoid18();
  std::vector<Joint> longer = sk.joints();
  for (std::size_t j = 0; j < longer.size(); ++j) {
    longer[j].offset *= 1.0 + 0.1 * static_cast<double>(j % 4);
  }
  MotionClip clip;
  clip.skeleton = sk;
  clip.frames.push_back(rest_frame(sk));
  const MotionClip out = scale_skeleton(clip, Skeleton(longer));
  for (const auto& q : out.frames[0].local_rotations) {
    EXPECT_LT(rotation_distance(q, Eigen::Quaterniond::Identity()), 1e-9);
  }
}

TEST(ScaleSkeleton, AlignsNonParallelBones) {
  // Source arm points along +x, template arm along -y; the template hand must follow the source direction.
  const Skeleton src({{"Root", -1, {}}, {"Arm", 0, Eigen::Vector3d(0, 1, 0)}, {"Hand", 1, Eigen::Vector3d(1, 0, 0)}});
  const Skeleton dst({{"Root", -1, {}}, {"Arm", 0, Eigen::Vector3d(0, 1, 0)}, {"Hand", 1, Eigen::Vector3d(0, -2, 0)}});
  MotionClip clip;
  clip.skeleton = src;
  MotionFrame f;
  f.local_rotations = {Eigen::Quaterniond::Identity(),
                       Eigen::Quaterniond(Eigen::AngleAxisd(kPi / 2, Eigen::Vector3d::UnitZ())),
                       Eigen::Quaterniond::Identity()};
  forward_kinematics(src, f);
  clip.frames.push_back(f);
  const MotionClip out = scale_skeleton(clip, dst);
  const Eigen::Vector3d dir = (out.frames[0].world_positions[2] - out.frames[0].world_positions[1]).normalized();
  const Eigen::Vector3d want = (f.world_positions[2] - f.world_positions[1]).normalized();
  EXPECT_LT((dir - want).norm(), 1e-9);
  EXPECT_NEAR((out.frames[0].world_positions[2] - out.frames[0].world_positions[1]).norm(), 2.0, 1e-9);
}

TEST(ScaleSkeleton, UnmappedJointIsMappingError) {
  Rng rng(7);
  const Skeleton sk = humanoid18();
  const MotionClip clip = random_clip(sk, 2, rng);
  JointMap map = JointMap::identity(sk);
  map.source_to_target.erase("LeftHand");
  EXPECT_THROW(scale_skeleton(clip, sk, map), MappingError);
  JointMap bad = JointMap::identity(sk);
  bad.source_to_target.erase("Head");
  bad.source_to_target["Neck"] = "Head";
  EXPECT_THROW(scale_skeleton(clip, sk, bad), MappingError);
}

TEST(DampedLeastSquares, ZeroErrorLeavesFrameUnchanged) {
  const MotionFrame f = arm_frame(0.4, 0.9);
  const IkResult r = ik_damped_ls(arm_skeleton(), f, {{2, f.world_positions[2]}}, 2.0, 20);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_LT(rotation_distance(r.frame.local_rotations[j], f.local_rotations[j]), 1e-6);
  }
  EXPECT_EQ(r.residuals.size(), 21u);
}

TEST(DampedLeastSquares, TwoLinkArmReachesTargetAtDistance1p5) {
  // Analytic 2-link solution: elbow angle from the law of cosines.
  const double d = 1.5;
  const double elbow = kPi - std::acos((1.0 + 1.0 - d * d) / 2.0);
  const double bearing = kPi / 3;
  const Eigen::Vector3d target(d * std::cos(bearing), d * std::sin(bearing), 0.0);
  const MotionFrame oracle = arm_frame(bearing - elbow / 2, elbow);
  ASSERT_LT((oracle.world_positions[2] - target).norm(), 1e-12);

  const MotionFrame start = arm_frame(0.0, kPi / 2);
  const IkResult r = ik_damped_ls(arm_skeleton(), start, {{2, target}}, 2.0, 20);
  EXPECT_LT((r.frame.world_positions[2] - target).norm(), 1e-3);
  for (std::size_t i = 1; i < r.residuals.size(); ++i) {
    EXPECT_LE(r.residuals[i], r.residuals[i - 1] + 1e-6);
  }
}

TEST(DampedLeastSquares, UnreachableTargetExtendsArmTowardIt) {
  const Eigen::Vector3d target(3.0 * std::cos(0.8), 3.0 * std::sin(0.8), 0.0);
  const IkResult r = ik_damped_ls(arm_skeleton(), arm_frame(0.0, kPi / 2), {{2, target}}, 2.0, 20);
  const auto& p = r.frame.world_positions;
  const Eigen::Vector3d upper = (p[1] - p[0]).normalized();
  const Eigen::Vector3d lower = (p[2] - p[1]).normalized();
  const Eigen::Vector3d dir = target.normalized();
  EXPECT_LT(std::acos(std::clamp(upper.dot(dir), -1.0, 1.0)), 1e-2);
  EXPECT_LT(std::acos(std::clamp(lower.dot(dir), -1.0, 1.0)), 1e-2);
  for (std::size_t i = 1; i < r.residuals.size(); ++i) {
    EXPECT_LE(r.residuals[i], r.residuals[i - 1] + 1e-6);
  }
}

TEST(DampedLeastSquares, ResidualNonIncreasingOnHumanoidRigs) {
  Rng rng(21);
  const Skeleton sk = humanoid18();
  for (int trial = 0; trial < 10; ++trial) {
    MotionClip c = random_clip(sk, 1, rng, 0.6);
    std::vector<IkTarget> goals;
    for (const char* name : {"LeftHand", "RightFoot"}) {
      const std::size_t j = sk.index_of(name);
      goals.push_back({j, c.frames[0].world_positions[j] + Eigen::Vector3d(rng.uniform(-0.2, 0.2),
                                                                          rng.uniform(-0.2, 0.2),
                                                                          rng.uniform(-0.2, 0.2))});
    }
    const IkResult r = ik_damped_ls(sk, c.frames[0], goals, 2.0, 20);
    for (std::size_t i = 1; i < r.residuals.size(); ++i) {
      EXPECT_LE(r.residuals[i], r.residuals[i - 1] + 1e-6);
    }
    for (const auto& q : r.frame.local_rotations) {
      EXPECT_NEAR(q.norm(), 1.0, 1e-9);
    }
  }
}

TEST(DampedLeastSquares, RejectsBadArguments) {
  const MotionFrame f = arm_frame(0, 0);
  EXPECT_THROW(ik_damped_ls(arm_skeleton(), f, {{2, Eigen::Vector3d::Zero()}}, 0.0, 20), ConfigError);
  EXPECT_THROW(ik_damped_ls(arm_skeleton(), f, {{7, Eigen::Vector3d::Zero()}}, 2.0, 20), MappingError);
}

namespace {

MotionClip standing_clip(double toe_height, std::size_t frames) {
  const Skeleton sk = humanoid18();
  MotionClip clip;
  clip.skeleton = sk;
  const MotionFrame rest = rest_frame(sk);
  const double toe_y = rest.world_positions[sk.index_of("LeftToe")].y();
  for (std::size_t t = 0; t < frames; ++t) {
    MotionFrame f = rest;
    f.root_position = Eigen::Vector3d(0.01 * static_cast<double>(t), toe_height - toe_y, 0.0);
    forward_kinematics(sk, f);
    clip.frames.push_back(f);
    clip.action_labels.push_back(Gait::stand);
    clip.contact_labels.push_back({true, true, true, true});
  }
  return clip;
}

}  // namespace

TEST(ToeHeight, AlreadyGroundedIsUnchanged) {
  const MotionClip clip = standing_clip(0.0, 5);
  const MotionClip out = fix_toe_height(clip, 0.0);
  for (std::size_t t = 0; t < clip.frames.size(); ++t) {
    EXPECT_LT((out.frames[t].root_position - clip.frames[t].root_position).norm(), 1e-12);
  }
}

TEST(ToeHeight, ContactFrameIsLoweredToGround) {
  MotionClip clip = standing_clip(0.05, 3);
  clip.contact_labels[1] = {false, false, false, false};
  const MotionClip out = fix_toe_height(clip, 0.0);
  const std::size_t toe = clip.skeleton.index_of("LeftToe");
  EXPECT_NEAR(out.frames[0].world_positions[toe].y(), 0.0, 1e-4);
  EXPECT_NEAR(out.frames[2].world_positions[toe].y(), 0.0, 1e-4);
  // Airborne frame stays bit-identical.
  EXPECT_EQ(out.frames[1].root_position, clip.frames[1].root_position);
  EXPECT_EQ(out.frames[1].world_positions, clip.frames[1].world_positions);
  // World positions stay consistent with forward kinematics.
  MotionFrame check = out.frames[0];
  forward_kinematics(clip.skeleton, check);
  EXPECT_LT((check.world_positions[toe] - out.frames[0].world_positions[toe]).norm(), 1e-9);
}

TEST(ToeHeight, MissingToeJointIsMappingError) {
  MotionClip clip = parse_bvh(kTwoJoint);
  clip.contact_labels.assign(1, {true, true, true, true});
  EXPECT_THROW(fix_toe_height(clip, 0.0), MappingError);
}

TEST(ToeHeight, GroundDefaultIsFifthPercentile) {
  MotionClip clip = standing_clip(0.0, 100);
  const std::size_t left = clip.skeleton.index_of("LeftToe");
  const std::size_t right = clip.skeleton.index_of("RightToe");
  for (std::size_t t = 0; t < 100; ++t) {
    clip.frames[t].world_positions[left].y() = static_cast<double>(t);
    clip.frames[t].world_positions[right].y() = static_cast<double>(t) + 0.5;
  }
  // 200 samples 0, 0.5, 1, ..., 99.5; the 5th percentile sits at rank 9.95.
  EXPECT_NEAR(estimate_ground_height(clip), 4.975, 1e-9);
}

TEST(Retarget, PreservesFrameCountAndTime) {
  Rng rng(9);
  const Skeleton sk = humanoid18();
  std::vector<Joint> smaller = sk.joints();
  for (auto& j : smaller) {
    j.offset *= 0.8;
  }
  MotionClip clip = random_clip(sk, 6, rng, 0.3);
  clip.frame_time = 1.0 / 30.0;
  clip.contact_labels.assign(6, {true, true, false, false});
  clip.action_labels.assign(6, Gait::walk);
  const MotionClip out = retarget(clip, Skeleton(smaller), JointMap::identity(sk));
  EXPECT_EQ(out.frames.size(), clip.frames.size());
  EXPECT_EQ(out.frame_time, clip.frame_time);
  EXPECT_EQ(out.contact_labels, clip.contact_labels);
}

TEST(Corpus, SaveLoadKeepsLabelsAndFrames) {
  auto styles = features::default_styles();
  styles.resize(2);
  features::SyntheticConfig cfg;
  cfg.styles = styles;
  cfg.seconds_per_style = 5.5;
  cfg.clips_per_style = 1;
  const auto clips = features::generate_synthetic_corpus(cfg);
  const auto dir = std::filesystem::temp_directory_path() / "mstyle_corpus_roundtrip";
  std::filesystem::remove_all(dir);
  save_corpus(dir, clips);
  const auto back = load_corpus(dir);
  ASSERT_EQ(back.size(), clips.size());
  for (std::size_t c = 0; c < clips.size(); ++c) {
    EXPECT_EQ(back[c].name, clips[c].name);
    EXPECT_EQ(back[c].style_label, clips[c].style_label);
    EXPECT_EQ(back[c].action_labels, clips[c].action_labels);
    EXPECT_EQ(back[c].contact_labels, clips[c].contact_labels);
    ASSERT_EQ(back[c].frames.size(), clips[c].frames.size());
    EXPECT_NEAR(back[c].frame_time, clips[c].frame_time, 1e-9);  // BVH text precision
    for (std::size_t i = 0; i < clips[c].frames.size(); i += 37) {
      for (std::size_t j = 0; j < clips[c].skeleton.size(); ++j) {
        EXPECT_LT((back[c].frames[i].world_positions[j] - clips[c].frames[i].world_positions[j]).norm(), 1e-3);
      }
    }
  }
}

TEST(Corpus, RejectsMismatchedLabels) {
  auto styles = features::default_styles();
  styles.resize(2);
  features::SyntheticConfig cfg;
  cfg.styles = styles;
  cfg.seconds_per_style = 5.5;
  cfg.clips_per_style = 1;
  const auto dir = std::filesystem::temp_directory_path() / "mstyle_corpus_broken";
  std::filesystem::remove_all(dir);
  const auto clips = features::generate_synthetic_corpus(cfg);
  save_corpus(dir, clips);
  const auto labels = dir / (clips[0].name + ".labels.csv");
  std::ifstream in(labels);
  std::stringstream text;
  text << in.rdbuf();
  in.close();
  std::string content = text.str();
  content.resize(content.rfind('\n', content.size() - 2) + 1);  // drop the last row
  std::ofstream(labels) << content;
  EXPECT_THROW(load_corpus(dir), ParseError);
  EXPECT_THROW(load_corpus(dir / "missing"), ConfigError);
}
