#include "mstyle/motion/retarget.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mstyle::motion {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) {
    ++b;
  }
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) {
    --e;
  }
  return std::string(s.substr(b, e - b));
}

double rest_height(const Skeleton& skeleton) {
  const MotionFrame rest = rest_frame(skeleton);
  double lowest = rest.world_positions[0].y();
  for (const auto& p : rest.world_positions) {
    lowest = std::min(lowest, p.y());
  }
  return rest.world_positions[0].y() - lowest;
}

}  // namespace

std::optional<std::string> JointMap::source_for(std::string_view target) const {
  for (const auto& [source, mapped] : source_to_target) {
    if (mapped == target) {
      return source;
    }
  }
  return std::nullopt;
}

JointMap JointMap::identity(const Skeleton& skeleton) {
  JointMap map;
  for (const Joint& j : skeleton.joints()) {
    map.source_to_target[j.name] = j.name;
  }
  return map;
}

JointMap parse_joint_map(std::string_view text) {
  JointMap map;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_number = 0;
  while (std::getline(in, raw)) {
    ++line_number;
    const std::size_t hash = raw.find('#');
    const std::string line = trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) {
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(line_number, "expected 'source = target'");
    }
    std::string source = trim(std::string_view(line).substr(0, eq));
    std::string target = trim(std::string_view(line).substr(eq + 1));
    if (source.empty() || target.empty()) {
      throw ParseError(line_number, "empty joint name in mapping");
    }
    if (map.source_for(target)) {
      throw ParseError(line_number, "target joint '" + target + "' mapped twice");
    }
    if (!map.source_to_target.emplace(source, target).second) {
      throw ParseError(line_number, "source joint '" + source + "' mapped twice");
    }
  }
  return map;
}

JointMap read_joint_map_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open joint map " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_joint_map(buffer.str());
}

double root_height_ratio(const Skeleton& source, const Skeleton& target) {
  const double hs = rest_height(source);
  const double ht = rest_height(target);
  return hs > 1e-9 && ht > 1e-9 ? ht / hs : 1.0;
}

MotionClip scale_skeleton(const MotionClip& source, const Skeleton& target, const JointMap& map) {
  const Skeleton& src = source.skeleton;
  std::vector<std::size_t> from(target.size());
  for (std::size_t j = 0; j < target.size(); ++j) {
    const std::string& name = target.joint(j).name;
    const auto mapped = map.source_for(name);
    if (!mapped) {
      throw MappingError("template joint '" + name + "' has no source joint in the joint map");
    }
    const auto idx = src.find(*mapped);
    if (!idx) {
      throw MappingError("joint map names source joint '" + *mapped + "' which the source skeleton lacks");
    }
    from[j] = *idx;
  }

  // Aligns each template bone with the direction of the corresponding source bone in rest pose.
  const MotionFrame src_rest = rest_frame(src);
  std::vector<Eigen::Quaterniond> correction(target.size(), Eigen::Quaterniond::Identity());
  for (std::size_t j = 1; j < target.size(); ++j) {
    const auto kids = target.children(j);
    if (kids.size() != 1) {
      continue;
    }
    const Eigen::Vector3d dt = target.joint(kids[0]).offset;
    const Eigen::Vector3d ds = src_rest.world_positions[from[kids[0]]] - src_rest.world_positions[from[j]];
    if (dt.norm() > 1e-9 && ds.norm() > 1e-9) {
      correction[j] = Eigen::Quaterniond::FromTwoVectors(dt, ds);
    }
  }

  const double ratio = root_height_ratio(src, target);
  MotionClip out;
  out.skeleton = target;
  out.frame_time = source.frame_time;
  out.name = source.name;
  out.style_label = source.style_label;
  out.action_labels = source.action_labels;
  out.contact_labels = source.contact_labels;
  out.frames.reserve(source.frames.size());
  std::vector<Eigen::Quaterniond> world(target.size());
  for (const MotionFrame& f : source.frames) {
    const auto src_world = world_rotations(src, f);
    MotionFrame g;
    g.root_position = f.root_position * ratio;
    g.local_rotations.resize(target.size());
    for (std::size_t j = 0; j < target.size(); ++j) {
      world[j] = src_world[from[j]] * correction[j];
      const int parent = target.joint(j).parent;
      g.local_rotations[j] =
          parent < 0 ? world[j] : (world[static_cast<std::size_t>(parent)].conjugate() * world[j]).normalized();
    }
    forward_kinematics(target, g);
    out.frames.push_back(std::move(g));
  }
  return out;
}

MotionClip scale_skeleton(const MotionClip& source, const Skeleton& target) {
  return scale_skeleton(source, target, JointMap::identity(target));
}

IkResult ik_damped_ls(const Skeleton& skeleton, const MotionFrame& frame, const std::vector<IkTarget>& targets,
                      double damping, int iterations) {
  if (!(damping > 0.0)) {
    throw ConfigError("IK damping must be positive");
  }
  if (iterations < 0) {
    throw ConfigError("IK iteration count must be non-negative");
  }
  for (const IkTarget& t : targets) {
    if (t.joint >= skeleton.size()) {
      throw MappingError("IK target references joint " + std::to_string(t.joint) + " outside the skeleton");
    }
  }

  // Degrees of freedom: the requested ancestors of every target, deduplicated, in skeleton order.
  std::vector<bool> active(skeleton.size(), false);
  for (const IkTarget& t : targets) {
    const auto chain = skeleton.ancestors(t.joint);
    const std::size_t n =
        t.chain_length < 0 ? chain.size() : std::min(chain.size(), static_cast<std::size_t>(t.chain_length));
    for (std::size_t k = 0; k < n; ++k) {
      active[chain[k]] = true;
    }
  }
  std::vector<std::size_t> dofs;
  for (std::size_t j = 0; j < skeleton.size(); ++j) {
    if (active[j]) {
      dofs.push_back(j);
    }
  }
  std::vector<std::vector<bool>> moves(targets.size(), std::vector<bool>(skeleton.size(), false));
  for (std::size_t i = 0; i < targets.size(); ++i) {
    for (std::size_t a : skeleton.ancestors(targets[i].joint)) {
      moves[i][a] = active[a];
    }
  }

  IkResult result;
  result.frame = frame;
  forward_kinematics(skeleton, result.frame);
  const auto m = static_cast<Eigen::Index>(3 * targets.size());
  const auto n = static_cast<Eigen::Index>(3 * dofs.size());
  Eigen::VectorXd e(m);
  auto residual = [&](const MotionFrame& f) {
    for (std::size_t i = 0; i < targets.size(); ++i) {
      e.segment<3>(static_cast<Eigen::Index>(3 * i)) = targets[i].position - f.world_positions[targets[i].joint];
    }
    return e.norm();
  };
  result.residuals.push_back(residual(result.frame));
  if (targets.empty() || dofs.empty()) {
    result.residuals.resize(static_cast<std::size_t>(iterations) + 1, result.residuals.front());
    return result;
  }

  Eigen::MatrixXd jac(m, n);
  const Eigen::MatrixXd damp = damping * damping * Eigen::MatrixXd::Identity(m, m);
  for (int it = 0; it < iterations; ++it) {
    MotionFrame& f = result.frame;
    jac.setZero();
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const Eigen::Vector3d& pe = f.world_positions[targets[i].joint];
      for (std::size_t d = 0; d < dofs.size(); ++d) {
        if (!moves[i][dofs[d]]) {
          continue;
        }
        const Eigen::Vector3d r = pe - f.world_positions[dofs[d]];
        for (int a = 0; a < 3; ++a) {
          jac.block<3, 1>(static_cast<Eigen::Index>(3 * i), static_cast<Eigen::Index>(3 * d + static_cast<std::size_t>(a))) =
              Eigen::Vector3d::Unit(a).cross(r);
        }
      }
    }
    const Eigen::LDLT<Eigen::MatrixXd> solver(jac * jac.transpose() + damp);
    if (solver.info() != Eigen::Success) {
      throw NumericError("damped least-squares solve failed");
    }
    const Eigen::VectorXd dtheta = jac.transpose() * solver.solve(e);
    if (!dtheta.allFinite()) {
      throw NumericError("damped least-squares step is not finite");
    }
    const auto world = world_rotations(skeleton, f);
    for (std::size_t d = 0; d < dofs.size(); ++d) {
      const std::size_t j = dofs[d];
      const Eigen::Vector3d w = dtheta.segment<3>(static_cast<Eigen::Index>(3 * d));
      const double angle = w.norm();
      if (angle == 0.0) {
        continue;
      }
      const Eigen::Quaterniond delta(Eigen::AngleAxisd(angle, w / angle));
      const int parent = skeleton.joint(j).parent;
      const Eigen::Quaterniond pw =
          parent < 0 ? Eigen::Quaterniond::Identity() : world[static_cast<std::size_t>(parent)];
      f.local_rotations[j] = (pw.conjugate() * delta * pw * f.local_rotations[j]).normalized();
    }
    forward_kinematics(skeleton, f);
    result.residuals.push_back(residual(f));
  }
  return result;
}

double estimate_ground_height(const MotionClip& clip, const ToeJoints& toes) {
  const std::size_t left = clip.skeleton.index_of(toes.left);
  const std::size_t right = clip.skeleton.index_of(toes.right);
  std::vector<double> heights;
  heights.reserve(2 * clip.frames.size());
  for (const MotionFrame& f : clip.frames) {
    heights.push_back(f.world_positions[left].y());
    heights.push_back(f.world_positions[right].y());
  }
  if (heights.empty()) {
    return 0.0;
  }
  std::sort(heights.begin(), heights.end());
  const double pos = 0.05 * static_cast<double>(heights.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, heights.size() - 1);
  return heights[lo] + (pos - static_cast<double>(lo)) * (heights[hi] - heights[lo]);
}

MotionClip fix_toe_height(const MotionClip& clip, double ground_height, const ToeJoints& toes) {
  const std::size_t left = clip.skeleton.index_of(toes.left);
  const std::size_t right = clip.skeleton.index_of(toes.right);
  MotionClip out = clip;
  for (std::size_t t = 0; t < out.contact_labels.size() && t < out.frames.size(); ++t) {
    const ContactLabels& c = out.contact_labels[t];
    if (!c[kLeftToe] && !c[kRightToe]) {
      continue;
    }
    MotionFrame& f = out.frames[t];
    double lowest = std::numeric_limits<double>::infinity();
    if (c[kLeftToe]) {
      lowest = std::min(lowest, f.world_positions[left].y());
    }
    if (c[kRightToe]) {
      lowest = std::min(lowest, f.world_positions[right].y());
    }
    const double shift = ground_height - lowest;
    if (shift == 0.0) {
      continue;
    }
    f.root_position.y() += shift;
    for (auto& p : f.world_positions) {
      p.y() += shift;
    }
  }
  return out;
}

MotionClip retarget(const MotionClip& source, const Skeleton& target, const JointMap& map,
                    const RetargetOptions& options) {
  MotionClip out = scale_skeleton(source, target, map);
  const double ratio = root_height_ratio(source.skeleton, target);
  std::vector<std::pair<std::size_t, std::size_t>> effectors;
  for (const std::string& name : options.end_effectors) {
    const std::size_t t = target.index_of(name);
    const auto mapped = map.source_for(name);
    if (!mapped) {
      throw MappingError("end effector '" + name + "' has no source joint in the joint map");
    }
    effectors.emplace_back(t, source.skeleton.index_of(*mapped));
  }
  for (std::size_t i = 0; i < out.frames.size(); ++i) {
    const MotionFrame& src = source.frames[i];
    std::vector<IkTarget> goals;
    for (const auto& [t, s] : effectors) {
      const Eigen::Vector3d goal =
          out.frames[i].root_position + ratio * (src.world_positions[s] - src.root_position);
      goals.push_back({t, goal, 2});
    }
    out.frames[i] = ik_damped_ls(target, out.frames[i], goals, options.damping, options.iterations).frame;
  }
  const double ground = options.ground_height ? *options.ground_height : estimate_ground_height(out, options.toes);
  return fix_toe_height(out, ground, options.toes);
}

}  // namespace mstyle::motion
