#include "mstyle/motion/bvh.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace mstyle::motion {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

Eigen::Vector3d axis_of(char c) {
  switch (c) {
    case 'X':
      return Eigen::Vector3d::UnitX();
    case 'Y':
      return Eigen::Vector3d::UnitY();
    case 'Z':
      return Eigen::Vector3d::UnitZ();
    default:
      throw std::invalid_argument(std::string("bad rotation axis '") + c + "'");
  }
}

int axis_index(char c) { return c == 'X' ? 0 : c == 'Y' ? 1 : 2; }

enum class Channel { xpos, ypos, zpos, xrot, yrot, zrot };

struct Token {
  std::string text;
  std::size_t line = 0;
};

class Lexer {
 public:
  explicit Lexer(std::string_view text) {
    std::size_t start = 0;
    while (start <= text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string_view::npos) {
        end = text.size();
      }
      std::string_view line = text.substr(start, end - start);
      if (!line.empty() && line.back() == '\r') {
        line.remove_suffix(1);
      }
      lines_.emplace_back(line);
      start = end + 1;
    }
  }

  bool at_end() {
    skip_space();
    return line_ >= lines_.size();
  }

  Token next(const char* what) {
    skip_space();
    if (line_ >= lines_.size()) {
      throw ParseError(lines_.size(), std::string("unexpected end of file, expected ") + what);
    }
    const std::string& l = lines_[line_];
    std::size_t end = col_;
    while (end < l.size() && !std::isspace(static_cast<unsigned char>(l[end]))) {
      ++end;
    }
    Token t{l.substr(col_, end - col_), line_ + 1};
    col_ = end;
    return t;
  }

  void expect(std::string_view word) {
    Token t = next(std::string(word).c_str());
    if (t.text != word) {
      throw ParseError(t.line, "expected '" + std::string(word) + "', found '" + t.text + "'");
    }
  }

  double number(const char* what) {
    Token t = next(what);
    return to_number(t, what);
  }

  static double to_number(const Token& t, const char* what) {
    double v = 0.0;
    const char* b = t.text.data();
    const char* e = b + t.text.size();
    if (!t.text.empty() && *b == '+') {
      ++b;
    }
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e) {
      throw ParseError(t.line, std::string("expected ") + what + ", found '" + t.text + "'");
    }
    return v;
  }

  /// Moves to the start of the next line and returns the remaining raw lines from there.
  std::size_t finish_line() {
    if (col_ > 0) {
      ++line_;
      col_ = 0;
    }
    return line_;
  }

  const std::vector<std::string>& lines() const { return lines_; }

 private:
  void skip_space() {
    while (line_ < lines_.size()) {
      const std::string& l = lines_[line_];
      while (col_ < l.size() && std::isspace(static_cast<unsigned char>(l[col_]))) {
        ++col_;
      }
      if (col_ < l.size()) {
        return;
      }
      ++line_;
      col_ = 0;
    }
  }

  std::vector<std::string> lines_;
  std::size_t line_ = 0;
  std::size_t col_ = 0;
};

struct JointChannels {
  std::vector<Channel> channels;
};

Eigen::Vector3d read_offset(Lexer& lex) {
  lex.expect("OFFSET");
  Eigen::Vector3d v;
  for (int i = 0; i < 3; ++i) {
    v[i] = lex.number("offset value");
  }
  return v;
}

void parse_joint(Lexer& lex, int parent, std::vector<Joint>& joints, std::vector<JointChannels>& channels) {
  Token name = lex.next("joint name");
  Joint joint;
  joint.name = name.text;
  joint.parent = parent;
  lex.expect("{");
  joint.offset = read_offset(lex);
  lex.expect("CHANNELS");
  Token count_tok = lex.next("channel count");
  const double count_value = Lexer::to_number(count_tok, "channel count");
  if (count_value < 0 || count_value > 6 || count_value != std::floor(count_value)) {
    throw ParseError(count_tok.line, "invalid channel count '" + count_tok.text + "'");
  }
  JointChannels jc;
  std::string order;
  for (int i = 0; i < static_cast<int>(count_value); ++i) {
    Token c = lex.next("channel name");
    static const std::pair<const char*, Channel> kNames[] = {
        {"Xposition", Channel::xpos}, {"Yposition", Channel::ypos}, {"Zposition", Channel::zpos},
        {"Xrotation", Channel::xrot}, {"Yrotation", Channel::yrot}, {"Zrotation", Channel::zrot}};
    bool found = false;
    for (const auto& [label, kind] : kNames) {
      if (c.text == label) {
        jc.channels.push_back(kind);
        if (kind >= Channel::xrot) {
          order.push_back(c.text[0]);
        }
        found = true;
      }
    }
    if (!found) {
      throw ParseError(c.line, "unknown channel '" + c.text + "'");
    }
  }
  if (!order.empty()) {
    joint.rotation_order = order;
  }
  const int self = static_cast<int>(joints.size());
  joints.push_back(joint);
  channels.push_back(std::move(jc));

  while (true) {
    Token t = lex.next("JOINT, End Site or '}'");
    if (t.text == "}") {
      return;
    }
    if (t.text == "JOINT") {
      parse_joint(lex, self, joints, channels);
    } else if (t.text == "End") {
      lex.expect("Site");
      lex.expect("{");
      read_offset(lex);
      lex.expect("}");
    } else {
      throw ParseError(t.line, "unexpected token '" + t.text + "' in joint '" + joint.name + "'");
    }
  }
}

std::vector<double> split_numbers(const std::string& line, std::size_t line_number) {
  std::vector<double> values;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) {
      ++i;
    }
    if (i >= line.size()) {
      break;
    }
    std::size_t end = i;
    while (end < line.size() && !std::isspace(static_cast<unsigned char>(line[end]))) {
      ++end;
    }
    values.push_back(Lexer::to_number(Token{line.substr(i, end - i), line_number}, "channel value"));
    i = end;
  }
  return values;
}

bool blank(const std::string& line) {
  for (char c : line) {
    if (!std::isspace(static_cast<unsigned char>(c))) {
      return false;
    }
  }
  return true;
}

}  // namespace

Eigen::Quaterniond euler_to_quaternion(std::string_view order, const Eigen::Vector3d& degrees) {
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
  for (std::size_t i = 0; i < order.size(); ++i) {
    q = q * Eigen::Quaterniond(Eigen::AngleAxisd(degrees[static_cast<Eigen::Index>(i)] * kDegToRad, axis_of(order[i])));
  }
  return q.normalized();
}

Eigen::Vector3d quaternion_to_euler(std::string_view order, const Eigen::Quaterniond& q) {
  if (order.size() != 3) {
    throw std::invalid_argument("Euler order must name three axes");
  }
  const Eigen::Vector3d rad = q.normalized().toRotationMatrix().eulerAngles(
      axis_index(order[0]), axis_index(order[1]), axis_index(order[2]));
  return rad / kDegToRad;
}

MotionClip parse_bvh(std::string_view text) {
  Lexer lex(text);
  lex.expect("HIERARCHY");
  lex.expect("ROOT");
  std::vector<Joint> joints;
  std::vector<JointChannels> channels;
  parse_joint(lex, -1, joints, channels);
  Token extra = lex.next("MOTION");
  if (extra.text == "ROOT") {
    throw ParseError(extra.line, "multiple ROOT joints are not supported");
  }
  if (extra.text != "MOTION") {
    throw ParseError(extra.line, "expected 'MOTION', found '" + extra.text + "'");
  }
  lex.expect("Frames:");
  Token frames_tok = lex.next("frame count");
  const double frames_value = Lexer::to_number(frames_tok, "frame count");
  if (frames_value < 0 || frames_value != std::floor(frames_value)) {
    throw ParseError(frames_tok.line, "invalid frame count '" + frames_tok.text + "'");
  }
  const auto frame_count = static_cast<std::size_t>(frames_value);
  lex.expect("Frame");
  lex.expect("Time:");
  Token dt_tok = lex.next("frame time");
  const double frame_time = Lexer::to_number(dt_tok, "frame time");
  if (!(frame_time > 0.0)) {
    throw ParseError(dt_tok.line, "frame time must be positive");
  }

  MotionClip clip;
  clip.skeleton = Skeleton(joints);
  clip.frame_time = frame_time;
  std::size_t total_channels = 0;
  for (const auto& jc : channels) {
    total_channels += jc.channels.size();
  }

  const auto& lines = lex.lines();
  std::size_t li = lex.finish_line();
  clip.frames.reserve(frame_count);
  while (clip.frames.size() < frame_count) {
    while (li < lines.size() && blank(lines[li])) {
      ++li;
    }
    if (li >= lines.size()) {
      throw ParseError(lines.size(), "frame-count mismatch: header declares " + std::to_string(frame_count) +
                                         " frames, found " + std::to_string(clip.frames.size()));
    }
    const std::vector<double> values = split_numbers(lines[li], li + 1);
    if (values.size() != total_channels) {
      throw ParseError(li + 1, "channel-count mismatch: expected " + std::to_string(total_channels) +
                                   " values, found " + std::to_string(values.size()));
    }
    MotionFrame frame;
    frame.local_rotations.resize(joints.size());
    std::size_t v = 0;
    for (std::size_t j = 0; j < joints.size(); ++j) {
      Eigen::Vector3d translation = Eigen::Vector3d::Zero();
      Eigen::Vector3d angles = Eigen::Vector3d::Zero();
      int rot = 0;
      for (Channel c : channels[j].channels) {
        const double value = values[v++];
        if (c <= Channel::zpos) {
          translation[static_cast<int>(c)] = value;
        } else {
          angles[rot++] = value;
        }
      }
      frame.local_rotations[j] =
          rot == 0 ? Eigen::Quaterniond::Identity()
                   : euler_to_quaternion(std::string_view(joints[j].rotation_order).substr(0, static_cast<std::size_t>(rot)),
                                         angles);
      if (j == 0) {
        frame.root_position = joints[0].offset + translation;
      }
    }
    forward_kinematics(clip.skeleton, frame);
    clip.frames.push_back(std::move(frame));
    ++li;
  }
  while (li < lines.size()) {
    if (!blank(lines[li])) {
      throw ParseError(li + 1, "frame-count mismatch: data beyond the declared " + std::to_string(frame_count) +
                                   " frames");
    }
    ++li;
  }
  return clip;
}

namespace {

std::string write_order(const Joint& joint) {
  return joint.rotation_order.size() == 3 ? joint.rotation_order : std::string("ZXY");
}

void write_joint(std::ostream& os, const Skeleton& skeleton, std::size_t j, int depth) {
  const std::string indent(static_cast<std::size_t>(depth) * 2, ' ');
  const Joint& joint = skeleton.joint(j);
  os << indent << (j == 0 ? "ROOT " : "JOINT ") << joint.name << "\n" << indent << "{\n";
  os << indent << "  OFFSET " << joint.offset.x() << " " << joint.offset.y() << " " << joint.offset.z() << "\n";
  os << indent << "  CHANNELS " << (j == 0 ? 6 : 3);
  if (j == 0) {
    os << " Xposition Yposition Zposition";
  }
  for (char axis : write_order(joint)) {
    os << " " << axis << "rotation";
  }
  os << "\n";
  const auto kids = skeleton.children(j);
  if (kids.empty()) {
    os << indent << "  End Site\n" << indent << "  {\n" << indent << "    OFFSET 0 0 0\n" << indent << "  }\n";
  }
  for (std::size_t c : kids) {
    write_joint(os, skeleton, c, depth + 1);
  }
  os << indent << "}\n";
}

}  // namespace

std::string write_bvh(const MotionClip& clip) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "HIERARCHY\n";
  write_joint(os, clip.skeleton, 0, 0);
  os << "MOTION\n";
  os << "Frames: " << clip.frames.size() << "\n";
  os << "Frame Time: " << clip.frame_time << "\n";
  os << std::fixed << std::setprecision(6);
  const Eigen::Vector3d root_offset = clip.skeleton.joint(0).offset;
  for (const MotionFrame& frame : clip.frames) {
    const Eigen::Vector3d t = frame.root_position - root_offset;
    os << t.x() << " " << t.y() << " " << t.z();
    for (std::size_t j = 0; j < clip.skeleton.size(); ++j) {
      const Eigen::Vector3d e = quaternion_to_euler(write_order(clip.skeleton.joint(j)), frame.local_rotations[j]);
      os << " " << e.x() << " " << e.y() << " " << e.z();
    }
    os << "\n";
  }
  return os.str();
}

MotionClip read_bvh_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open BVH file " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  MotionClip clip = parse_bvh(buffer.str());
  clip.name = path.stem().string();
  return clip;
}

void write_bvh_file(const std::filesystem::path& path, const MotionClip& clip) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write BVH file " + path.string());
  }
  out << write_bvh(clip);
  if (!out) {
    throw std::runtime_error("failed writing BVH file " + path.string());
  }
}

}  // namespace mstyle::motion
