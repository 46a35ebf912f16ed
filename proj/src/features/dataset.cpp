#include "mstyle/features/dataset.hpp"

#include "mstyle/container.hpp"
#include "mstyle/features/frame.hpp"
#include "mstyle/features/phase.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace mstyle::features {

ChannelStats ChannelStats::of(const nn::Tensor& data) {
  const std::size_t rows = data.rows();
  const std::size_t cols = data.cols();
  std::vector<double> sum(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      sum[c] += data.at(r, c);
    }
  }
  ChannelStats s;
  s.mean.resize(cols);
  s.std.resize(cols);
  std::vector<double> mean(cols);
  for (std::size_t c = 0; c < cols; ++c) {
    mean[c] = rows > 0 ? sum[c] / static_cast<double>(rows) : 0.0;
    s.mean[c] = static_cast<float>(mean[c]);
  }
  std::vector<double> ss(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = data.at(r, c) - mean[c];
      ss[c] += d * d;
    }
  }
  for (std::size_t c = 0; c < cols; ++c) {
    const double sd = rows > 0 ? std::sqrt(ss[c] / static_cast<double>(rows)) : 0.0;
    s.std[c] = std::max(static_cast<float>(sd), kStdFloor);
  }
  return s;
}

std::vector<float> ChannelStats::normalize_scale() const {
  std::vector<float> out(std.size());
  for (std::size_t c = 0; c < std.size(); ++c) {
    out[c] = std[c] > kDegenerateStd ? 1.0f / std[c] : 0.0f;
  }
  return out;
}

std::vector<float> ChannelStats::normalize_shift() const {
  std::vector<float> out(std.size());
  for (std::size_t c = 0; c < std.size(); ++c) {
    out[c] = std[c] > kDegenerateStd ? -mean[c] / std[c] : 0.0f;
  }
  return out;
}

std::size_t Dataset::style_of(const std::string& name) const {
  const auto it = std::find(styles.begin(), styles.end(), name);
  if (it == styles.end()) {
    throw ConfigError("unknown style '" + name + "'");
  }
  return static_cast<std::size_t>(it - styles.begin());
}

std::vector<float> Dataset::style_one_hot(std::size_t i) const {
  std::vector<float> s(styles.size(), 0.0f);
  s.at(style_index.at(i)) = 1.0f;
  return s;
}

std::span<const float> Dataset::input_row(std::size_t i) const {
  return inputs.data().subspan(i * layout.input_dim(), layout.input_dim());
}

std::span<const float> Dataset::target_row(std::size_t i) const {
  return targets.data().subspan(i * layout.output_dim(), layout.output_dim());
}

Dataset build_dataset(const std::vector<motion::MotionClip>& clips) {
  if (clips.empty()) {
    throw ConfigError("build_dataset needs at least one clip");
  }
  Dataset ds;
  ds.skeleton = clips.front().skeleton;
  ds.layout.joints = ds.skeleton.size();
  std::size_t total = 0;
  for (const auto& clip : clips) {
    clip.validate();
    if (!(clip.skeleton == ds.skeleton)) {
      throw ConfigError("clip '" + clip.name + "' uses a different skeleton");
    }
    if (!clip.has_labels()) {
      throw ConfigError("clip '" + clip.name + "' lacks action or contact labels");
    }
    if (clip.style_label.empty()) {
      throw ConfigError("clip '" + clip.name + "' has no style label");
    }
    if (std::find(ds.styles.begin(), ds.styles.end(), clip.style_label) == ds.styles.end()) {
      ds.styles.push_back(clip.style_label);
    }
    total += clip.frames.size() > 0 ? clip.frames.size() - 1 : 0;
  }
  const FeatureLayout& L = ds.layout;
  ds.inputs = nn::Tensor({total, L.input_dim()});
  ds.targets = nn::Tensor({total, L.output_dim()});
  ds.phase.reserve(total);
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < clips.size(); ++ci) {
    const auto& clip = clips[ci];
    const std::vector<double> phase = compute_phase(clip.contact_labels, clip.action_labels);
    const std::vector<RootFrame> roots = root_frames(clip);
    ClipInfo info{clip.name, clip.style_label, row, 0, clip.frame_time};
    const auto style = static_cast<std::uint32_t>(ds.style_of(clip.style_label));
    std::vector<float> current = clip.frames.empty() ? std::vector<float>{} : frame_features(clip, roots, 0, L);
    for (std::size_t t = 0; t + 1 < clip.frames.size(); ++t) {
      std::vector<float> next = frame_features(clip, roots, t + 1, L);
      std::copy(current.begin(), current.end(), ds.inputs.data().begin() + static_cast<long>(row * L.input_dim()));
      auto y = ds.targets.data().subspan(row * L.output_dim(), L.output_dim());
      std::copy(next.begin(), next.end(), y.begin());
      y[L.phase_delta_channel()] = static_cast<float>(phase_delta(phase[t], phase[t + 1]));
      ds.phase.push_back(static_cast<float>(phase[t]));
      ds.style_index.push_back(style);
      ds.clip_index.push_back(static_cast<std::uint32_t>(ci));
      ds.frame_index.push_back(static_cast<std::uint32_t>(t));
      current = std::move(next);
      ++row;
      ++info.samples;
    }
    ds.clips.push_back(info);
  }
  ds.stats.input = ChannelStats::of(ds.inputs);
  ds.stats.output = ChannelStats::of(ds.targets);
  return ds;
}

nlohmann::json skeleton_to_json(const motion::Skeleton& skeleton) {
  nlohmann::json joints = nlohmann::json::array();
  for (const auto& j : skeleton.joints()) {
    joints.push_back({{"name", j.name},
                      {"parent", j.parent},
                      {"offset", {j.offset.x(), j.offset.y(), j.offset.z()}},
                      {"rotation_order", j.rotation_order}});
  }
  return joints;
}

motion::Skeleton skeleton_from_json(const nlohmann::json& j) {
  if (!j.is_array()) {
    throw_bad_field("skeleton");
  }
  std::vector<motion::Joint> joints;
  for (const auto& e : j) {
    motion::Joint joint;
    joint.name = json_field<std::string>(e, "name");
    joint.parent = json_field<int>(e, "parent");
    const auto off = json_field<std::vector<double>>(e, "offset");
    if (off.size() != 3) {
      throw_bad_field("offset");
    }
    joint.offset = Eigen::Vector3d(off[0], off[1], off[2]);
    joint.rotation_order = json_field<std::string>(e, "rotation_order");
    joints.push_back(std::move(joint));
  }
  try {
    return motion::Skeleton(std::move(joints));
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("invalid skeleton: ") + e.what());
  }
}

nlohmann::json stats_to_json(const ChannelStats& stats) { return {{"mean", stats.mean}, {"std", stats.std}}; }

ChannelStats stats_from_json(const nlohmann::json& j) {
  ChannelStats s;
  s.mean = json_field<std::vector<float>>(j, "mean");
  s.std = json_field<std::vector<float>>(j, "std");
  if (s.mean.size() != s.std.size()) {
    throw ParseError("stats mean and std lengths differ");
  }
  return s;
}

namespace {

std::vector<float> as_float(const std::vector<std::uint32_t>& v) { return {v.begin(), v.end()}; }

std::vector<std::uint32_t> as_index(const std::vector<float>& v, const char* what) {
  std::vector<std::uint32_t> out;
  out.reserve(v.size());
  for (float f : v) {
    if (!(f >= 0.0f) || f != std::floor(f)) {
      throw ParseError(std::string("array '") + what + "' holds a non-index value");
    }
    out.push_back(static_cast<std::uint32_t>(f));
  }
  return out;
}

}  // namespace

void write_dataset(std::ostream& out, const Dataset& ds) {
  Container c;
  nlohmann::json& h = c.header;
  h["format"] = std::string(kDatasetMagic);
  h["version"] = 1;
  h["layout"] = {{"joints", ds.layout.joints}, {"input_dim", ds.layout.input_dim()},
                 {"output_dim", ds.layout.output_dim()}};
  const std::vector<std::string> names = ds.skeleton.joint_names();
  h["input_channels"] = ds.layout.input_channel_names(names);
  h["output_channels"] = ds.layout.output_channel_names(names);
  h["skeleton"] = skeleton_to_json(ds.skeleton);
  h["styles"] = ds.styles;
  nlohmann::json clips = nlohmann::json::array();
  for (const auto& ci : ds.clips) {
    clips.push_back({{"name", ci.name},
                     {"style", ci.style},
                     {"first_sample", ci.first_sample},
                     {"samples", ci.samples},
                     {"frame_time", ci.frame_time}});
  }
  h["clips"] = clips;
  h["stats"] = {{"input", stats_to_json(ds.stats.input)}, {"output", stats_to_json(ds.stats.output)}};
  const std::size_t n = ds.size();
  c.arrays.push_back({"inputs", {n, ds.layout.input_dim()}, ds.inputs.storage()});
  c.arrays.push_back({"targets", {n, ds.layout.output_dim()}, ds.targets.storage()});
  c.arrays.push_back({"phase", {n}, ds.phase});
  c.arrays.push_back({"style", {n}, as_float(ds.style_index)});
  c.arrays.push_back({"clip", {n}, as_float(ds.clip_index)});
  c.arrays.push_back({"frame", {n}, as_float(ds.frame_index)});
  write_container(out, kDatasetMagic, c);
}

Dataset read_dataset(std::istream& in) {
  const Container c = read_container(in, kDatasetMagic);
  const auto& h = c.header;
  if (json_field<int>(h, "version") != 1) {
    throw ParseError("unsupported dataset version " + h["version"].dump());
  }
  Dataset ds;
  ds.skeleton = skeleton_from_json(json_field<nlohmann::json>(h, "skeleton"));
  const auto layout = json_field<nlohmann::json>(h, "layout");
  ds.layout.joints = json_field<std::size_t>(layout, "joints");
  if (ds.layout.joints != ds.skeleton.size() || json_field<std::size_t>(layout, "input_dim") != ds.layout.input_dim() ||
      json_field<std::size_t>(layout, "output_dim") != ds.layout.output_dim()) {
    throw ParseError("dataset layout does not match its skeleton");
  }
  ds.styles = json_field<std::vector<std::string>>(h, "styles");
  for (const auto& e : json_field<nlohmann::json>(h, "clips")) {
    ds.clips.push_back({json_field<std::string>(e, "name"), json_field<std::string>(e, "style"),
                        json_field<std::size_t>(e, "first_sample"), json_field<std::size_t>(e, "samples"),
                        json_field<double>(e, "frame_time")});
  }
  const auto stats = json_field<nlohmann::json>(h, "stats");
  ds.stats.input = stats_from_json(json_field<nlohmann::json>(stats, "input"));
  ds.stats.output = stats_from_json(json_field<nlohmann::json>(stats, "output"));

  const auto& inputs = c.array("inputs");
  const auto& targets = c.array("targets");
  const std::size_t n = c.array("phase").values.size();
  if (inputs.shape != std::vector<std::size_t>{n, ds.layout.input_dim()} ||
      targets.shape != std::vector<std::size_t>{n, ds.layout.output_dim()}) {
    throw ParseError("dataset array shapes disagree with the layout");
  }
  ds.inputs = nn::Tensor(inputs.shape, inputs.values);
  ds.targets = nn::Tensor(targets.shape, targets.values);
  ds.phase = c.array("phase").values;
  ds.style_index = as_index(c.array("style").values, "style");
  ds.clip_index = as_index(c.array("clip").values, "clip");
  ds.frame_index = as_index(c.array("frame").values, "frame");
  if (ds.style_index.size() != n || ds.clip_index.size() != n || ds.frame_index.size() != n) {
    throw ParseError("dataset index arrays have inconsistent lengths");
  }
  for (std::uint32_t s : ds.style_index) {
    if (s >= ds.styles.size()) {
      throw ParseError("style index outside the style vocabulary");
    }
  }
  return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write dataset " + path.string());
  }
  write_dataset(out, dataset);
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open dataset " + path.string());
  }
  return read_dataset(in);
}

}  // namespace mstyle::features
