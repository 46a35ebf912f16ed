#pragma once

#include "mstyle/features/layout.hpp"
#include "mstyle/motion/skeleton.hpp"
#include "mstyle/numerics/tensor.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mstyle::features {

inline constexpr float kStdFloor = 1e-6f;
/// Channels at or below this spread normalize to 0 instead of being amplified.
inline constexpr float kDegenerateStd = 1e-4f;

struct ChannelStats {
  std::vector<float> mean;
  std::vector<float> std;

  /// Mean and population std per column of `data`, std floored at kStdFloor.
  static ChannelStats of(const nn::Tensor& data);
  /// (x - mean) / std per column (0 for degenerate channels) as affine coefficients
  /// for nn::affine_columns.
  std::vector<float> normalize_scale() const;
  std::vector<float> normalize_shift() const;
  friend bool operator==(const ChannelStats&, const ChannelStats&) = default;
};

struct DatasetStats {
  ChannelStats input;
  ChannelStats output;
  friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

struct ClipInfo {
  std::string name;
  std::string style;
  std::size_t first_sample = 0;
  std::size_t samples = 0;
  double frame_time = 1.0 / 60.0;
  friend bool operator==(const ClipInfo&, const ClipInfo&) = default;
};

/// One sample per consecutive frame pair of every clip, stored unnormalized.
struct Dataset {
  FeatureLayout layout;
  motion::Skeleton skeleton;
  std::vector<std::string> styles;
  std::vector<ClipInfo> clips;
  nn::Tensor inputs;                      // [N, input_dim]
  nn::Tensor targets;                     // [N, output_dim]
  std::vector<float> phase;               // p_t
  std::vector<std::uint32_t> style_index;
  std::vector<std::uint32_t> clip_index;
  std::vector<std::uint32_t> frame_index;
  DatasetStats stats;

  std::size_t size() const { return phase.size(); }
  std::size_t style_count() const { return styles.size(); }
  std::size_t style_of(const std::string& name) const;
  /// One-hot style embedding of sample `i`.
  std::vector<float> style_one_hot(std::size_t i) const;
  std::span<const float> input_row(std::size_t i) const;
  std::span<const float> target_row(std::size_t i) const;
};

/// Clips must carry style, action and contact labels; phase is derived from contacts.
/// Style vocabulary follows first appearance. Throws ConfigError for an empty clip list.
Dataset build_dataset(const std::vector<motion::MotionClip>& clips);

nlohmann::json skeleton_to_json(const motion::Skeleton& skeleton);
motion::Skeleton skeleton_from_json(const nlohmann::json& j);
nlohmann::json stats_to_json(const ChannelStats& stats);
ChannelStats stats_from_json(const nlohmann::json& j);

inline constexpr std::string_view kDatasetMagic = "MSTY0001";

void write_dataset(std::ostream& out, const Dataset& dataset);
Dataset read_dataset(std::istream& in);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace mstyle::features
