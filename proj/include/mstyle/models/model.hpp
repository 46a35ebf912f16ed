#pragma once

#include "mstyle/features/dataset.hpp"
#include "mstyle/models/components.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mstyle::models {

enum class Variant { snsm, mtcn, mtcn_in };

std::string variant_name(Variant v);
/// Accepts "snsm", "mtcn", "mtcn-in" / "mtcn_in". Throws ConfigError otherwise.
Variant parse_variant(std::string_view name);

struct ModelConfig {
  Variant variant = Variant::mtcn_in;
  std::size_t experts = 4;
  std::size_t moe_layers = 3;
  std::size_t hidden = 256;
  std::vector<std::size_t> gating_hidden{128, 128};
  std::vector<std::size_t> modulator_hidden{};
  std::size_t tau = 30;  // history frames before the current one
  float eps = 0.3f;      // minimum std of window instance normalization
  std::size_t tcn_kernel = 5;
  std::vector<std::size_t> tcn_channels{128, 128, 64};
  std::uint64_t seed = 1;

  void validate() const;
  bool temporal() const { return variant != Variant::snsm; }
  std::size_t window() const { return tau + 1; }
  /// Rows of expert weights: one shared row for SNSM, one per MOE layer otherwise.
  std::size_t alpha_layers() const { return temporal() ? moe_layers : 1; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json config_to_json(const ModelConfig& c);
ModelConfig config_from_json(const nlohmann::json& j);

/// Batched model inputs, all normalized except the style embedding.
struct ModelInputs {
  nn::Var x;       // X_t [B x input_dim]
  nn::Var gating;  // SNSM only: phase (x) gait trajectory [B x 2*gait_dim]
  nn::Var window;  // temporal variants: pose window [B x (tau+1) x pose_dim]
  nn::Var style;   // [B x styles]
};

struct ModelOutputs {
  nn::Var y;          // normalized Y_t [B x output_dim]
  nn::Var alpha_pre;  // gating output [B x alpha_layers*experts]
  nn::Var alpha;      // after style modulation
};

/// Unnormalized single-frame step request.
struct StepRequest {
  std::span<const float> input;                      // X_t
  float phase = 0.0f;                                // p_t, SNSM gating
  const std::vector<std::vector<float>>* history = nullptr;  // pose channels, oldest first, ending at t
  std::span<const float> style;
};

struct StepResult {
  std::vector<float> output;                     // Y_t, unnormalized
  std::vector<std::vector<float>> experts;       // post-modulation alpha per row
  std::vector<std::vector<float>> experts_pre;   // gating output per row
};

/// SNSM, MTCN or MTCN-IN with its normalization statistics and style vocabulary.
class MotionModel {
 public:
  MotionModel(ModelConfig config, motion::Skeleton skeleton, std::vector<std::string> styles,
              features::DatasetStats stats);
  /// Convenience: layout, skeleton, styles and stats taken from a dataset.
  MotionModel(ModelConfig config, const features::Dataset& dataset);

  MotionModel(const MotionModel&) = delete;
  MotionModel& operator=(const MotionModel&) = delete;
  MotionModel(MotionModel&&) = default;
  MotionModel& operator=(MotionModel&&) = default;

  ModelOutputs forward(nn::Graph& g, const ModelInputs& in, float dropout, bool training, Rng& rng);

  /// Inference step with gradients disabled. Throws StateError on an empty
  /// history for the temporal variants and NumericError on non-finite values.
  StepResult step(const StepRequest& request);

  const ModelConfig& config() const { return config_; }
  const features::FeatureLayout& layout() const { return layout_; }
  const motion::Skeleton& skeleton() const { return skeleton_; }
  const std::vector<std::string>& styles() const { return styles_; }
  const features::DatasetStats& stats() const { return stats_; }

  std::vector<nn::Parameter*> parameters();
  std::size_t parameter_count();
  StyleModulator& modulator() { return modulator_; }
  MoeLayer& moe_layer(std::size_t l) { return moe_.at(l); }
  TcnEncoder& encoder() { return tcn_; }

  // Normalization at the model boundary.
  nn::Tensor normalize_inputs(const nn::Tensor& x) const;
  nn::Tensor denormalize_outputs(const nn::Tensor& y) const;
  nn::Tensor normalize_pose_window(const std::vector<std::vector<float>>& history) const;
  /// Normalized output pose channels re-expressed as normalized input pose channels.
  nn::Var output_pose_as_input(nn::Var y) const;
  /// Phase encoding (x) raw gait channels of unnormalized inputs.
  nn::Tensor gating_features(std::span<const float> phase, const nn::Tensor& raw_inputs) const;

 private:
  ModelConfig config_;
  features::FeatureLayout layout_;
  motion::Skeleton skeleton_;
  std::vector<std::string> styles_;
  features::DatasetStats stats_;
  std::vector<float> in_scale_, in_shift_;
  std::vector<float> pose_out_to_in_scale_, pose_out_to_in_shift_;

  std::vector<MoeLayer> moe_;
  Mlp gating_;
  StyleModulator modulator_;
  TcnEncoder tcn_;
};

inline constexpr std::string_view kCheckpointMagic = "MCKP0001";
inline constexpr int kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, MotionModel& model);
/// Throws ParseError naming the offending field on version, shape or vocabulary mismatch.
MotionModel read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, MotionModel& model);
MotionModel load_checkpoint(const std::filesystem::path& path);

/// Throws ConfigError naming the field if the model cannot consume this dataset.
void check_compatible(const MotionModel& model, const features::Dataset& dataset);

}  // namespace mstyle::models
