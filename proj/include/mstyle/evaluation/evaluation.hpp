#pragma once

#include "mstyle/features/dataset.hpp"
#include "mstyle/models/model.hpp"
#include "mstyle/runtime/session.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mstyle::evaluation {

/// Raised when an evaluation cannot produce a trustworthy verdict.
class InconclusiveEvaluation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- replay ----------------------------------------------------------------

inline constexpr double kReplayDivergence = 1e4;

struct ReplayResult {
  std::string clip;
  std::string style;
  std::string variant;
  std::vector<double> error;  // e(t) for generated frames t = 1..T
  double mse = 0.0;           // mean of `error`
  bool diverged = false;
  std::string failure;
};

using StepFunction = std::function<models::StepResult(const models::StepRequest&)>;

/// Autoregressive replay of one clip: seeded with the clip's first frame,
/// ground-truth control channels every step, pose channels and phase fed back.
/// e(t) is the squared error summed over joint position and rotation channels.
/// `history_frames` bounds the pose history handed to `step`.
ReplayResult replay_eval(const StepFunction& step, const features::Dataset& dataset, std::size_t clip,
                         std::size_t history_frames);
ReplayResult replay_eval(models::MotionModel& model, const features::Dataset& dataset, std::size_t clip);

/// Sum over scored pose channels of the target variance within the style's clips.
double pose_variance(const features::Dataset& dataset, const std::string& style);

/// Index of the first clip of `style`; throws ConfigError if there is none.
std::size_t first_clip_of(const features::Dataset& dataset, const std::string& style);

// ---- style classifier ------------------------------------------------------

struct ClassifierConfig {
  double window_seconds = 1.0;
  std::size_t stride = 10;
  double shrinkage = 0.1;  // pull of the pooled covariance toward its diagonal
  double min_accuracy = 0.95;
};

/// Nearest-centroid style classifier over windowed joint-rotation statistics
/// (per-channel mean and std of every 6-D rotation channel), with a pooled
/// within-style covariance for Mahalanobis distances.
class StyleClassifier {
 public:
  /// Fits on walking windows of every clip. Throws InconclusiveEvaluation if
  /// fewer than `min_accuracy` of the training windows classify to their own style.
  static StyleClassifier fit(const features::Dataset& dataset, ClassifierConfig config = {});

  std::size_t window() const { return window_; }
  std::size_t stride() const { return config_.stride; }
  const std::vector<std::string>& styles() const { return styles_; }
  double training_accuracy() const { return accuracy_; }

  /// Feature of one window of pose vectors.
  Eigen::VectorXd feature(std::span<const std::vector<float>> poses) const;
  /// Mean feature over all full windows of a pose sequence; throws ConfigError if shorter than a window.
  Eigen::VectorXd sequence_feature(std::span<const std::vector<float>> poses) const;
  /// Mahalanobis distance to every style centroid.
  std::vector<double> distances(const Eigen::VectorXd& feature) const;
  std::size_t classify(const Eigen::VectorXd& feature) const;
  double centroid_distance(std::size_t a, std::size_t b) const;

 private:
  ClassifierConfig config_;
  features::FeatureLayout layout_;
  std::size_t window_ = 60;
  std::vector<std::string> styles_;
  std::vector<Eigen::VectorXd> centroids_;
  Eigen::MatrixXd inverse_covariance_;
  double accuracy_ = 0.0;
};

// ---- scripted generation ---------------------------------------------------

/// Constant-speed walk along a circle.
struct WalkScript {
  double speed = 1.0;      // m/s
  double turn_rate = 0.0;  // rad/s of heading change
};

/// Mean walking speed and turn rate of the style's first clip, over frames
/// whose whole trajectory window is walking.
WalkScript walking_script(const features::Dataset& dataset, const std::string& style);

/// Dataset row of the first walking frame of the style's first clip.
std::size_t first_walking_sample(const features::Dataset& dataset, const std::string& style);

// ---- transition ------------------------------------------------------------

struct TransitionOptions {
  double warmup_seconds = 4.0;
  double transition_seconds = 1.0;
  double settle_seconds = 3.0;
  double final_window_seconds = 2.0;
  double continuity_factor = 3.0;
  std::uint64_t seed = 1;
};

struct TransitionResult {
  std::string from;
  std::string to;
  std::vector<double> lambdas;  // per tick from the trigger until the ramp completes
  double continuity = 0.0;      // max per-frame joint displacement over the transition
  double steady_state = 0.0;    // max per-frame joint displacement over the steady windows
  double threshold = 0.0;
  std::string classified;
  std::vector<double> final_distances;
  bool finite = true;
  bool passed = false;
};

/// Online style switch under a walking script; λ ramps linearly over
/// `transition_seconds`. Passes iff the final window is classified as `to`
/// and the continuity metric stays below continuity_factor × steady state.
/// Steady state is the larger of the windows before the trigger and at the end.
TransitionResult transition_eval(models::MotionModel& model, const features::Dataset& dataset,
                                 const StyleClassifier& classifier, const std::string& from, const std::string& to,
                                 const TransitionOptions& options = {});

// ---- interpolation ---------------------------------------------------------

struct InterpolationOptions {
  double seconds = 10.0;
  double warmup_seconds = 2.0;  // excluded from the novelty metric
  double bbox_factor = 1.5;
  std::uint64_t seed = 1;
};

struct InterpolationResult {
  std::string first;
  std::string second;
  std::size_t frames = 0;
  bool bounded = false;
  double distance_first = 0.0;
  double distance_second = 0.0;
  double parent_distance = 0.0;
  bool passed = false;
};

/// Generates under the 50/50 blend of two styles. Bounded: every value finite
/// and every root-relative joint position within bbox_factor × the training
/// bounding box (scaled about its center). Passes iff bounded and the blended
/// motion lies closer to each parent centroid than the parents are to each other.
InterpolationResult interpolation_eval(models::MotionModel& model, const features::Dataset& dataset,
                                       const StyleClassifier& classifier, const std::string& first,
                                       const std::string& second, const InterpolationOptions& options = {});

// ---- ability matrix and artifacts ------------------------------------------

struct AbilityRow {
  std::string variant;
  std::optional<bool> replay;
  std::optional<bool> transition;
  std::optional<bool> interpolation;
};

struct AbilityMatrix {
  std::vector<AbilityRow> rows;
  nlohmann::json thresholds = nlohmann::json::object();

  AbilityRow& row(const std::string& variant);
  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// `<root>/<UTC timestamp>-<config hash>`, created.
std::filesystem::path make_run_directory(const std::filesystem::path& root, const nlohmann::json& config);

/// replay_<style>_<variant>.csv with columns t,e.
std::filesystem::path write_replay_csv(const std::filesystem::path& dir, const ReplayResult& result);

struct MseRow {
  ReplayResult result;
  double threshold = 0.0;
};
void write_mse_table(const std::filesystem::path& path, const std::vector<MseRow>& rows);
void write_ability_matrix(const std::filesystem::path& path, const AbilityMatrix& matrix);

}  // namespace mstyle::evaluation
