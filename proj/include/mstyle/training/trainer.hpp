#pragma once

#include "mstyle/features/dataset.hpp"
#include "mstyle/models/model.hpp"
#include "mstyle/numerics/optim.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mstyle::training {

/// Ground-truth feeding probability p per epoch: linear from p_start to
/// p_end over ramp_epochs, then held at p_end.
struct SamplingSchedule {
  double p_start = 1.0;
  double p_end = 0.0;
  std::size_t ramp_epochs = 10;

  double probability(std::size_t epoch) const;
  /// "decreasing" (1 -> 0, default) or "increasing" (0 -> 1).
  static SamplingSchedule from_direction(std::string_view direction, std::size_t ramp_epochs = 10);
  std::string direction() const { return p_end < p_start ? "decreasing" : "increasing"; }
};

struct TrainConfig {
  models::ModelConfig model;
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  std::size_t rollout_length = 8;
  SamplingSchedule schedule;
  nn::OptimizerConfig optimizer;
  std::uint64_t seed = 1;
  /// Abort when an epoch's loss exceeds this multiple of the initial loss.
  double divergence_factor = 1e3;

  void validate() const;
};

/// One rollout window: `steps` consecutive samples of a clip starting at `start`.
struct Segment {
  std::size_t clip = 0;
  std::size_t start = 0;  // sample index within the clip
};

/// Batched single-step interface the rollout drives.
class RolloutModel {
 public:
  struct Step {
    nn::Var x;                        // normalized X_t
    std::span<const float> phase;     // p_t per row
    const nn::Tensor* raw_inputs;     // unnormalized X_t rows (control channels are ground truth)
    nn::Var window;                   // normalized pose window, temporal models only
    nn::Var style;
  };
  virtual ~RolloutModel() = default;
  /// Normalized Y_t.
  virtual nn::Var forward(nn::Graph& g, const Step& step) = 0;
  /// Normalized output pose channels as normalized input pose channels.
  virtual nn::Var pose_feedback(nn::Var y) = 0;
  /// Frames in the pose window; 0 for models without history.
  virtual std::size_t window() const = 0;
};

/// Adapts a MotionModel; dropout is active while `training` is set.
class MotionRollout : public RolloutModel {
 public:
  MotionRollout(models::MotionModel& model, float dropout, bool training, Rng& rng)
      : model_(model), dropout_(dropout), training_(training), rng_(rng) {}
  nn::Var forward(nn::Graph& g, const Step& step) override;
  nn::Var pose_feedback(nn::Var y) override { return model_.output_pose_as_input(y); }
  std::size_t window() const override { return model_.config().temporal() ? model_.config().window() : 0; }

 private:
  models::MotionModel& model_;
  float dropout_;
  bool training_;
  Rng& rng_;
};

/// Scheduled-sampling rollout over a batch of segments.
///
/// Step 0 always feeds ground truth. At each later step every row draws
/// Bernoulli(p): on success the ground-truth frame is fed, otherwise the pose
/// channels come from the model's previous output (control channels stay
/// ground truth) and the phase advances by the predicted increment. The
/// returned loss is the sum over steps of the per-step MSE on normalized
/// targets. Throws NumericError naming the step on a non-finite loss.
nn::Var scheduled_rollout(nn::Graph& g, RolloutModel& model, const features::Dataset& dataset,
                          std::span<const Segment> batch, std::size_t steps, double p, Rng& rng);

/// Non-overlapping segments covering every clip, with a random offset per clip.
std::vector<Segment> epoch_segments(const features::Dataset& dataset, std::size_t steps, Rng& rng);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double p = 0.0;
  double wall_ms = 0.0;
};

struct TrainReport {
  double initial_loss = 0.0;  // rollout loss before the first update, dropout off
  std::vector<EpochRecord> epochs;
  double wall_ms = 0.0;
  std::optional<std::filesystem::path> checkpoint;

  std::vector<double> losses() const;
};

/// Thrown when training diverges; carries the report so far.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& message, TrainReport report)
      : NumericError(message), report_(std::move(report)) {}
  const TrainReport& report() const { return report_; }

 private:
  TrainReport report_;
};

class Trainer {
 public:
  Trainer(const features::Dataset& dataset, TrainConfig config);

  models::MotionModel& model() { return model_; }
  const TrainConfig& config() const { return config_; }

  /// Mean rollout loss over one epoch of segments without updates or dropout.
  double evaluate(double p);
  /// One epoch of shuffled rollout batches with Adam updates.
  EpochRecord run_epoch(std::size_t epoch);
  /// All epochs. `on_epoch` sees every record as it completes. If
  /// `telemetry_csv` is set, one row per epoch is appended to it as training
  /// goes (columns `epoch,loss,p,wall_ms`; the header is written to a new file).
  TrainReport train(const std::optional<std::filesystem::path>& telemetry_csv = std::nullopt,
                    const std::function<void(const EpochRecord&)>& on_epoch = {});

 private:
  const features::Dataset& dataset_;
  TrainConfig config_;
  models::MotionModel model_;
  Rng rng_;
  long adam_step_ = 0;
};

}  // namespace mstyle::training
