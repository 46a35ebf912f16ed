#include "mstyle/training/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

namespace mstyle::training {

using nn::Graph;
using nn::Tensor;
using nn::Var;

double SamplingSchedule::probability(std::size_t epoch) const {
  if (epoch >= ramp_epochs) {
    return p_end;
  }
  const double t = static_cast<double>(epoch) / static_cast<double>(ramp_epochs);
  return p_start + (p_end - p_start) * t;
}

SamplingSchedule SamplingSchedule::from_direction(std::string_view direction, std::size_t ramp_epochs) {
  if (direction == "decreasing") {
    return {1.0, 0.0, ramp_epochs};
  }
  if (direction == "increasing") {
    return {0.0, 1.0, ramp_epochs};
  }
  throw ConfigError("unknown schedule direction '" + std::string(direction) + "' (expected decreasing or increasing)");
}

void TrainConfig::validate() const {
  model.validate();
  optimizer.validate();
  if (batch_size == 0) {
    throw ConfigError("batch_size must be positive");
  }
  if (epochs == 0) {
    throw ConfigError("epochs must be positive");
  }
  if (rollout_length < 2) {
    throw ConfigError("rollout_length must be at least 2");
  }
  if (schedule.ramp_epochs == 0) {
    throw ConfigError("ramp_epochs must be at least 1");
  }
  for (const double p : {schedule.p_start, schedule.p_end}) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ConfigError("schedule probability " + std::to_string(p) + " outside [0, 1]");
    }
  }
  if (!(divergence_factor > 1.0)) {
    throw ConfigError("divergence_factor must exceed 1");
  }
}

std::vector<double> TrainReport::losses() const {
  std::vector<double> out;
  out.reserve(epochs.size());
  for (const auto& e : epochs) {
    out.push_back(e.loss);
  }
  return out;
}

Var MotionRollout::forward(Graph& g, const Step& step) {
  models::ModelInputs in;
  in.x = step.x;
  in.style = step.style;
  if (model_.config().temporal()) {
    in.window = step.window;
  } else {
    in.gating = g.constant(model_.gating_features(step.phase, *step.raw_inputs));
  }
  return model_.forward(g, in, dropout_, training_, rng_).y;
}

namespace {

Tensor gather_rows(const Tensor& source, std::span<const std::size_t> rows, std::span<const float> scale,
                   std::span<const float> shift) {
  const std::size_t cols = source.cols();
  Tensor out({rows.size(), cols});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const float* src = source.data().data() + rows[r] * cols;
    float* dst = out.data().data() + r * cols;
    if (scale.empty()) {
      std::copy(src, src + cols, dst);
    } else {
      for (std::size_t c = 0; c < cols; ++c) {
        dst[c] = src[c] * scale[c] + shift[c];
      }
    }
  }
  return out;
}

float wrap_phase(float p) {
  p -= std::floor(p);
  return p >= 1.0f ? 0.0f : p;
}

}  // namespace

Var scheduled_rollout(Graph& g, RolloutModel& model, const features::Dataset& dataset, std::span<const Segment> batch,
                      std::size_t steps, double p, Rng& rng) {
  if (batch.empty() || steps == 0) {
    throw ConfigError("rollout needs at least one segment and one step");
  }
  const auto& layout = dataset.layout;
  const std::size_t rows = batch.size();
  const std::size_t pose = layout.pose_dim();
  const std::size_t control = layout.input_dim() - pose;
  const std::size_t phase_channel = layout.phase_delta_channel();
  const auto in_scale = dataset.stats.input.normalize_scale();
  const auto in_shift = dataset.stats.input.normalize_shift();
  const auto out_scale = dataset.stats.output.normalize_scale();
  const auto out_shift = dataset.stats.output.normalize_shift();
  const float phase_std = dataset.stats.output.std[phase_channel];
  const float phase_mean = dataset.stats.output.mean[phase_channel];

  std::vector<std::size_t> base(rows);
  Tensor style({rows, dataset.style_count()});
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& clip = dataset.clips.at(batch[r].clip);
    if (batch[r].start + steps > clip.samples) {
      throw ConfigError("segment at sample " + std::to_string(batch[r].start) + " of clip '" + clip.name +
                        "' runs past its end");
    }
    base[r] = clip.first_sample + batch[r].start;
    style.at(r, dataset.style_index[base[r]]) = 1.0f;
  }
  const Var style_var = g.constant(std::move(style));

  // Pose history before the segment, replicating the clip's first frame.
  const std::size_t window = model.window();
  std::vector<Var> history;
  if (window > 1) {
    std::vector<std::size_t> idx(rows);
    for (std::size_t k = window - 1; k >= 1; --k) {
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t first = dataset.clips[batch[r].clip].first_sample;
        idx[r] = base[r] >= first + k ? base[r] - k : first;
      }
      const Tensor x = gather_rows(dataset.inputs, idx, in_scale, in_shift);
      Tensor poses({rows, pose});
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(x.data().data() + r * x.cols(), pose, poses.data().data() + r * pose);
      }
      history.push_back(g.constant(std::move(poses)));
    }
  }

  std::vector<std::size_t> idx(rows);
  std::vector<float> phase(rows);
  std::vector<float> predicted_phase(rows);
  std::vector<bool> take_truth(rows, true);
  Var fed_pose;
  Var total;
  for (std::size_t j = 0; j < steps; ++j) {
    for (std::size_t r = 0; r < rows; ++r) {
      idx[r] = base[r] + j;
    }
    const Tensor raw = gather_rows(dataset.inputs, idx, {}, {});
    const Var truth = g.constant(gather_rows(dataset.inputs, idx, in_scale, in_shift));
    const Var target = g.constant(gather_rows(dataset.targets, idx, out_scale, out_shift));

    Var x = truth;
    bool any_model = false;
    for (std::size_t r = 0; r < rows; ++r) {
      take_truth[r] = j == 0 || rng.bernoulli(p);
      any_model = any_model || !take_truth[r];
      phase[r] = take_truth[r] ? dataset.phase[idx[r]] : predicted_phase[r];
    }
    if (any_model) {
      const Var fed = nn::concat_cols({fed_pose, nn::slice_cols(truth, pose, control)});
      x = nn::where_rows(take_truth, truth, fed);
    }

    Var window_var;
    if (window > 0) {
      history.push_back(nn::slice_cols(x, 0, pose));
      const std::size_t from = history.size() > window ? history.size() - window : 0;
      window_var = nn::stack_time(std::vector<Var>(history.begin() + static_cast<std::ptrdiff_t>(from), history.end()));
    }

    const RolloutModel::Step step{x, phase, &raw, window_var, style_var};
    const Var y = model.forward(g, step);
    const Var loss = nn::mse(y, target);
    if (!std::isfinite(loss.value()[0])) {
      throw NumericError("non-finite rollout loss at step " + std::to_string(j));
    }
    total = j == 0 ? loss : nn::add(total, loss);

    if (j + 1 < steps) {
      fed_pose = model.pose_feedback(y);
      const Tensor& yv = y.value();
      for (std::size_t r = 0; r < rows; ++r) {
        predicted_phase[r] = wrap_phase(phase[r] + yv.at(r, phase_channel) * phase_std + phase_mean);
      }
    }
  }
  return total;
}

std::vector<Segment> epoch_segments(const features::Dataset& dataset, std::size_t steps, Rng& rng) {
  std::vector<Segment> out;
  for (std::size_t c = 0; c < dataset.clips.size(); ++c) {
    const std::size_t n = dataset.clips[c].samples;
    if (n < steps) {
      continue;
    }
    const std::size_t offset = rng.below(std::min(steps, n - steps + 1));
    for (std::size_t s = offset; s + steps <= n; s += steps) {
      out.push_back({c, s});
    }
  }
  return out;
}

namespace {

void shuffle(std::vector<Segment>& segments, Rng& rng) {
  for (std::size_t i = segments.size(); i > 1; --i) {
    std::swap(segments[i - 1], segments[rng.below(i)]);
  }
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

Trainer::Trainer(const features::Dataset& dataset, TrainConfig config)
    : dataset_(dataset),
      config_((config.validate(), std::move(config))),
      model_(config_.model, dataset),
      rng_(Rng::derive(config_.seed, 0x747261696eULL)) {
  Rng probe(0);
  if (epoch_segments(dataset_, config_.rollout_length, probe).empty()) {
    throw ConfigError("no clip has " + std::to_string(config_.rollout_length) + " samples for a rollout segment");
  }
}

double Trainer::evaluate(double p) {
  const nn::DenormalGuard denormals;
  Rng rng = Rng::derive(config_.seed, 0x6576616cULL);
  const auto segments = epoch_segments(dataset_, config_.rollout_length, rng);
  MotionRollout rollout(model_, 0.0f, false, rng);
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t b = 0; b < segments.size(); b += config_.batch_size) {
    const std::size_t count = std::min(config_.batch_size, segments.size() - b);
    Graph g(nn::GradMode::disabled);
    const Var loss = scheduled_rollout(g, rollout, dataset_, std::span(segments).subspan(b, count),
                                       config_.rollout_length, p, rng);
    total += loss.value()[0];
    ++batches;
  }
  return total / static_cast<double>(batches);
}

EpochRecord Trainer::run_epoch(std::size_t epoch) {
  const nn::DenormalGuard denormals;
  const auto started = std::chrono::steady_clock::now();
  EpochRecord record;
  record.epoch = epoch;
  record.p = config_.schedule.probability(epoch);
  auto segments = epoch_segments(dataset_, config_.rollout_length, rng_);
  shuffle(segments, rng_);
  MotionRollout rollout(model_, config_.optimizer.dropout_rate, true, rng_);
  const auto params = model_.parameters();
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t b = 0; b < segments.size(); b += config_.batch_size) {
    const std::size_t count = std::min(config_.batch_size, segments.size() - b);
    Graph g;
    const Var loss = scheduled_rollout(g, rollout, dataset_, std::span(segments).subspan(b, count),
                                       config_.rollout_length, record.p, rng_);
    g.backward(loss);
    nn::adam_step(params, config_.optimizer, ++adam_step_);
    total += loss.value()[0];
    ++batches;
  }
  record.loss = total / static_cast<double>(batches);
  record.wall_ms = elapsed_ms(started);
  return record;
}

TrainReport Trainer::train(const std::optional<std::filesystem::path>& telemetry_csv,
                           const std::function<void(const EpochRecord&)>& on_epoch) {
  const auto started = std::chrono::steady_clock::now();
  TrainReport report;
  report.initial_loss = evaluate(config_.schedule.probability(0));
  std::ofstream csv;
  if (telemetry_csv) {
    std::error_code ec;
    const bool fresh = !std::filesystem::exists(*telemetry_csv, ec) || std::filesystem::file_size(*telemetry_csv, ec) == 0;
    csv.open(*telemetry_csv, std::ios::app);
    if (!csv) {
      throw ConfigError("cannot write telemetry to " + telemetry_csv->string());
    }
    if (fresh) {
      csv << "epoch,loss,p,wall_ms\n" << std::flush;
    }
  }
  const double limit = config_.divergence_factor * std::max(report.initial_loss, 1e-6);
  for (std::size_t epoch = 0; epoch < config_.epochs; ++epoch) {
    const EpochRecord record = run_epoch(epoch);
    report.epochs.push_back(record);
    if (csv.is_open()) {
      csv << record.epoch << ',' << record.loss << ',' << record.p << ',' << record.wall_ms << '\n' << std::flush;
    }
    if (on_epoch) {
      on_epoch(record);
    }
    if (!std::isfinite(record.loss) || record.loss > limit) {
      report.wall_ms = elapsed_ms(started);
      throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + ": loss " +
                                 std::to_string(record.loss) + " exceeds " + std::to_string(limit) +
                                 " (initial " + std::to_string(report.initial_loss) + ")",
                             std::move(report));
    }
  }
  report.wall_ms = elapsed_ms(started);
  return report;
}

}  // namespace mstyle::training
