#include "mstyle/evaluation/evaluation.hpp"

#include "mstyle/container.hpp"
#include "mstyle/features/phase.hpp"

#include <Eigen/Cholesky>

#include <chrono>
#include <cmath>
#include <ctime>
#include <deque>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace mstyle::evaluation {

using features::Dataset;

namespace {

bool is_walking(const Dataset& d, std::size_t row) {
  const std::size_t c = d.layout.gait_offset() + features::kGaitClasses * features::kCenterSample +
                        static_cast<std::size_t>(motion::Gait::walk);
  return d.inputs.at(row, c) > 0.5f;
}

/// Walking across every trajectory sample, so away from starts and stops.
bool is_cruising(const Dataset& d, std::size_t row) {
  for (std::size_t k = 0; k < features::kTrajectorySamples; ++k) {
    const std::size_t c =
        d.layout.gait_offset() + features::kGaitClasses * k + static_cast<std::size_t>(motion::Gait::walk);
    if (d.inputs.at(row, c) <= 0.5f) {
      return false;
    }
  }
  return true;
}

double frames_per_second(const Dataset& d) { return 1.0 / d.clips.front().frame_time; }

std::size_t style_index(const Dataset& d, const std::string& style) {
  for (std::size_t i = 0; i < d.styles.size(); ++i) {
    if (d.styles[i] == style) {
      return i;
    }
  }
  throw ConfigError("unknown style '" + style + "'");
}

std::vector<float> pose_of_row(const Dataset& d, std::size_t row) {
  const auto x = d.input_row(row);
  return {x.begin(), x.begin() + static_cast<std::ptrdiff_t>(d.layout.pose_dim())};
}

/// Largest joint displacement between two root-relative poses.
double displacement(const features::FeatureLayout& layout, const std::vector<float>& a, const std::vector<float>& b) {
  double worst = 0.0;
  for (std::size_t j = 0; j < layout.joints; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double diff = a[layout.position_offset() + 3 * j + k] - b[layout.position_offset() + 3 * j + k];
      s += diff * diff;
    }
    worst = std::max(worst, std::sqrt(s));
  }
  return worst;
}

/// Max displacement over consecutive pairs (i - 1, i) for i in [begin, end).
double max_displacement(const features::FeatureLayout& layout, const std::vector<std::vector<float>>& poses,
                        std::size_t begin, std::size_t end) {
  double worst = 0.0;
  for (std::size_t i = std::max<std::size_t>(begin, 1); i < end && i < poses.size(); ++i) {
    worst = std::max(worst, displacement(layout, poses[i - 1], poses[i]));
  }
  return worst;
}

bool all_finite(const std::vector<float>& v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

/// Drives a session along a circular walking script.
class ScriptedWalk {
 public:
  ScriptedWalk(runtime::Session& session, double fps) : session_(session), fps_(fps) {}

  /// One tick; returns false once the session has faulted.
  bool tick(const WalkScript& script) {
    runtime::ControlState control;
    control.direction = {std::sin(heading_), std::cos(heading_)};
    control.speed = script.speed;
    control.gait = motion::Gait::walk;
    session_.set_control(control);
    heading_ += script.turn_rate / fps_;
    const runtime::Frame frame = session_.tick();
    lambdas.push_back(frame.lambda);
    poses.push_back(frame.pose);
    finite = finite && !frame.faulted && all_finite(frame.pose);
    return finite;
  }

  std::vector<std::vector<float>> poses;
  std::vector<double> lambdas;
  bool finite = true;

 private:
  runtime::Session& session_;
  double fps_;
  double heading_ = 0.0;
};

}  // namespace

// ---- replay ----------------------------------------------------------------

ReplayResult replay_eval(const StepFunction& step, const Dataset& dataset, std::size_t clip,
                         std::size_t history_frames) {
  const auto& info = dataset.clips.at(clip);
  const auto& layout = dataset.layout;
  const std::size_t pose = layout.pose_dim();
  ReplayResult result;
  result.clip = info.name;
  result.style = info.style;
  if (info.samples == 0) {
    return result;
  }
  const std::size_t first = info.first_sample;
  const auto seed = dataset.input_row(first);
  std::vector<float> x(seed.begin(), seed.end());
  float phase = dataset.phase[first];
  const std::vector<float> style = dataset.style_one_hot(first);
  std::deque<std::vector<float>> history{pose_of_row(dataset, first)};
  history_frames = std::max<std::size_t>(history_frames, 1);

  for (std::size_t i = 0; i < info.samples; ++i) {
    const std::size_t row = first + i;
    const auto truth = dataset.input_row(row);
    std::copy(truth.begin() + static_cast<std::ptrdiff_t>(pose), truth.end(), x.begin() + static_cast<std::ptrdiff_t>(pose));
    const std::vector<std::vector<float>> window(history.begin(), history.end());
    std::vector<float> out;
    try {
      out = step({x, phase, &window, style}).output;
    } catch (const NumericError& e) {
      result.diverged = true;
      result.failure = "step " + std::to_string(i) + ": " + e.what();
      break;
    }
    const auto target = dataset.target_row(row);
    double e = 0.0;
    for (std::size_t c = 0; c < layout.pose_error_dim(); ++c) {
      const double d = static_cast<double>(out[c]) - target[c];
      e += d * d;
    }
    if (!std::isfinite(e) || e > kReplayDivergence) {
      result.diverged = true;
      result.failure = "e(" + std::to_string(i + 1) + ") = " + std::to_string(e) + " exceeds " +
                       std::to_string(kReplayDivergence);
      break;
    }
    result.error.push_back(e);
    std::copy_n(out.begin(), pose, x.begin());
    phase = static_cast<float>(features::wrap_phase(phase + out[layout.phase_delta_channel()]));
    history.emplace_back(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(pose));
    while (history.size() > history_frames) {
      history.pop_front();
    }
  }
  double total = 0.0;
  for (const double e : result.error) {
    total += e;
  }
  result.mse = result.error.empty() ? 0.0 : total / static_cast<double>(result.error.size());
  return result;
}

ReplayResult replay_eval(models::MotionModel& model, const Dataset& dataset, std::size_t clip) {
  models::check_compatible(model, dataset);
  const std::size_t frames = model.config().temporal() ? model.config().window() : 1;
  ReplayResult r = replay_eval([&](const models::StepRequest& req) { return model.step(req); }, dataset, clip, frames);
  r.variant = models::variant_name(model.config().variant);
  return r;
}

double pose_variance(const Dataset& dataset, const std::string& style) {
  const std::size_t channels = dataset.layout.pose_error_dim();
  std::vector<double> sum(channels, 0.0);
  std::vector<double> sq(channels, 0.0);
  std::size_t n = 0;
  for (std::size_t row = 0; row < dataset.size(); ++row) {
    if (dataset.styles[dataset.style_index[row]] != style) {
      continue;
    }
    const auto y = dataset.target_row(row);
    for (std::size_t c = 0; c < channels; ++c) {
      sum[c] += y[c];
      sq[c] += static_cast<double>(y[c]) * y[c];
    }
    ++n;
  }
  if (n == 0) {
    throw ConfigError("no samples of style '" + style + "'");
  }
  double total = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    const double mean = sum[c] / static_cast<double>(n);
    total += std::max(0.0, sq[c] / static_cast<double>(n) - mean * mean);
  }
  return total;
}

std::size_t first_clip_of(const Dataset& dataset, const std::string& style) {
  for (std::size_t c = 0; c < dataset.clips.size(); ++c) {
    if (dataset.clips[c].style == style) {
      return c;
    }
  }
  throw ConfigError("no clip of style '" + style + "'");
}

// ---- style classifier ------------------------------------------------------

Eigen::VectorXd StyleClassifier::feature(std::span<const std::vector<float>> poses) const {
  const std::size_t channels = 6 * layout_.joints;
  Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(2 * channels));
  const double n = static_cast<double>(poses.size());
  for (std::size_t c = 0; c < channels; ++c) {
    double s = 0.0;
    double q = 0.0;
    for (const auto& p : poses) {
      const double v = p[layout_.rotation_offset() + c];
      s += v;
      q += v * v;
    }
    const double mean = s / n;
    f[static_cast<Eigen::Index>(c)] = mean;
    f[static_cast<Eigen::Index>(channels + c)] = std::sqrt(std::max(0.0, q / n - mean * mean));
  }
  return f;
}

Eigen::VectorXd StyleClassifier::sequence_feature(std::span<const std::vector<float>> poses) const {
  if (poses.size() < window_) {
    throw ConfigError("sequence of " + std::to_string(poses.size()) + " frames is shorter than the " +
                      std::to_string(window_) + "-frame classifier window");
  }
  Eigen::VectorXd total;
  std::size_t count = 0;
  for (std::size_t s = 0; s + window_ <= poses.size(); s += config_.stride) {
    const Eigen::VectorXd f = feature(poses.subspan(s, window_));
    total = count == 0 ? f : Eigen::VectorXd(total + f);
    ++count;
  }
  return total / static_cast<double>(count);
}

std::vector<double> StyleClassifier::distances(const Eigen::VectorXd& feature) const {
  std::vector<double> out;
  for (const auto& c : centroids_) {
    const Eigen::VectorXd d = feature - c;
    out.push_back(std::sqrt(std::max(0.0, d.dot(inverse_covariance_ * d))));
  }
  return out;
}

std::size_t StyleClassifier::classify(const Eigen::VectorXd& feature) const {
  const auto d = distances(feature);
  return static_cast<std::size_t>(std::min_element(d.begin(), d.end()) - d.begin());
}

double StyleClassifier::centroid_distance(std::size_t a, std::size_t b) const {
  const Eigen::VectorXd d = centroids_.at(a) - centroids_.at(b);
  return std::sqrt(std::max(0.0, d.dot(inverse_covariance_ * d)));
}

StyleClassifier StyleClassifier::fit(const Dataset& dataset, ClassifierConfig config) {
  if (dataset.clips.empty() || config.stride == 0 || !(config.window_seconds > 0.0)) {
    throw ConfigError("classifier needs clips, a positive stride and a positive window");
  }
  StyleClassifier c;
  c.config_ = config;
  c.layout_ = dataset.layout;
  c.styles_ = dataset.styles;
  c.window_ = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(config.window_seconds * frames_per_second(dataset))));

  std::vector<Eigen::VectorXd> features;
  std::vector<std::size_t> labels;
  for (const auto& clip : dataset.clips) {
    const std::size_t s = style_index(dataset, clip.style);
    std::vector<std::vector<float>> poses;
    std::vector<bool> walking;
    for (std::size_t i = 0; i < clip.samples; ++i) {
      poses.push_back(pose_of_row(dataset, clip.first_sample + i));
      walking.push_back(is_walking(dataset, clip.first_sample + i));
    }
    for (std::size_t start = 0; start + c.window_ <= poses.size(); start += config.stride) {
      if (std::all_of(walking.begin() + static_cast<std::ptrdiff_t>(start),
                      walking.begin() + static_cast<std::ptrdiff_t>(start + c.window_), [](bool w) { return w; })) {
        features.push_back(c.feature(std::span(poses).subspan(start, c.window_)));
        labels.push_back(s);
      }
    }
  }
  const std::size_t k = c.styles_.size();
  std::vector<std::size_t> counts(k, 0);
  const Eigen::Index dim = features.empty() ? 0 : features.front().size();
  c.centroids_.assign(k, Eigen::VectorXd::Zero(dim));
  for (std::size_t i = 0; i < features.size(); ++i) {
    c.centroids_[labels[i]] += features[i];
    ++counts[labels[i]];
  }
  for (std::size_t s = 0; s < k; ++s) {
    if (counts[s] < 2) {
      throw InconclusiveEvaluation("style '" + c.styles_[s] + "' has " + std::to_string(counts[s]) +
                                   " walking windows; the classifier needs at least 2");
    }
    c.centroids_[s] /= static_cast<double>(counts[s]);
  }
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const Eigen::VectorXd d = features[i] - c.centroids_[labels[i]];
    cov.noalias() += d * d.transpose();
  }
  cov /= features.size() > k ? static_cast<double>(features.size() - k) : 1.0;
  const Eigen::VectorXd diag = cov.diagonal();
  cov = (1.0 - config.shrinkage) * cov;
  cov.diagonal() += config.shrinkage * diag;
  cov.diagonal().array() += 1e-9 * std::max(1e-12, diag.mean());
  c.inverse_covariance_ = cov.ldlt().solve(Eigen::MatrixXd::Identity(dim, dim));

  std::size_t correct = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    correct += c.classify(features[i]) == labels[i] ? 1 : 0;
  }
  c.accuracy_ = static_cast<double>(correct) / static_cast<double>(features.size());
  if (c.accuracy_ < config.min_accuracy) {
    std::ostringstream msg;
    msg << "style classifier reaches " << c.accuracy_ << " training accuracy, below " << config.min_accuracy
        << "; evaluation is inconclusive";
    throw InconclusiveEvaluation(msg.str());
  }
  return c;
}

// ---- scripted generation ---------------------------------------------------

WalkScript walking_script(const Dataset& dataset, const std::string& style) {
  const auto& clip = dataset.clips[first_clip_of(dataset, style)];
  const std::size_t v = dataset.layout.velocity_offset();
  const double fps = 1.0 / clip.frame_time;
  double speed = 0.0;
  double turn = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 1; i < clip.samples; ++i) {
    const std::size_t row = clip.first_sample + i;
    if (!is_cruising(dataset, row)) {
      continue;
    }
    const auto x = dataset.input_row(row);
    speed += std::hypot(x[v], x[v + 1]) * fps;
    turn += x[v + 2] * fps;
    ++n;
  }
  if (n == 0) {
    throw ConfigError("style '" + style + "' has no walking frames");
  }
  return {speed / static_cast<double>(n), turn / static_cast<double>(n)};
}

std::size_t first_walking_sample(const Dataset& dataset, const std::string& style) {
  const auto& clip = dataset.clips[first_clip_of(dataset, style)];
  for (std::size_t i = 0; i < clip.samples; ++i) {
    if (is_walking(dataset, clip.first_sample + i)) {
      return clip.first_sample + i;
    }
  }
  throw ConfigError("style '" + style + "' has no walking frames");
}

// ---- transition ------------------------------------------------------------

TransitionResult transition_eval(models::MotionModel& model, const Dataset& dataset,
                                 const StyleClassifier& classifier, const std::string& from, const std::string& to,
                                 const TransitionOptions& options) {
  models::check_compatible(model, dataset);
  const double fps = frames_per_second(dataset);
  const std::size_t n_styles = dataset.styles.size();
  const std::size_t a = style_index(dataset, from);
  const std::size_t b = style_index(dataset, to);
  const WalkScript script_a = walking_script(dataset, from);
  const WalkScript script_b = walking_script(dataset, to);

  runtime::Session session(model, {fps, 0.5});
  const std::size_t start = first_walking_sample(dataset, from);
  session.reset(options.seed, pose_of_row(dataset, start), dataset.phase[start]);
  session.set_style(models::one_hot(a, n_styles), 0.0);
  ScriptedWalk walk(session, fps);

  const auto frames = [&](double seconds) { return static_cast<std::size_t>(std::lround(seconds * fps)); };
  const std::size_t warmup = frames(options.warmup_seconds);
  const std::size_t ramp = static_cast<std::size_t>(std::ceil(fps * options.transition_seconds - 1e-9));
  const std::size_t settle = frames(options.settle_seconds);
  const std::size_t final_window = frames(options.final_window_seconds);
  const std::size_t steady_window = frames(1.0);

  TransitionResult result;
  result.from = from;
  result.to = to;
  for (std::size_t i = 0; i < warmup && walk.tick(script_a); ++i) {
  }
  session.set_style(models::one_hot(b, n_styles), options.transition_seconds);
  double lambda = 0.0;
  for (std::size_t i = 0; i < ramp && walk.finite; ++i) {
    const WalkScript blended{(1.0 - lambda) * script_a.speed + lambda * script_b.speed,
                             (1.0 - lambda) * script_a.turn_rate + lambda * script_b.turn_rate};
    walk.tick(blended);
    lambda = walk.lambdas.back();
    result.lambdas.push_back(lambda);
  }
  for (std::size_t i = 0; i < settle && walk.finite; ++i) {
    walk.tick(script_b);
  }
  result.finite = walk.finite && walk.poses.size() == warmup + ramp + settle;
  if (!result.finite) {
    return result;
  }

  const auto& layout = dataset.layout;
  const auto& poses = walk.poses;
  const double before = max_displacement(layout, poses, warmup - std::min(warmup, steady_window), warmup);
  const double after = max_displacement(layout, poses, poses.size() - final_window + 1, poses.size());
  result.steady_state = std::max(before, after);
  result.continuity = max_displacement(layout, poses, warmup, warmup + ramp);
  result.threshold = options.continuity_factor * result.steady_state;
  const Eigen::VectorXd f = classifier.sequence_feature(std::span(poses).last(final_window));
  result.final_distances = classifier.distances(f);
  result.classified = classifier.styles()[classifier.classify(f)];
  result.passed = result.classified == to && result.continuity < result.threshold;
  return result;
}

// ---- interpolation ---------------------------------------------------------

InterpolationResult interpolation_eval(models::MotionModel& model, const Dataset& dataset,
                                       const StyleClassifier& classifier, const std::string& first,
                                       const std::string& second, const InterpolationOptions& options) {
  models::check_compatible(model, dataset);
  const double fps = frames_per_second(dataset);
  const std::size_t n_styles = dataset.styles.size();
  const std::size_t a = style_index(dataset, first);
  const std::size_t b = style_index(dataset, second);
  const WalkScript sa = walking_script(dataset, first);
  const WalkScript sb = walking_script(dataset, second);
  const WalkScript script{0.5 * (sa.speed + sb.speed), 0.5 * (sa.turn_rate + sb.turn_rate)};

  runtime::Session session(model, {fps, 0.5});
  const std::size_t start = first_walking_sample(dataset, first);
  session.reset(options.seed, pose_of_row(dataset, start), dataset.phase[start]);
  session.set_style(models::blend_styles(models::one_hot(a, n_styles), models::one_hot(b, n_styles), 0.5), 0.0);
  ScriptedWalk walk(session, fps);

  InterpolationResult result;
  result.first = first;
  result.second = second;
  const std::size_t total = static_cast<std::size_t>(std::lround(options.seconds * fps));
  for (std::size_t i = 0; i < total && walk.tick(script); ++i) {
  }
  result.frames = walk.poses.size();

  const auto& layout = dataset.layout;
  std::vector<double> lo(3, std::numeric_limits<double>::infinity());
  std::vector<double> hi(3, -std::numeric_limits<double>::infinity());
  for (std::size_t row = 0; row < dataset.size(); ++row) {
    const auto x = dataset.input_row(row);
    for (std::size_t j = 0; j < layout.joints; ++j) {
      for (std::size_t k = 0; k < 3; ++k) {
        lo[k] = std::min(lo[k], static_cast<double>(x[layout.position_offset() + 3 * j + k]));
        hi[k] = std::max(hi[k], static_cast<double>(x[layout.position_offset() + 3 * j + k]));
      }
    }
  }
  result.bounded = walk.finite && result.frames == total;
  for (const auto& pose : walk.poses) {
    for (std::size_t j = 0; j < layout.joints && result.bounded; ++j) {
      for (std::size_t k = 0; k < 3; ++k) {
        const double center = 0.5 * (lo[k] + hi[k]);
        const double half = 0.5 * (hi[k] - lo[k]) * options.bbox_factor;
        if (std::abs(pose[layout.position_offset() + 3 * j + k] - center) > half) {
          result.bounded = false;
        }
      }
    }
  }
  if (!result.bounded) {
    return result;
  }
  const std::size_t skip = std::min(result.frames, static_cast<std::size_t>(std::lround(options.warmup_seconds * fps)));
  const Eigen::VectorXd f = classifier.sequence_feature(std::span(walk.poses).subspan(skip));
  const auto d = classifier.distances(f);
  result.distance_first = d[a];
  result.distance_second = d[b];
  result.parent_distance = classifier.centroid_distance(a, b);
  result.passed = a == b || (result.distance_first < result.parent_distance &&
                             result.distance_second < result.parent_distance);
  return result;
}

// ---- ability matrix and artifacts ------------------------------------------

AbilityRow& AbilityMatrix::row(const std::string& variant) {
  for (auto& r : rows) {
    if (r.variant == variant) {
      return r;
    }
  }
  rows.push_back({variant, std::nullopt, std::nullopt, std::nullopt});
  return rows.back();
}

namespace {

nlohmann::json verdict_json(const std::optional<bool>& v) {
  if (!v) {
    return "not run";
  }
  return *v;
}

std::string verdict_text(const std::optional<bool>& v) {
  if (!v) {
    return "not run";
  }
  return *v ? "Yes" : "No";
}

}  // namespace

nlohmann::json AbilityMatrix::to_json() const {
  nlohmann::json variants = nlohmann::json::object();
  for (const auto& r : rows) {
    variants[r.variant] = {{"replay", verdict_json(r.replay)},
                           {"transition", verdict_json(r.transition)},
                           {"interpolation", verdict_json(r.interpolation)}};
  }
  return {{"variants", variants}, {"thresholds", thresholds}};
}

std::string AbilityMatrix::to_text() const {
  std::ostringstream out;
  out << std::left << std::setw(10) << "variant" << std::setw(10) << "replay" << std::setw(12) << "transition"
      << "interpolation\n";
  for (const auto& r : rows) {
    out << std::left << std::setw(10) << r.variant << std::setw(10) << verdict_text(r.replay) << std::setw(12)
        << verdict_text(r.transition) << verdict_text(r.interpolation) << '\n';
  }
  return out.str();
}

std::filesystem::path make_run_directory(const std::filesystem::path& root, const nlohmann::json& config) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  std::ostringstream name;
  name << std::put_time(&utc, "%Y%m%dT%H%M%SZ") << '-' << hex64(fnv1a64(config.dump())).substr(0, 12);
  const auto dir = root / name.str();
  std::filesystem::create_directories(dir);
  return dir;
}

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw ConfigError("cannot write " + path.string());
  }
  out << std::setprecision(9);
  return out;
}

}  // namespace

std::filesystem::path write_replay_csv(const std::filesystem::path& dir, const ReplayResult& result) {
  const auto path = dir / ("replay_" + result.style + "_" + result.variant + ".csv");
  auto out = open_output(path);
  out << "t,e\n";
  for (std::size_t i = 0; i < result.error.size(); ++i) {
    out << i + 1 << ',' << result.error[i] << '\n';
  }
  return path;
}

void write_mse_table(const std::filesystem::path& path, const std::vector<MseRow>& rows) {
  auto out = open_output(path);
  out << "style,variant,clip,frames,mse,threshold,passed,diverged\n";
  for (const auto& r : rows) {
    const bool passed = !r.result.diverged && r.result.mse < r.threshold;
    out << r.result.style << ',' << r.result.variant << ',' << r.result.clip << ',' << r.result.error.size() << ','
        << r.result.mse << ',' << r.threshold << ',' << (passed ? "true" : "false") << ','
        << (r.result.diverged ? "true" : "false") << '\n';
  }
}

void write_ability_matrix(const std::filesystem::path& path, const AbilityMatrix& matrix) {
  auto out = open_output(path);
  out << matrix.to_json().dump(2) << '\n';
}

}  // namespace mstyle::evaluation
