#include "mstyle/evaluation/evaluation.hpp"
#include "mstyle/features/phase.hpp"
#include "mstyle/features/synthetic.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <limits>
#include <regex>
#include <sstream>

using namespace mstyle;
using namespace mstyle::evaluation;
using models::Variant;

namespace {

const features::Dataset& four_styles() {
  static const features::Dataset dataset = [] {
    features::SyntheticConfig cfg;
    cfg.styles = features::default_styles();
    cfg.seconds_per_style = 8.0;
    cfg.clips_per_style = 1;
    cfg.seed = 11;
    return features::build_dataset(features::generate_synthetic_corpus(cfg));
  }();
  return dataset;
}

models::ModelConfig small_model(Variant v) {
  models::ModelConfig c;
  c.variant = v;
  c.hidden = 32;
  c.gating_hidden = {16};
  c.tcn_channels = {16, 16, 8};
  c.tau = 10;
  c.seed = 5;
  return c;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mstyle_eval_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Replay, GroundTruthStepHasZeroError) {
  const auto& d = four_styles();
  const std::size_t clip = 1;
  const std::size_t first = d.clips[clip].first_sample;
  std::size_t calls = 0;
  const StepFunction oracle = [&](const models::StepRequest&) {
    const auto y = d.target_row(first + calls++);
    return models::StepResult{{y.begin(), y.end()}, {}, {}};
  };
  const ReplayResult r = replay_eval(oracle, d, clip, 1);
  EXPECT_FALSE(r.diverged);
  EXPECT_EQ(r.error.size(), d.clips[clip].samples);
  EXPECT_EQ(r.mse, 0.0);
  EXPECT_EQ(r.style, d.clips[clip].style);
}

TEST(Replay, FeedsTruthControlsAndOwnPose) {
  const auto& d = four_styles();
  const auto& layout = d.layout;
  const std::size_t clip = 0;
  const std::size_t first = d.clips[clip].first_sample;
  std::size_t i = 0;
  std::vector<float> previous_out;
  float expected_phase = d.phase[first];
  Rng rng(17);
  const StepFunction spy = [&](const models::StepRequest& req) {
    const auto truth = d.input_row(first + i);
    for (std::size_t c = layout.pose_dim(); c < layout.input_dim(); ++c) {
      EXPECT_EQ(req.input[c], truth[c]) << "control channel " << c << " at step " << i;
    }
    for (std::size_t c = 0; c < layout.pose_dim(); ++c) {
      const float expected = i == 0 ? truth[c] : previous_out[c];
      EXPECT_EQ(req.input[c], expected) << "pose channel " << c << " at step " << i;
    }
    EXPECT_FLOAT_EQ(req.phase, expected_phase);
    EXPECT_LE(req.history->size(), 3u);
    EXPECT_EQ(req.history->back(), std::vector<float>(req.input.begin(), req.input.begin() + layout.pose_dim()));
    const auto y = d.target_row(first + i);
    std::vector<float> out(y.begin(), y.end());
    for (float& v : out) {
      v += static_cast<float>(rng.uniform(-1e-3, 1e-3));
    }
    previous_out = out;
    expected_phase = static_cast<float>(features::wrap_phase(req.phase + out[layout.phase_delta_channel()]));
    ++i;
    return models::StepResult{out, {}, {}};
  };
  const ReplayResult r = replay_eval(spy, d, clip, 3);
  EXPECT_EQ(i, d.clips[clip].samples);
  EXPECT_FALSE(r.diverged);
}

TEST(Replay, MseIsMeanOfPerFrameError) {
  const auto& d = four_styles();
  models::MotionModel model(small_model(Variant::mtcn_in), d);
  const ReplayResult r = replay_eval(model, d, 2);
  ASSERT_FALSE(r.error.empty());
  double total = 0.0;
  for (const double e : r.error) {
    total += e;
  }
  EXPECT_DOUBLE_EQ(r.mse, total / static_cast<double>(r.error.size()));
  EXPECT_EQ(r.variant, "mtcn-in");
}

TEST(Replay, PerFrameErrorMatchesIndependentSum) {
  const auto& d = four_styles();
  const std::size_t first = d.clips[0].first_sample;
  std::size_t calls = 0;
  const StepFunction shifted = [&](const models::StepRequest&) {
    const auto y = d.target_row(first + calls++);
    std::vector<float> out(y.begin(), y.end());
    out[0] += 0.5f;
    out[d.layout.rotation_offset()] -= 0.25f;
    out[d.layout.velocity_offset()] += 7.0f;  // not scored
    return models::StepResult{out, {}, {}};
  };
  const ReplayResult r = replay_eval(shifted, d, 0, 1);
  ASSERT_FALSE(r.error.empty());
  EXPECT_NEAR(r.error.front(), 0.5 * 0.5 + 0.25 * 0.25, 1e-6);
}

TEST(Replay, DivergenceIsRecordedNotThrown) {
  const auto& d = four_styles();
  std::size_t calls = 0;
  const StepFunction exploding = [&](const models::StepRequest& req) {
    std::vector<float> out(d.layout.output_dim(), 0.0f);
    out[0] = static_cast<float>(std::pow(10.0, static_cast<double>(calls++)));
    (void)req;
    return models::StepResult{out, {}, {}};
  };
  const ReplayResult r = replay_eval(exploding, d, 0, 1);
  EXPECT_TRUE(r.diverged);
  EXPECT_FALSE(r.failure.empty());
  EXPECT_LT(r.error.size(), d.clips[0].samples);

  const StepFunction failing = [&](const models::StepRequest&) -> models::StepResult {
    throw NumericError("non-finite output");
  };
  const ReplayResult f = replay_eval(failing, d, 0, 1);
  EXPECT_TRUE(f.diverged);
  EXPECT_NE(f.failure.find("non-finite"), std::string::npos);
}

TEST(Replay, PoseVarianceMatchesTwoPassOracle) {
  const auto& d = four_styles();
  const std::string style = d.styles[1];
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < d.size(); ++r) {
    if (d.style_index[r] == 1) {
      rows.push_back(r);
    }
  }
  double expected = 0.0;
  for (std::size_t c = 0; c < d.layout.pose_error_dim(); ++c) {
    double mean = 0.0;
    for (const std::size_t r : rows) {
      mean += d.target_row(r)[c];
    }
    mean /= static_cast<double>(rows.size());
    double var = 0.0;
    for (const std::size_t r : rows) {
      const double diff = d.target_row(r)[c] - mean;
      var += diff * diff;
    }
    expected += var / static_cast<double>(rows.size());
  }
  EXPECT_NEAR(pose_variance(d, style), expected, 1e-6 * expected);
  EXPECT_THROW(pose_variance(d, "missing"), ConfigError);
  EXPECT_EQ(first_clip_of(d, style), 1u);
  EXPECT_THROW(first_clip_of(d, "missing"), ConfigError);
}

TEST(Classifier, SeparatesSyntheticStyles) {
  const auto& d = four_styles();
  const StyleClassifier c = StyleClassifier::fit(d);
  EXPECT_GE(c.training_accuracy(), 0.95);
  EXPECT_EQ(c.window(), 60u);
  for (std::size_t s = 0; s < d.styles.size(); ++s) {
    EXPECT_NEAR(c.centroid_distance(s, s), 0.0, 1e-12);
    for (std::size_t t = s + 1; t < d.styles.size(); ++t) {
      EXPECT_GT(c.centroid_distance(s, t), 0.0);
      EXPECT_NEAR(c.centroid_distance(s, t), c.centroid_distance(t, s), 1e-9);
    }
    const std::size_t row = first_walking_sample(d, d.styles[s]);
    std::vector<std::vector<float>> poses;
    for (std::size_t i = 0; i < 120; ++i) {
      const auto x = d.input_row(row + i);
      poses.emplace_back(x.begin(), x.begin() + d.layout.pose_dim());
    }
    EXPECT_EQ(c.classify(c.sequence_feature(poses)), s) << d.styles[s];
  }
  std::vector<std::vector<float>> short_seq(10, std::vector<float>(d.layout.pose_dim(), 0.0f));
  EXPECT_THROW(c.sequence_feature(short_seq), ConfigError);
}

TEST(Classifier, WindowFeatureIsMeanAndStd) {
  const auto& d = four_styles();
  const StyleClassifier c = StyleClassifier::fit(d);
  std::vector<std::vector<float>> poses(4, std::vector<float>(d.layout.pose_dim(), 0.0f));
  const std::size_t ch = d.layout.rotation_offset() + 5;
  const float values[] = {1.0f, 2.0f, 3.0f, 6.0f};
  for (std::size_t i = 0; i < 4; ++i) {
    poses[i][ch] = values[i];
  }
  const Eigen::VectorXd f = c.feature(poses);
  const std::size_t channels = 6 * d.layout.joints;
  ASSERT_EQ(f.size(), static_cast<Eigen::Index>(2 * channels));
  EXPECT_DOUBLE_EQ(f[5], 3.0);
  EXPECT_NEAR(f[static_cast<Eigen::Index>(channels + 5)], std::sqrt((4.0 + 1.0 + 0.0 + 9.0) / 4.0), 1e-12);
}

TEST(Classifier, IndistinguishableStylesAreInconclusive) {
  auto styles = features::default_styles();
  styles.resize(2);
  styles[1] = styles[0];
  styles[1].name = "twin";
  features::SyntheticConfig cfg;
  cfg.styles = styles;
  cfg.seconds_per_style = 8.0;
  cfg.clips_per_style = 1;
  cfg.seed = 4;
  const auto d = features::build_dataset(features::generate_synthetic_corpus(cfg));
  EXPECT_THROW(StyleClassifier::fit(d), InconclusiveEvaluation);
}

TEST(Script, WalkingScriptMatchesRootMotion) {
  const auto& d = four_styles();
  for (const auto& style : d.styles) {
    const WalkScript s = walking_script(d, style);
    const features::StyleSpec* spec = nullptr;
    for (const auto& candidate : features::default_styles()) {
      if (candidate.name == style) {
        spec = &candidate;
      }
    }
    ASSERT_NE(spec, nullptr);
    // stride length per cycle times cycles per second, within noise
    EXPECT_NEAR(s.speed, spec->stride_length * spec->cadence, 0.15 * spec->stride_length * spec->cadence) << style;
    // circle of radius 3 m; root speed also carries lateral sway
    EXPECT_NEAR(std::abs(s.turn_rate), s.speed / 3.0, 0.15 * s.speed / 3.0) << style;
  }
}

TEST(Transition, LambdaRampsByFrame) {
  const auto& d = four_styles();
  const StyleClassifier classifier = StyleClassifier::fit(d);
  models::MotionModel model(small_model(Variant::snsm), d);
  TransitionOptions o;
  o.warmup_seconds = 1.0;
  o.settle_seconds = 2.0;
  const TransitionResult r = transition_eval(model, d, classifier, d.styles[0], d.styles[2], o);
  ASSERT_TRUE(r.finite);
  ASSERT_EQ(r.lambdas.size(), 60u);
  for (std::size_t k = 0; k < 60; ++k) {
    EXPECT_DOUBLE_EQ(r.lambdas[k], static_cast<double>(k + 1) / 60.0);
  }
  EXPECT_EQ(r.lambdas.back(), 1.0);
  EXPECT_DOUBLE_EQ(r.threshold, 3.0 * r.steady_state);
  EXPECT_EQ(r.final_distances.size(), d.styles.size());
  EXPECT_EQ(r.passed, r.classified == d.styles[2] && r.continuity < r.threshold);
}

TEST(Interpolation, ReportsDistancesAndBounds) {
  const auto& d = four_styles();
  const StyleClassifier classifier = StyleClassifier::fit(d);
  models::MotionModel model(small_model(Variant::snsm), d);
  InterpolationOptions o;
  o.seconds = 3.0;
  o.warmup_seconds = 1.0;
  const InterpolationResult r = interpolation_eval(model, d, classifier, d.styles[0], d.styles[1], o);
  EXPECT_EQ(r.first, d.styles[0]);
  if (r.bounded) {
    EXPECT_EQ(r.frames, 180u);
    EXPECT_DOUBLE_EQ(r.parent_distance, classifier.centroid_distance(0, 1));
    EXPECT_EQ(r.passed, r.distance_first < r.parent_distance && r.distance_second < r.parent_distance);
  } else {
    EXPECT_FALSE(r.passed);
  }
}

TEST(Interpolation, ZeroBoxIsUnbounded) {
  const auto& d = four_styles();
  const StyleClassifier classifier = StyleClassifier::fit(d);
  models::MotionModel model(small_model(Variant::snsm), d);
  InterpolationOptions o;
  o.seconds = 1.5;
  o.warmup_seconds = 0.0;
  o.bbox_factor = 0.0;
  const InterpolationResult r = interpolation_eval(model, d, classifier, d.styles[0], d.styles[1], o);
  EXPECT_FALSE(r.bounded);
  EXPECT_FALSE(r.passed);
}

TEST(Ability, MissingVerdictsReadNotRun) {
  AbilityMatrix m;
  m.row("snsm").replay = true;
  m.row("snsm").transition = false;
  m.row("mtcn-in").interpolation = true;
  m.thresholds["replay_ratio"] = 0.2;
  const auto j = m.to_json();
  EXPECT_EQ(j["variants"]["snsm"]["replay"], true);
  EXPECT_EQ(j["variants"]["snsm"]["transition"], false);
  EXPECT_EQ(j["variants"]["snsm"]["interpolation"], "not run");
  EXPECT_EQ(j["variants"]["mtcn-in"]["replay"], "not run");
  EXPECT_EQ(j["thresholds"]["replay_ratio"], 0.2);
  EXPECT_EQ(m.rows.size(), 2u);
  const std::string text = m.to_text();
  EXPECT_NE(text.find("snsm      Yes       No          not run"), std::string::npos) << text;
  EXPECT_NE(text.find("mtcn-in   not run   not run     Yes"), std::string::npos) << text;
}

TEST(Artifacts, RunDirectoryNamedByTimeAndConfigHash) {
  const auto root = scratch_dir("runs");
  const nlohmann::json config = {{"epochs", 100}, {"variant", "snsm"}};
  const auto a = make_run_directory(root, config);
  const auto b = make_run_directory(root, config);
  const auto c = make_run_directory(root, {{"epochs", 99}, {"variant", "snsm"}});
  EXPECT_TRUE(std::filesystem::is_directory(a));
  const std::regex pattern(R"(\d{8}T\d{6}Z-[0-9a-f]{12})");
  EXPECT_TRUE(std::regex_match(a.filename().string(), pattern)) << a;
  const auto suffix = [](const std::filesystem::path& p) { return p.filename().string().substr(17); };
  EXPECT_EQ(suffix(a), suffix(b));
  EXPECT_NE(suffix(a), suffix(c));
}

TEST(Artifacts, ReplayCsvAndMseTable) {
  const auto dir = scratch_dir("artifacts");
  ReplayResult r;
  r.clip = "neutral_00";
  r.style = "neutral";
  r.variant = "snsm";
  r.error = {0.5, 0.25};
  r.mse = 0.375;
  const auto csv = write_replay_csv(dir, r);
  EXPECT_EQ(csv.filename(), "replay_neutral_snsm.csv");
  EXPECT_EQ(slurp(csv), "t,e\n1,0.5\n2,0.25\n");

  ReplayResult bad = r;
  bad.variant = "mtcn";
  bad.diverged = true;
  write_mse_table(dir / "mse_table.csv", {{r, 0.4}, {bad, 0.4}});
  EXPECT_EQ(slurp(dir / "mse_table.csv"),
            "style,variant,clip,frames,mse,threshold,passed,diverged\n"
            "neutral,snsm,neutral_00,2,0.375,0.4,true,false\n"
            "neutral,mtcn,neutral_00,2,0.375,0.4,false,true\n");

  AbilityMatrix m;
  m.row("snsm").replay = true;
  write_ability_matrix(dir / "ability.json", m);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "ability.json")), m.to_json());
}
