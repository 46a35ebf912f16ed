#include "mstyle/features/synthetic.hpp"
#include "mstyle/training/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

using namespace mstyle;
using namespace mstyle::training;
using models::Variant;
using nn::Graph;
using nn::Tensor;
using nn::Var;

namespace {

const features::Dataset& small_dataset() {
  static const features::Dataset dataset = [] {
    auto styles = features::default_styles();
    styles.resize(2);
    features::SyntheticConfig cfg;
    cfg.styles = styles;
    cfg.seconds_per_style = 6.0;
    cfg.clips_per_style = 1;
    cfg.seed = 3;
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

TrainConfig small_train(Variant v) {
  TrainConfig t;
  t.model = small_model(v);
  t.batch_size = 16;
  t.epochs = 3;
  t.rollout_length = 4;
  t.seed = 9;
  return t;
}

features::ChannelStats identity_stats(std::size_t n) {
  return {std::vector<float>(n, 0.0f), std::vector<float>(n, 1.0f)};
}

/// Dataset with a single one-joint clip and identity normalization.
features::Dataset toy_dataset(std::size_t samples, Rng& rng) {
  features::Dataset d;
  d.layout.joints = 1;
  d.styles = {"a"};
  d.clips = {{"toy", "a", 0, samples, 1.0 / 60.0}};
  d.inputs = Tensor({samples, d.layout.input_dim()});
  d.targets = Tensor({samples, d.layout.output_dim()});
  for (float& v : d.inputs.data()) {
    v = static_cast<float>(rng.uniform(-1.0, 1.0));
  }
  for (float& v : d.targets.data()) {
    v = static_cast<float>(rng.uniform(-1.0, 1.0));
  }
  for (std::size_t i = 0; i < samples; ++i) {
    d.phase.push_back(static_cast<float>(i) / static_cast<float>(samples));
    d.style_index.push_back(0);
    d.clip_index.push_back(0);
    d.frame_index.push_back(static_cast<std::uint32_t>(i));
  }
  d.stats = {identity_stats(d.layout.input_dim()), identity_stats(d.layout.output_dim())};
  return d;
}

/// y = w * [x, 0]: one trainable scalar.
class ScalarModel : public RolloutModel {
 public:
  ScalarModel(float w, std::size_t pose) : w_("w", Tensor({1, 1}, {w})), pose_(pose) {}

  Var forward(Graph& g, const Step& step) override {
    const std::size_t rows = step.x.value().rows();
    const std::size_t cols = step.x.value().cols() + 1;
    const Var padded = nn::concat_cols({step.x, g.constant(Tensor({rows, 1}))});
    const Var y = nn::matmul_nt(nn::reshape(padded, {rows * cols, 1}), g.parameter(w_));
    return nn::reshape(y, {rows, cols});
  }
  Var pose_feedback(Var y) override { return nn::slice_cols(y, 0, pose_); }
  std::size_t window() const override { return 0; }

  nn::Parameter w_;
  std::size_t pose_;
};

}  // namespace

TEST(Schedule, DecreasingEndpointsAndRamp) {
  const SamplingSchedule s = SamplingSchedule::from_direction("decreasing");
  EXPECT_DOUBLE_EQ(s.probability(0), 1.0);
  EXPECT_DOUBLE_EQ(s.probability(5), 0.5);
  EXPECT_DOUBLE_EQ(s.probability(10), 0.0);
  EXPECT_DOUBLE_EQ(s.probability(99), 0.0);
  EXPECT_EQ(s.direction(), "decreasing");
}

TEST(Schedule, IncreasingEndpoints) {
  const SamplingSchedule s = SamplingSchedule::from_direction("increasing", 4);
  EXPECT_DOUBLE_EQ(s.probability(0), 0.0);
  EXPECT_DOUBLE_EQ(s.probability(1), 0.25);
  EXPECT_DOUBLE_EQ(s.probability(4), 1.0);
  EXPECT_DOUBLE_EQ(s.probability(40), 1.0);
  EXPECT_THROW(SamplingSchedule::from_direction("sideways"), ConfigError);
}

TEST(Schedule, SingleEpochRamp) {
  const SamplingSchedule s{1.0, 0.3, 1};
  EXPECT_DOUBLE_EQ(s.probability(0), 1.0);
  EXPECT_DOUBLE_EQ(s.probability(1), 0.3);
}

TEST(TrainConfig, Validation) {
  TrainConfig t;
  EXPECT_NO_THROW(t.validate());
  t.batch_size = 0;
  EXPECT_THROW(t.validate(), ConfigError);
  t = TrainConfig{};
  t.rollout_length = 1;
  EXPECT_THROW(t.validate(), ConfigError);
  t = TrainConfig{};
  t.schedule.ramp_epochs = 0;
  EXPECT_THROW(t.validate(), ConfigError);
  t = TrainConfig{};
  t.schedule.p_end = 1.5;
  EXPECT_THROW(t.validate(), ConfigError);
  t = TrainConfig{};
  t.model.eps = 0.05f;
  EXPECT_THROW(t.validate(), ConfigError);
  t = TrainConfig{};
  t.optimizer.dropout_rate = 1.0f;
  EXPECT_THROW(t.validate(), ConfigError);
}

TEST(Segments, NonOverlappingWithinClips) {
  const auto& d = small_dataset();
  Rng rng(1);
  const std::size_t steps = 8;
  const auto segments = epoch_segments(d, steps, rng);
  ASSERT_FALSE(segments.empty());
  std::set<std::pair<std::size_t, std::size_t>> covered;
  std::size_t total = 0;
  for (const auto& s : segments) {
    ASSERT_LE(s.start + steps, d.clips[s.clip].samples);
    for (std::size_t k = 0; k < steps; ++k) {
      EXPECT_TRUE(covered.insert({s.clip, s.start + k}).second);
    }
  }
  for (const auto& c : d.clips) {
    total += c.samples;
  }
  // Every clip loses at most one partial segment at each end.
  EXPECT_GE(covered.size() + 2 * steps * d.clips.size(), total);
}

TEST(Rollout, TwoStepMatchesHandUnrolledScalarModel) {
  Rng rng(11);
  const features::Dataset d = toy_dataset(4, rng);
  const std::size_t pose = d.layout.pose_dim();
  const std::size_t in = d.layout.input_dim();
  const std::size_t out = d.layout.output_dim();
  const std::vector<Segment> batch{{0, 0}, {0, 2}};
  const double w = 0.7;

  for (const double p : {1.0, 0.0}) {
    // Reference loss and d(loss)/dw in double precision.
    double loss = 0.0;
    double dloss = 0.0;
    const double count = static_cast<double>(batch.size() * out);
    for (const auto& seg : batch) {
      const std::size_t r0 = seg.start;
      const std::size_t r1 = seg.start + 1;
      for (std::size_t c = 0; c < out; ++c) {
        const double x0 = c < in ? d.inputs.at(r0, c) : 0.0;
        const double e0 = w * x0 - d.targets.at(r0, c);
        loss += e0 * e0 / count;
        dloss += 2.0 * e0 * x0 / count;

        double pred = 0.0;
        double dpred = 0.0;
        if (c < in) {
          if (p == 0.0 && c < pose) {
            pred = w * w * d.inputs.at(r0, c);
            dpred = 2.0 * w * d.inputs.at(r0, c);
          } else {
            pred = w * d.inputs.at(r1, c);
            dpred = d.inputs.at(r1, c);
          }
        }
        const double e1 = pred - d.targets.at(r1, c);
        loss += e1 * e1 / count;
        dloss += 2.0 * e1 * dpred / count;
      }
    }

    ScalarModel model(static_cast<float>(w), pose);
    Graph g;
    Rng coin(3);
    const Var total = scheduled_rollout(g, model, d, batch, 2, p, coin);
    g.backward(total);
    EXPECT_NEAR(total.value()[0], loss, 1e-5 * std::max(1.0, loss)) << "p=" << p;
    EXPECT_NEAR(model.w_.grad[0], dloss, 1e-4 * std::max(1.0, std::abs(dloss))) << "p=" << p;
  }
}

TEST(Rollout, TeacherForcingEqualsSumOfSingleSteps) {
  const auto& d = small_dataset();
  for (const Variant v : {Variant::snsm, Variant::mtcn_in}) {
    models::MotionModel model(small_model(v), d);
    const std::size_t steps = 3;
    const std::vector<Segment> batch{{0, 0}, {0, 50}, {1, 17}};
    const auto out_scale = d.stats.output.normalize_scale();
    const auto out_shift = d.stats.output.normalize_shift();
    const std::size_t pose = d.layout.pose_dim();
    Rng unused(0);

    // One batch-1 forward per ground-truth frame.
    double expected = 0.0;
    for (std::size_t j = 0; j < steps; ++j) {
      double se = 0.0;
      for (const auto& seg : batch) {
        const std::size_t first = d.clips[seg.clip].first_sample;
        const std::size_t row = first + seg.start + j;
        const auto input = d.input_row(row);
        const Tensor raw({1, input.size()}, std::vector<float>(input.begin(), input.end()));
        std::vector<std::vector<float>> history;
        for (std::size_t k = model.config().tau + 1; k-- > 0;) {
          const auto x = d.input_row(row >= first + k ? row - k : first);
          history.emplace_back(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(pose));
        }
        const auto style = d.style_one_hot(row);
        Graph g(nn::GradMode::disabled);
        models::ModelInputs in;
        in.x = g.constant(model.normalize_inputs(raw));
        in.style = g.constant(Tensor({1, style.size()}, style));
        if (model.config().temporal()) {
          in.window = g.constant(model.normalize_pose_window(history));
        } else {
          const float phase = d.phase[row];
          in.gating = g.constant(model.gating_features(std::span<const float>(&phase, 1), raw));
        }
        const Tensor y = model.forward(g, in, 0.0f, false, unused).y.value();
        const auto target = d.target_row(row);
        for (std::size_t c = 0; c < y.size(); ++c) {
          const double e = y[c] - (target[c] * out_scale[c] + out_shift[c]);
          se += e * e;
        }
      }
      expected += se / static_cast<double>(batch.size() * d.layout.output_dim());
    }

    Graph g(nn::GradMode::disabled);
    Rng rng(1);
    MotionRollout rollout(model, 0.0f, false, rng);
    const Var loss = scheduled_rollout(g, rollout, d, batch, steps, 1.0, rng);
    EXPECT_NEAR(loss.value()[0], expected, 1e-5 * expected) << models::variant_name(v);
  }
}

TEST(Rollout, SegmentPastClipEndThrows) {
  const auto& d = small_dataset();
  models::MotionModel model(small_model(Variant::snsm), d);
  Graph g(nn::GradMode::disabled);
  Rng rng(1);
  MotionRollout rollout(model, 0.0f, false, rng);
  const std::vector<Segment> batch{{0, d.clips[0].samples - 2}};
  EXPECT_THROW(scheduled_rollout(g, rollout, d, batch, 4, 1.0, rng), ConfigError);
}

TEST(Trainer, SameSeedSameReport) {
  const auto& d = small_dataset();
  for (const Variant v : {Variant::snsm, Variant::mtcn_in}) {
    TrainConfig cfg = small_train(v);
    cfg.epochs = 2;
    cfg.schedule = {1.0, 0.0, 2};
    Trainer a(d, cfg);
    Trainer b(d, cfg);
    const TrainReport ra = a.train();
    const TrainReport rb = b.train();
    EXPECT_EQ(ra.initial_loss, rb.initial_loss);
    ASSERT_EQ(ra.epochs.size(), 2u);
    for (std::size_t e = 0; e < ra.epochs.size(); ++e) {
      EXPECT_EQ(ra.epochs[e].loss, rb.epochs[e].loss);
      EXPECT_EQ(ra.epochs[e].p, rb.epochs[e].p);
    }
    const auto pa = a.model().parameters();
    const auto pb = b.model().parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) {
      EXPECT_TRUE(pa[i]->value == pb[i]->value) << pa[i]->name;
    }
  }
}

TEST(Trainer, LossDecreasesFromFirstEpoch) {
  const auto& d = small_dataset();
  TrainConfig cfg = small_train(Variant::snsm);
  cfg.epochs = 4;
  cfg.schedule = {1.0, 1.0, 1};
  Trainer trainer(d, cfg);
  const auto losses = trainer.train().losses();
  bool decreased = false;
  for (std::size_t e = 1; e < losses.size(); ++e) {
    decreased = decreased || losses[e] < losses[0];
  }
  EXPECT_TRUE(decreased);
}

TEST(Trainer, TelemetryCsvAppendsOneRowPerEpoch) {
  const auto& d = small_dataset();
  TrainConfig cfg = small_train(Variant::snsm);
  cfg.epochs = 2;
  const auto path = std::filesystem::temp_directory_path() / "mstyle_telemetry_test.csv";
  std::filesystem::remove(path);
  std::vector<std::size_t> seen;
  Trainer trainer(d, cfg);
  trainer.train(path, [&](const EpochRecord& r) { seen.push_back(r.epoch); });
  Trainer again(d, cfg);
  again.train(path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "epoch,loss,p,wall_ms");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string epoch;
    std::getline(fields, epoch, ',');
    EXPECT_EQ(std::stoul(epoch), rows % 2);
    ++rows;
  }
  EXPECT_EQ(rows, 4u);
  EXPECT_EQ(seen, (std::vector<std::size_t>{0, 1}));
  std::filesystem::remove(path);
}

TEST(Trainer, EveryParameterReceivesGradient) {
  Rng rng(21);
  features::Dataset d = small_dataset();
  for (float& v : d.inputs.data()) {
    v = static_cast<float>(rng.uniform(-1.0, 1.0));
  }
  for (float& v : d.targets.data()) {
    v = static_cast<float>(rng.uniform(-1.0, 1.0));
  }
  d.stats = {features::ChannelStats::of(d.inputs), features::ChannelStats::of(d.targets)};
  for (const Variant v : {Variant::snsm, Variant::mtcn, Variant::mtcn_in}) {
    models::MotionModel model(small_model(v), d);
    const auto params = model.parameters();
    std::vector<double> magnitude(params.size(), 0.0);
    Rng coin(2);
    auto segments = epoch_segments(d, 4, coin);
    MotionRollout rollout(model, 0.4f, true, coin);
    for (std::size_t b = 0; b < segments.size(); b += 16) {
      Graph g;
      const auto batch = std::span(segments).subspan(b, std::min<std::size_t>(16, segments.size() - b));
      g.backward(scheduled_rollout(g, rollout, d, batch, 4, 0.5, coin));
      for (std::size_t i = 0; i < params.size(); ++i) {
        for (const float x : params[i]->grad.data()) {
          magnitude[i] += std::abs(x);
        }
      }
      nn::zero_grads(params);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      EXPECT_GT(magnitude[i], 0.0) << models::variant_name(v) << " " << params[i]->name;
    }
  }
}

TEST(Trainer, DivergenceAborts) {
  const auto& d = small_dataset();
  TrainConfig cfg = small_train(Variant::snsm);
  cfg.epochs = 20;
  cfg.optimizer.learning_rate = 50.0f;
  cfg.optimizer.dropout_rate = 0.0f;
  cfg.divergence_factor = 1.5;
  Trainer trainer(d, cfg);
  try {
    trainer.train();
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    EXPECT_NE(std::string(e.what()).find("diverged"), std::string::npos);
    EXPECT_FALSE(e.report().epochs.empty());
  }
}

TEST(Trainer, ConstantClipTeacherForcingConverges) {
  Rng rng(2);
  features::Dataset d;
  const auto source = features::build_dataset(features::generate_synthetic_corpus(
      {features::default_styles()[0], features::default_styles()[1]}, 6.0, 60.0, 1));
  d.layout = source.layout;
  d.skeleton = source.skeleton;
  d.styles = {"still"};
  const std::size_t samples = 40;
  d.clips = {{"still", "still", 0, samples, 1.0 / 60.0}};
  d.inputs = Tensor({samples, d.layout.input_dim()});
  d.targets = Tensor({samples, d.layout.output_dim()});
  for (std::size_t i = 0; i < samples; ++i) {
    std::copy_n(source.input_row(30).begin(), d.layout.input_dim(), d.inputs.data().begin() + i * d.layout.input_dim());
    std::copy_n(source.input_row(30).begin(), d.layout.input_dim(), d.targets.data().begin() + i * d.layout.output_dim());
    d.phase.push_back(0.0f);
    d.style_index.push_back(0);
    d.clip_index.push_back(0);
    d.frame_index.push_back(static_cast<std::uint32_t>(i));
  }
  d.stats = {features::ChannelStats::of(d.inputs), features::ChannelStats::of(d.targets)};

  for (const Variant v : {Variant::snsm, Variant::mtcn, Variant::mtcn_in}) {
    TrainConfig cfg;
    cfg.model.variant = v;
    cfg.epochs = 50;
    cfg.schedule = {1.0, 1.0, 1};
    Trainer trainer(d, cfg);
    const TrainReport report = trainer.train();
    EXPECT_LT(report.epochs.back().loss, 1e-4) << models::variant_name(v);
  }
}
