// mstyle: data generation, preprocessing, training, evaluation and serving.

#include "mstyle/container.hpp"
#include "mstyle/evaluation/evaluation.hpp"
#include "mstyle/features/synthetic.hpp"
#include "mstyle/motion/corpus.hpp"
#include "mstyle/motion/retarget.hpp"
#include "mstyle/runtime/server.hpp"
#include "mstyle/training/trainer.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <pthread.h>
#include <sstream>
#include <thread>

using namespace mstyle;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) {
    row[j] = j;
  }
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

/// "unknown option" message with the closest known flag, if any is close.
std::string unknown_flag_message(const CLI::App& app, const std::string& arg) {
  std::string flag = arg.substr(0, arg.find('='));
  std::string best;
  std::size_t best_distance = std::numeric_limits<std::size_t>::max();
  for (const CLI::Option* opt : app.get_options()) {
    for (const auto& name : opt->get_lnames()) {
      const std::string candidate = "--" + name;
      const std::size_t d = edit_distance(flag, candidate);
      if (d < best_distance) {
        best_distance = d;
        best = candidate;
      }
    }
  }
  std::string msg = app.get_name() + ": unknown option '" + flag + "'";
  if (!best.empty() && best_distance <= std::max<std::size_t>(2, flag.size() / 3)) {
    msg += "; did you mean '" + best + "'?";
  }
  return msg + "\nRun with --help for usage.";
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot open " + path.string());
  }
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream s(text);
  for (std::string item; std::getline(s, item, ',');) {
    if (!item.empty()) {
      out.push_back(std::stoul(item));
    }
  }
  return out;
}

// ---- synth-data -------------------------------------------------------------

struct SynthOptions {
  fs::path out;
  std::uint64_t seed = 1;
  double seconds = 15.0;
  std::size_t clips = 2;
  double fps = 60.0;
  double noise = 1.0;
};

int run_synth(const SynthOptions& o) {
  features::SyntheticConfig cfg;
  cfg.styles = features::default_styles();
  cfg.seed = o.seed;
  cfg.seconds_per_style = o.seconds;
  cfg.clips_per_style = o.clips;
  cfg.fps = o.fps;
  cfg.noise = o.noise;
  const auto clips = features::generate_synthetic_corpus(cfg);
  motion::save_corpus(o.out, clips);
  std::size_t frames = 0;
  for (const auto& c : clips) {
    frames += c.frames.size();
  }
  std::cout << "wrote " << clips.size() << " clips (" << frames << " frames) to " << o.out.string() << '\n';
  return 0;
}

// ---- preprocess -------------------------------------------------------------

struct PreprocessOptions {
  fs::path corpus;
  fs::path out;
  std::optional<fs::path> joint_map;
};

int run_preprocess(const PreprocessOptions& o) {
  auto clips = motion::load_corpus(o.corpus);
  if (o.joint_map) {
    const auto map = motion::read_joint_map_file(*o.joint_map);
    const motion::Skeleton target = motion::humanoid18();
    for (auto& clip : clips) {
      motion::MotionClip r = motion::retarget(clip, target, map);
      r.name = clip.name;
      r.style_label = clip.style_label;
      r.action_labels = clip.action_labels;
      r.contact_labels = clip.contact_labels;
      clip = std::move(r);
    }
  }
  const auto dataset = features::build_dataset(clips);
  features::save_dataset(o.out, dataset);
  std::cout << "wrote " << dataset.size() << " samples, " << dataset.clips.size() << " clips, "
            << dataset.styles.size() << " styles to " << o.out.string() << '\n';
  return 0;
}

// ---- train --------------------------------------------------------------------

struct TrainOptions {
  fs::path dataset;
  fs::path out;
  std::string variant = "mtcn-in";
  std::size_t epochs = 100;
  std::size_t batch = 64;
  std::size_t rollout = 8;
  std::string schedule = "decreasing";
  std::size_t ramp = 10;
  double lr = 1e-3;
  double weight_decay = 1e-5;
  double dropout = 0.4;
  std::uint64_t seed = 1;
  std::size_t experts = 4;
  std::size_t hidden = 256;
  std::size_t tau = 30;
  std::string gating_hidden = "128,128";
  std::string tcn_channels = "128,128,64";
  std::optional<fs::path> telemetry;
};

training::TrainConfig train_config(const TrainOptions& o) {
  training::TrainConfig c;
  c.model.variant = models::parse_variant(o.variant);
  c.model.experts = o.experts;
  c.model.hidden = o.hidden;
  c.model.tau = o.tau;
  c.model.gating_hidden = parse_sizes(o.gating_hidden);
  c.model.tcn_channels = parse_sizes(o.tcn_channels);
  c.model.seed = o.seed;
  c.epochs = o.epochs;
  c.batch_size = o.batch;
  c.rollout_length = o.rollout;
  c.schedule = training::SamplingSchedule::from_direction(o.schedule, o.ramp);
  c.optimizer.learning_rate = static_cast<float>(o.lr);
  c.optimizer.weight_decay = static_cast<float>(o.weight_decay);
  c.optimizer.dropout_rate = static_cast<float>(o.dropout);
  c.seed = o.seed;
  c.model.validate();
  c.optimizer.validate();
  c.validate();
  return c;
}

int run_train(const TrainOptions& o) {
  const auto config = train_config(o);
  const auto dataset = features::load_dataset(o.dataset);
  training::Trainer trainer(dataset, config);
  std::cout << "training " << o.variant << " on " << dataset.size() << " samples, "
            << trainer.model().parameter_count() << " parameters\n";
  const auto report = trainer.train(o.telemetry, [](const training::EpochRecord& r) {
    std::cout << "epoch " << std::setw(3) << r.epoch << "  loss " << std::setprecision(6) << r.loss << "  p "
              << std::setprecision(3) << r.p << "  " << std::setprecision(0) << std::fixed << r.wall_ms
              << " ms" << std::defaultfloat << std::endl;
  });
  if (o.out.has_parent_path()) {
    fs::create_directories(o.out.parent_path());
  }
  models::save_checkpoint(o.out, trainer.model());
  std::cout << "saved " << o.out.string() << " after " << std::fixed << std::setprecision(1)
            << report.wall_ms / 1000.0 << " s\n";
  return 0;
}

// ---- evaluations ------------------------------------------------------------

struct EvalOptions {
  fs::path dataset;
  std::vector<fs::path> checkpoints;
  fs::path runs = "runs";
  std::vector<std::string> from;
  std::vector<std::string> to;
  std::uint64_t seed = 1;
  double seconds = 10.0;
  double replay_ratio = 0.2;
};

std::vector<models::MotionModel> load_models(const EvalOptions& o, const features::Dataset& dataset) {
  std::vector<models::MotionModel> out;
  for (const auto& path : o.checkpoints) {
    out.push_back(models::load_checkpoint(path));
    models::check_compatible(out.back(), dataset);
  }
  return out;
}

json eval_config(const std::string& command, const EvalOptions& o) {
  json c = {{"command", command}, {"dataset", o.dataset.string()}, {"seed", o.seed}};
  for (const auto& p : o.checkpoints) {
    c["checkpoints"].push_back(p.string());
  }
  c["from"] = o.from;
  c["to"] = o.to;
  c["seconds"] = o.seconds;
  c["replay_ratio"] = o.replay_ratio;
  return c;
}

int run_eval_replay(const EvalOptions& o) {
  const auto dataset = features::load_dataset(o.dataset);
  auto models = load_models(o, dataset);
  const auto dir = evaluation::make_run_directory(o.runs, eval_config("eval-replay", o));
  evaluation::AbilityMatrix matrix;
  matrix.thresholds = {{"replay_mse_over_variance", o.replay_ratio}, {"divergence_e", evaluation::kReplayDivergence}};
  std::vector<evaluation::MseRow> rows;
  for (auto& model : models) {
    bool all = true;
    for (const auto& style : dataset.styles) {
      auto r = evaluation::replay_eval(model, dataset, evaluation::first_clip_of(dataset, style));
      const double threshold = o.replay_ratio * evaluation::pose_variance(dataset, style);
      const bool ok = !r.diverged && r.mse < threshold;
      all = all && ok;
      std::cout << std::left << std::setw(9) << r.variant << std::setw(10) << style << " mse " << std::setw(12)
                << r.mse << " threshold " << std::setw(12) << threshold << (ok ? "pass" : "FAIL")
                << (r.diverged ? " (diverged: " + r.failure + ")" : "") << '\n';
      evaluation::write_replay_csv(dir, r);
      rows.push_back({std::move(r), threshold});
    }
    matrix.row(models::variant_name(model.config().variant)).replay = all;
  }
  evaluation::write_mse_table(dir / "mse_table.csv", rows);
  evaluation::write_ability_matrix(dir / "ability_matrix.json", matrix);
  std::cout << matrix.to_text() << "artifacts in " << dir.string() << '\n';
  return 0;
}

std::vector<std::pair<std::string, std::string>> style_pairs(const features::Dataset& d, const EvalOptions& o,
                                                             bool ordered) {
  const auto check = [&](const std::string& s) {
    d.style_of(s);
    return s;
  };
  std::vector<std::pair<std::string, std::string>> pairs;
  if (!o.from.empty() || !o.to.empty()) {
    if (o.from.size() != o.to.size()) {
      throw ConfigError("--from and --to must be given the same number of times");
    }
    for (std::size_t i = 0; i < o.from.size(); ++i) {
      pairs.emplace_back(check(o.from[i]), check(o.to[i]));
    }
    return pairs;
  }
  for (std::size_t a = 0; a < d.styles.size(); ++a) {
    for (std::size_t b = ordered ? 0 : a + 1; b < d.styles.size(); ++b) {
      if (a != b) {
        pairs.emplace_back(d.styles[a], d.styles[b]);
      }
    }
  }
  return pairs;
}

int run_eval_transfer(const EvalOptions& o) {
  const auto dataset = features::load_dataset(o.dataset);
  const auto classifier = evaluation::StyleClassifier::fit(dataset);
  auto models = load_models(o, dataset);
  const auto pairs = style_pairs(dataset, o, true);
  const auto dir = evaluation::make_run_directory(o.runs, eval_config("eval-transfer", o));
  evaluation::TransitionOptions options;
  options.seed = o.seed;
  evaluation::AbilityMatrix matrix;
  matrix.thresholds = {{"continuity_factor", options.continuity_factor},
                       {"transition_seconds", options.transition_seconds},
                       {"classifier_accuracy", classifier.training_accuracy()}};
  json details = json::array();
  for (auto& model : models) {
    const std::string variant = models::variant_name(model.config().variant);
    bool all = true;
    for (const auto& [from, to] : pairs) {
      const auto r = evaluation::transition_eval(model, dataset, classifier, from, to, options);
      all = all && r.passed;
      std::cout << std::left << std::setw(9) << variant << from << " -> " << std::setw(10) << to << " classified "
                << std::setw(10) << r.classified << " continuity " << r.continuity << " / " << r.threshold << "  "
                << (r.passed ? "pass" : "FAIL") << '\n';
      details.push_back({{"variant", variant},
                         {"from", from},
                         {"to", to},
                         {"classified", r.classified},
                         {"continuity", r.continuity},
                         {"steady_state", r.steady_state},
                         {"threshold", r.threshold},
                         {"ramp_ticks", r.lambdas.size()},
                         {"finite", r.finite},
                         {"passed", r.passed}});
    }
    matrix.row(variant).transition = all;
  }
  std::ofstream(dir / "transition.json") << details.dump(2) << '\n';
  evaluation::write_ability_matrix(dir / "ability_matrix.json", matrix);
  std::cout << matrix.to_text() << "artifacts in " << dir.string() << '\n';
  return 0;
}

int run_eval_interp(const EvalOptions& o) {
  const auto dataset = features::load_dataset(o.dataset);
  const auto classifier = evaluation::StyleClassifier::fit(dataset);
  auto models = load_models(o, dataset);
  const auto pairs = style_pairs(dataset, o, false);
  const auto dir = evaluation::make_run_directory(o.runs, eval_config("eval-interp", o));
  evaluation::InterpolationOptions options;
  options.seed = o.seed;
  options.seconds = o.seconds;
  evaluation::AbilityMatrix matrix;
  matrix.thresholds = {{"bbox_factor", options.bbox_factor}, {"seconds", options.seconds}};
  json details = json::array();
  for (auto& model : models) {
    const std::string variant = models::variant_name(model.config().variant);
    bool all = true;
    for (const auto& [a, b] : pairs) {
      const auto r = evaluation::interpolation_eval(model, dataset, classifier, a, b, options);
      all = all && r.passed;
      std::cout << std::left << std::setw(9) << variant << a << " + " << std::setw(10) << b << " bounded "
                << r.bounded << " distances " << r.distance_first << ", " << r.distance_second << " parents "
                << r.parent_distance << "  " << (r.passed ? "pass" : "FAIL") << '\n';
      details.push_back({{"variant", variant},
                         {"first", a},
                         {"second", b},
                         {"frames", r.frames},
                         {"bounded", r.bounded},
                         {"distance_first", r.distance_first},
                         {"distance_second", r.distance_second},
                         {"parent_distance", r.parent_distance},
                         {"passed", r.passed}});
    }
    matrix.row(variant).interpolation = all;
  }
  std::ofstream(dir / "interpolation.json") << details.dump(2) << '\n';
  evaluation::write_ability_matrix(dir / "ability_matrix.json", matrix);
  std::cout << matrix.to_text() << "artifacts in " << dir.string() << '\n';
  return 0;
}

// ---- serve --------------------------------------------------------------------

struct ServeOptions {
  fs::path checkpoint;
  std::string bind = "127.0.0.1";
  unsigned short port = 8765;
  double fps = 60.0;
  double blend = 0.5;
  std::uint64_t seed = 0;
  std::size_t queue = 8;
  std::optional<fs::path> record;
  std::optional<fs::path> replay;
  std::optional<fs::path> frames_out;
};

int run_serve(const ServeOptions& o) {
  if (o.frames_out) {
    if (!o.replay) {
      throw ConfigError("--frames-out needs --replay");
    }
    auto model = models::load_checkpoint(o.checkpoint);
    const auto frames = runtime::replay_recording(model, runtime::load_recording(*o.replay));
    std::ofstream out(*o.frames_out);
    if (!out) {
      throw ConfigError("cannot write " + o.frames_out->string());
    }
    for (const auto& f : frames) {
      out << f << '\n';
    }
    std::cout << "replayed " << frames.size() << " messages, stream hash " << hex64(runtime::stream_hash(frames))
              << '\n';
    return 0;
  }
  runtime::ServerConfig config;
  config.checkpoint = read_file(o.checkpoint);
  config.address = o.bind;
  config.port = o.port;
  config.fps = o.fps;
  config.trajectory_blend = o.blend;
  config.seed = o.seed;
  config.queue_capacity = o.queue;
  config.record = o.record;
  if (o.replay) {
    config.replay = runtime::load_recording(*o.replay);
  }

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  runtime::Server server(config);
  std::cout << "serving ws://" << o.bind << ':' << server.port() << " at " << o.fps << " fps" << std::endl;
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  server.run();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  const auto s = server.stats();
  std::cout << "connections " << s.connections << ", frames sent " << s.frames_sent << ", dropped "
            << s.frames_dropped << ", overruns " << s.overruns << '\n';
  return 0;
}

void add_config(CLI::App* app) {
  app->allow_extras();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-style motion synthesis toolkit"};
  app.require_subcommand(1);
  app.allow_extras();
  app.fallthrough();
  app.set_config("--config", "", "TOML file; a [<subcommand>] table holds that subcommand's long option names")
      ->check(CLI::ExistingFile);
  app.allow_config_extras(CLI::config_extras_mode::error);

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth-data", "Generate the procedural multi-style corpus");
  add_config(synth_cmd);
  synth_cmd->add_option("--out", synth.out, "Output corpus directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Noise seed")->capture_default_str();
  synth_cmd->add_option("--seconds", synth.seconds, "Seconds per clip")->capture_default_str();
  synth_cmd->add_option("--clips", synth.clips, "Clips per style")->capture_default_str();
  synth_cmd->add_option("--fps", synth.fps, "Frames per second")->capture_default_str();
  synth_cmd->add_option("--noise", synth.noise, "Per-cycle variation scale")->capture_default_str();

  PreprocessOptions pre;
  auto* pre_cmd = app.add_subcommand("preprocess", "Turn a labeled corpus into a dataset file");
  add_config(pre_cmd);
  pre_cmd->add_option("--corpus", pre.corpus, "Corpus directory with corpus.json")->required();
  pre_cmd->add_option("--out", pre.out, "Output dataset file")->required();
  pre_cmd->add_option("--joint-map", pre.joint_map, "Retarget onto the 18-joint character with this joint map");

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train one model variant");
  add_config(train_cmd);
  train_cmd->add_option("--dataset", train.dataset, "Dataset file")->required();
  train_cmd->add_option("--out", train.out, "Checkpoint to write")->required();
  train_cmd->add_option("--variant", train.variant, "snsm, mtcn or mtcn-in")
      ->check(CLI::IsMember({"snsm", "mtcn", "mtcn-in"}))
      ->capture_default_str();
  train_cmd->add_option("--epochs", train.epochs)->capture_default_str();
  train_cmd->add_option("--batch-size", train.batch)->capture_default_str();
  train_cmd->add_option("--rollout", train.rollout, "Frames per scheduled-sampling rollout")->capture_default_str();
  train_cmd->add_option("--schedule", train.schedule, "Ground-truth probability direction")
      ->check(CLI::IsMember({"decreasing", "increasing"}))
      ->capture_default_str();
  train_cmd->add_option("--ramp-epochs", train.ramp)->capture_default_str();
  train_cmd->add_option("--lr", train.lr)->capture_default_str();
  train_cmd->add_option("--weight-decay", train.weight_decay)->capture_default_str();
  train_cmd->add_option("--dropout", train.dropout)->capture_default_str();
  train_cmd->add_option("--seed", train.seed)->capture_default_str();
  train_cmd->add_option("--experts", train.experts)->capture_default_str();
  train_cmd->add_option("--hidden", train.hidden)->capture_default_str();
  train_cmd->add_option("--tau", train.tau, "History frames of the temporal variants")->capture_default_str();
  train_cmd->add_option("--gating-hidden", train.gating_hidden, "Comma-separated gating layer widths")
      ->capture_default_str();
  train_cmd->add_option("--tcn-channels", train.tcn_channels, "Comma-separated convolution widths")
      ->capture_default_str();
  train_cmd->add_option("--telemetry", train.telemetry, "Append epoch,loss,p,wall_ms rows to this CSV");

  EvalOptions eval_replay;
  EvalOptions eval_transfer;
  EvalOptions eval_interp;
  const auto add_eval = [&](const char* name, const char* help, EvalOptions& o) {
    auto* cmd = app.add_subcommand(name, help);
    add_config(cmd);
    cmd->add_option("--dataset", o.dataset, "Dataset the models were trained on")->required();
    cmd->add_option("--checkpoint", o.checkpoints, "Checkpoint to evaluate (repeatable)")->required();
    cmd->add_option("--runs", o.runs, "Parent of the run directory")->capture_default_str();
    cmd->add_option("--seed", o.seed)->capture_default_str();
    return cmd;
  };
  auto* replay_cmd = add_eval("eval-replay", "Autoregressive replay error per style", eval_replay);
  replay_cmd->add_option("--ratio", eval_replay.replay_ratio, "Pass below ratio x per-channel target variance")
      ->capture_default_str();
  auto* transfer_cmd = add_eval("eval-transfer", "Online style transitions", eval_transfer);
  transfer_cmd->add_option("--from", eval_transfer.from, "Source style (repeatable, pairs with --to)");
  transfer_cmd->add_option("--to", eval_transfer.to, "Target style");
  auto* interp_cmd = add_eval("eval-interp", "50/50 style interpolation", eval_interp);
  interp_cmd->add_option("--first", eval_interp.from, "First style (repeatable, pairs with --second)");
  interp_cmd->add_option("--second", eval_interp.to, "Second style");
  interp_cmd->add_option("--seconds", eval_interp.seconds, "Generated seconds per pair")
      ->check(CLI::Range(4.0, 3600.0))
      ->capture_default_str();

  ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("serve", "WebSocket generation service");
  add_config(serve_cmd);
  serve_cmd->add_option("--checkpoint", serve.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--bind", serve.bind)->capture_default_str();
  serve_cmd->add_option("--port", serve.port, "0 picks a free port")->capture_default_str();
  serve_cmd->add_option("--fps", serve.fps)->capture_default_str();
  serve_cmd->add_option("--blend", serve.blend, "Future trajectory blend factor")->capture_default_str();
  serve_cmd->add_option("--seed", serve.seed, "Initial session seed")->capture_default_str();
  serve_cmd->add_option("--queue", serve.queue, "Frames buffered per client before dropping the oldest")
      ->capture_default_str();
  serve_cmd->add_option("--record", serve.record, "Record sessions to <stem>-<n><ext>");
  serve_cmd->add_option("--replay", serve.replay, "Drive sessions from a recording")->check(CLI::ExistingFile);
  serve_cmd->add_option("--frames-out", serve.frames_out, "With --replay: write the frame stream here and exit");

  try {
    app.parse(argc, argv);
    CLI::App* sub = app.get_subcommands().front();
    auto extras = sub->remaining();
    if (extras.empty()) {
      extras = app.remaining();
    }
    if (!extras.empty()) {
      std::cerr << unknown_flag_message(*sub, extras.front()) << '\n';
      return kUsageError;
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    if (!subs.empty() && !subs.front()->remaining().empty()) {
      std::cerr << unknown_flag_message(*subs.front(), subs.front()->remaining().front()) << '\n';
    } else if (!subs.empty() && !app.remaining().empty()) {
      std::cerr << unknown_flag_message(*subs.front(), app.remaining().front()) << '\n';
    } else {
      app.exit(e);
    }
    return kUsageError;
  }

  try {
    if (*synth_cmd) return run_synth(synth);
    if (*pre_cmd) return run_preprocess(pre);
    if (*train_cmd) return run_train(train);
    if (*replay_cmd) return run_eval_replay(eval_replay);
    if (*transfer_cmd) return run_eval_transfer(eval_transfer);
    if (*interp_cmd) return run_eval_interp(eval_interp);
    if (*serve_cmd) return run_serve(serve);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kUsageError;
}
