#include "mstyle/models/model.hpp"

#include "mstyle/container.hpp"

#include <fstream>

namespace mstyle::models {

using features::FeatureLayout;
using nn::Graph;
using nn::Tensor;
using nn::Var;

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::snsm:
      return "snsm";
    case Variant::mtcn:
      return "mtcn";
    case Variant::mtcn_in:
      return "mtcn-in";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  if (name == "snsm") {
    return Variant::snsm;
  }
  if (name == "mtcn") {
    return Variant::mtcn;
  }
  if (name == "mtcn-in" || name == "mtcn_in") {
    return Variant::mtcn_in;
  }
  throw ConfigError("unknown model variant '" + std::string(name) + "' (expected snsm, mtcn or mtcn-in)");
}

void ModelConfig::validate() const {
  if (experts == 0 || moe_layers == 0 || hidden == 0) {
    throw ConfigError("experts, moe_layers and hidden must be positive");
  }
  if (!(eps >= 0.1f && eps <= 0.3f)) {
    throw ConfigError("eps " + std::to_string(eps) + " outside [0.1, 0.3]");
  }
  if (temporal() && (tcn_channels.empty() || tcn_kernel == 0)) {
    throw ConfigError("temporal variants need tcn_channels and a positive tcn_kernel");
  }
  if (gating_hidden.empty()) {
    throw ConfigError("gating_hidden must list at least one layer");
  }
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"variant", variant_name(c.variant)},
          {"experts", c.experts},
          {"moe_layers", c.moe_layers},
          {"hidden", c.hidden},
          {"gating_hidden", c.gating_hidden},
          {"modulator_hidden", c.modulator_hidden},
          {"tau", c.tau},
          {"eps", c.eps},
          {"tcn_kernel", c.tcn_kernel},
          {"tcn_channels", c.tcn_channels},
          {"seed", c.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.variant = parse_variant(json_field<std::string>(j, "variant"));
  c.experts = json_field<std::size_t>(j, "experts");
  c.moe_layers = json_field<std::size_t>(j, "moe_layers");
  c.hidden = json_field<std::size_t>(j, "hidden");
  c.gating_hidden = json_field<std::vector<std::size_t>>(j, "gating_hidden");
  c.modulator_hidden = json_field<std::vector<std::size_t>>(j, "modulator_hidden");
  c.tau = json_field<std::size_t>(j, "tau");
  c.eps = json_field<float>(j, "eps");
  c.tcn_kernel = json_field<std::size_t>(j, "tcn_kernel");
  c.tcn_channels = json_field<std::vector<std::size_t>>(j, "tcn_channels");
  c.seed = json_field<std::uint64_t>(j, "seed");
  return c;
}

MotionModel::MotionModel(ModelConfig config, motion::Skeleton skeleton, std::vector<std::string> styles,
                         features::DatasetStats stats)
    : config_(std::move(config)),
      skeleton_(std::move(skeleton)),
      styles_(std::move(styles)),
      stats_(std::move(stats)) {
  config_.validate();
  layout_.joints = skeleton_.size();
  if (styles_.empty()) {
    throw ConfigError("model needs at least one style");
  }
  if (stats_.input.mean.size() != layout_.input_dim() || stats_.output.mean.size() != layout_.output_dim()) {
    throw ConfigError("normalization statistics do not match the feature layout");
  }
  in_scale_ = stats_.input.normalize_scale();
  in_shift_ = stats_.input.normalize_shift();
  const std::size_t pose = layout_.pose_dim();
  pose_out_to_in_scale_.resize(pose);
  pose_out_to_in_shift_.resize(pose);
  for (std::size_t c = 0; c < pose; ++c) {
    pose_out_to_in_scale_[c] = stats_.output.std[c] * in_scale_[c];
    pose_out_to_in_shift_[c] = stats_.output.mean[c] * in_scale_[c] + in_shift_[c];
  }

  Rng rng(config_.seed);
  const std::size_t n = config_.experts;
  std::size_t in = layout_.input_dim();
  for (std::size_t l = 0; l < config_.moe_layers; ++l) {
    const bool last = l + 1 == config_.moe_layers;
    const std::size_t out = last ? layout_.output_dim() : config_.hidden;
    moe_.emplace_back("moe." + std::to_string(l), n, in, out,
                      last ? nn::Activation::identity : nn::Activation::elu, rng);
    in = out;
  }
  const std::size_t alpha_dim = config_.alpha_layers() * n;
  std::size_t gating_in = 2 * layout_.gait_dim();
  if (config_.temporal()) {
    tcn_ = TcnEncoder("tcn", layout_.pose_dim(), config_.tcn_channels, config_.tcn_kernel,
                      config_.variant == Variant::mtcn_in, config_.eps, rng);
    gating_in = tcn_.out_channels();
  }
  std::vector<std::size_t> widths{gating_in};
  widths.insert(widths.end(), config_.gating_hidden.begin(), config_.gating_hidden.end());
  widths.push_back(alpha_dim);
  gating_ = Mlp("gating", widths, rng);
  modulator_ = StyleModulator("modulator", styles_.size(), alpha_dim, config_.modulator_hidden, rng);
}

MotionModel::MotionModel(ModelConfig config, const features::Dataset& dataset)
    : MotionModel(std::move(config), dataset.skeleton, dataset.styles, dataset.stats) {}

namespace {

void require_finite(const Var& v, const std::string& where) {
  if (!v.value().all_finite()) {
    throw NumericError("non-finite values after " + where);
  }
}

}  // namespace

ModelOutputs MotionModel::forward(Graph& g, const ModelInputs& in, float dropout, bool training, Rng& rng) {
  const std::size_t n = config_.experts;
  Var logits;
  if (config_.temporal()) {
    if (!in.window.valid()) {
      throw StateError("temporal model needs a pose window");
    }
    const Var theta = tcn_.forward(g, in.window);
    require_finite(theta, "tcn encoder");
    logits = gating_.forward(g, theta);
  } else {
    if (!in.gating.valid()) {
      throw StateError("SNSM needs phase-gait gating features");
    }
    logits = gating_.forward(g, in.gating);
  }
  ModelOutputs out;
  out.alpha_pre = nn::softmax_groups(logits, n);
  require_finite(out.alpha_pre, "gating network");
  out.alpha = modulator_.modulate(g, out.alpha_pre, in.style);
  require_finite(out.alpha, "style modulation");

  Var h = in.x;
  for (std::size_t l = 0; l < moe_.size(); ++l) {
    const Var a = config_.temporal() ? nn::slice_cols(out.alpha, l * n, n) : out.alpha;
    h = moe_[l].forward(g, h, a);
    require_finite(h, "moe layer " + std::to_string(l));
    if (l + 1 < moe_.size()) {
      h = nn::dropout(h, dropout, training, rng);
    }
  }
  out.y = h;
  return out;
}

Tensor MotionModel::normalize_inputs(const Tensor& x) const {
  Graph g(nn::GradMode::disabled);
  return nn::affine_columns(g.constant(x), in_scale_, in_shift_).value();
}

Tensor MotionModel::denormalize_outputs(const Tensor& y) const {
  Graph g(nn::GradMode::disabled);
  return nn::affine_columns(g.constant(y), stats_.output.std, stats_.output.mean).value();
}

Tensor MotionModel::normalize_pose_window(const std::vector<std::vector<float>>& history) const {
  if (history.empty()) {
    throw StateError("pose history is empty");
  }
  const std::size_t w = config_.window();
  const std::size_t pose = layout_.pose_dim();
  Tensor out({1, w, pose});
  const std::size_t have = history.size();
  for (std::size_t i = 0; i < w; ++i) {
    // Left-pad with the earliest available frame.
    const std::size_t src = have >= w ? have - w + i : (i + have >= w ? i + have - w : 0);
    const auto& frame = history[src];
    if (frame.size() < pose) {
      throw DimensionError("history frame has " + std::to_string(frame.size()) + " channels, expected " +
                           std::to_string(pose));
    }
    for (std::size_t c = 0; c < pose; ++c) {
      out[i * pose + c] = frame[c] * in_scale_[c] + in_shift_[c];
    }
  }
  return out;
}

Var MotionModel::output_pose_as_input(Var y) const {
  return nn::affine_columns(nn::slice_cols(y, 0, layout_.pose_dim()), pose_out_to_in_scale_, pose_out_to_in_shift_);
}

Tensor MotionModel::gating_features(std::span<const float> phase, const Tensor& raw_inputs) const {
  const std::size_t rows = raw_inputs.rows();
  Tensor gait({rows, layout_.gait_dim()});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < layout_.gait_dim(); ++c) {
      gait.at(r, c) = raw_inputs.at(r, layout_.gait_offset() + c);
    }
  }
  return gating_input_nsm(phase, gait);
}

StepResult MotionModel::step(const StepRequest& request) {
  if (request.input.size() != layout_.input_dim()) {
    throw DimensionError("step input has " + std::to_string(request.input.size()) + " channels, expected " +
                         std::to_string(layout_.input_dim()));
  }
  const Tensor raw({1, layout_.input_dim()}, std::vector<float>(request.input.begin(), request.input.end()));
  Graph g(nn::GradMode::disabled);
  ModelInputs in;
  in.x = g.constant(normalize_inputs(raw));
  in.style = g.constant(Tensor({1, request.style.size()}, std::vector<float>(request.style.begin(), request.style.end())));
  if (config_.temporal()) {
    if (request.history == nullptr || request.history->empty()) {
      throw StateError("pose history buffer under-run");
    }
    in.window = g.constant(normalize_pose_window(*request.history));
  } else {
    const float p = request.phase;
    in.gating = g.constant(gating_features(std::span<const float>(&p, 1), raw));
  }
  Rng unused(0);
  const ModelOutputs out = forward(g, in, 0.0f, false, unused);
  StepResult result;
  const Tensor y = denormalize_outputs(out.y.value());
  result.output.assign(y.data().begin(), y.data().end());
  if (!y.all_finite()) {
    throw NumericError("non-finite model output");
  }
  const std::size_t n = config_.experts;
  for (std::size_t l = 0; l < config_.alpha_layers(); ++l) {
    const auto post = out.alpha.value().data().subspan(l * n, n);
    const auto pre = out.alpha_pre.value().data().subspan(l * n, n);
    result.experts.emplace_back(post.begin(), post.end());
    result.experts_pre.emplace_back(pre.begin(), pre.end());
  }
  return result;
}

std::vector<nn::Parameter*> MotionModel::parameters() {
  std::vector<nn::Parameter*> out;
  for (auto& layer : moe_) {
    const auto p = layer.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  const auto gp = gating_.parameters();
  out.insert(out.end(), gp.begin(), gp.end());
  const auto mp = modulator_.parameters();
  out.insert(out.end(), mp.begin(), mp.end());
  if (config_.temporal()) {
    const auto tp = tcn_.parameters();
    out.insert(out.end(), tp.begin(), tp.end());
  }
  return out;
}

std::size_t MotionModel::parameter_count() {
  std::size_t total = 0;
  for (const auto* p : parameters()) {
    total += p->value.size();
  }
  return total;
}

void write_checkpoint(std::ostream& out, MotionModel& model) {
  Container c;
  nlohmann::json& h = c.header;
  h["format"] = std::string(kCheckpointMagic);
  h["version"] = kCheckpointVersion;
  h["variant"] = variant_name(model.config().variant);
  h["config"] = config_to_json(model.config());
  h["tau"] = model.config().tau;
  h["eps"] = model.config().eps;
  h["styles"] = model.styles();
  h["skeleton"] = features::skeleton_to_json(model.skeleton());
  h["layout"] = {{"joints", model.layout().joints},
                 {"input_dim", model.layout().input_dim()},
                 {"output_dim", model.layout().output_dim()}};
  h["stats"] = {{"input", features::stats_to_json(model.stats().input)},
                {"output", features::stats_to_json(model.stats().output)}};
  for (const auto* p : model.parameters()) {
    c.arrays.push_back({p->name, p->value.shape(), p->value.storage()});
  }
  write_container(out, kCheckpointMagic, c);
}

MotionModel read_checkpoint(std::istream& in) {
  const Container c = read_container(in, kCheckpointMagic);
  const auto& h = c.header;
  const int version = json_field<int>(h, "version");
  if (version != kCheckpointVersion) {
    throw ParseError("field 'version': unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig config = config_from_json(json_field<nlohmann::json>(h, "config"));
  if (variant_name(config.variant) != json_field<std::string>(h, "variant")) {
    throw ParseError("field 'variant' disagrees with the stored config");
  }
  if (json_field<std::size_t>(h, "tau") != config.tau || json_field<float>(h, "eps") != config.eps) {
    throw ParseError("field 'tau'/'eps' disagrees with the stored config");
  }
  auto styles = json_field<std::vector<std::string>>(h, "styles");
  auto skeleton = features::skeleton_from_json(json_field<nlohmann::json>(h, "skeleton"));
  const auto stats_json = json_field<nlohmann::json>(h, "stats");
  features::DatasetStats stats{features::stats_from_json(json_field<nlohmann::json>(stats_json, "input")),
                               features::stats_from_json(json_field<nlohmann::json>(stats_json, "output"))};
  const auto layout = json_field<nlohmann::json>(h, "layout");
  FeatureLayout expect;
  expect.joints = skeleton.size();
  if (json_field<std::size_t>(layout, "joints") != expect.joints ||
      json_field<std::size_t>(layout, "input_dim") != expect.input_dim() ||
      json_field<std::size_t>(layout, "output_dim") != expect.output_dim()) {
    throw ParseError("field 'layout' disagrees with the stored skeleton");
  }
  if (stats.input.mean.size() != expect.input_dim() || stats.output.mean.size() != expect.output_dim()) {
    throw ParseError("field 'stats' has the wrong channel count");
  }
  std::optional<MotionModel> model;
  try {
    model.emplace(config, std::move(skeleton), styles, std::move(stats));
  } catch (const ConfigError& e) {
    throw ParseError(std::string("field 'config': ") + e.what());
  }
  const auto params = model->parameters();
  if (params.size() != c.arrays.size()) {
    throw ParseError("field 'arrays': expected " + std::to_string(params.size()) + " parameter arrays, found " +
                     std::to_string(c.arrays.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ContainerArray& a = c.arrays[i];
    nn::Parameter& p = *params[i];
    if (a.name != p.name) {
      throw ParseError("field 'arrays': expected parameter '" + p.name + "', found '" + a.name + "'");
    }
    if (a.shape != p.value.shape()) {
      const bool style_axis = p.name.rfind("modulator.", 0) == 0;
      throw ParseError(std::string("field '") + (style_axis ? "styles" : "arrays") + "': parameter '" + p.name +
                       "' has shape " + nn::shape_string(a.shape) + ", expected " +
                       nn::shape_string(p.value.shape()) +
                       (style_axis ? " for " + std::to_string(styles.size()) + " styles" : std::string()));
    }
    p.value = Tensor(a.shape, a.values);
  }
  return std::move(*model);
}

void save_checkpoint(const std::filesystem::path& path, MotionModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write checkpoint " + path.string());
  }
  write_checkpoint(out, model);
}

MotionModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open checkpoint " + path.string());
  }
  return read_checkpoint(in);
}

void check_compatible(const MotionModel& model, const features::Dataset& dataset) {
  if (!(model.skeleton() == dataset.skeleton)) {
    throw ConfigError("field 'skeleton': checkpoint and dataset skeletons differ");
  }
  if (model.styles() != dataset.styles) {
    throw ConfigError("field 'styles': checkpoint has " + std::to_string(model.styles().size()) +
                      " styles, dataset has " + std::to_string(dataset.styles.size()));
  }
}

}  // namespace mstyle::models
