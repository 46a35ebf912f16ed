#include "mstyle/models/components.hpp"

#include "mstyle/numerics/optim.hpp"

#include <cmath>
#include <numbers>

namespace mstyle::models {

using nn::Graph;
using nn::Parameter;
using nn::Tensor;
using nn::Var;

namespace {

void check_alpha(const Tensor& alpha, std::size_t rows, std::size_t experts, const char* where) {
  if (alpha.cols() != experts || alpha.rows() != rows) {
    throw DimensionError(std::string(where) + ": alpha " + nn::shape_string(alpha.shape()) + " does not match " +
                         std::to_string(rows) + " rows of " + std::to_string(experts) + " experts");
  }
  if (!alpha.all_finite()) {
    throw NumericError(std::string(where) + ": non-finite expert weights");
  }
}

}  // namespace

MoeLayer::MoeLayer(const std::string& name, std::size_t experts, std::size_t in, std::size_t out,
                   nn::Activation act, Rng& rng)
    : experts_(experts), out_(out), act_(act) {
  if (experts == 0 || in == 0 || out == 0) {
    throw ConfigError("MoeLayer '" + name + "' needs positive sizes");
  }
  Tensor w({experts * out, in});
  for (std::size_t n = 0; n < experts; ++n) {
    const Tensor block = nn::glorot_uniform({out, in}, in, out, rng);
    std::copy(block.data().begin(), block.data().end(), w.data().begin() + static_cast<long>(n * out * in));
  }
  weight_ = Parameter(name + ".weight", std::move(w));
  bias_ = Parameter(name + ".bias", Tensor({experts * out}));
}

Var MoeLayer::forward(Graph& g, Var x, Var alpha) {
  check_alpha(alpha.value(), x.value().rows(), experts_, "moe_forward");
  const Var h = nn::add_bias(nn::matmul_nt(x, g.parameter(weight_)), g.parameter(bias_));
  return nn::activate(nn::moe_combine(h, alpha, experts_), act_);
}

Tensor MoeLayer::forward_blended_parameters(const Tensor& x, const Tensor& alpha) const {
  const std::size_t rows = x.rows();
  const std::size_t n_in = in();
  if (x.cols() != n_in) {
    throw DimensionError("moe_forward: input " + nn::shape_string(x.shape()) + " does not match weight " +
                         nn::shape_string(weight_.value.shape()));
  }
  check_alpha(alpha, rows, experts_, "moe_forward");
  Tensor y({rows, out_});
  const nn::ConstMatrixMap w(weight_.value.data().data(), static_cast<Eigen::Index>(experts_ * out_),
                             static_cast<Eigen::Index>(n_in));
  nn::RowMatrix blended(out_, n_in);
  Eigen::VectorXf bias(out_);
  for (std::size_t r = 0; r < rows; ++r) {
    blended.setZero();
    bias.setZero();
    for (std::size_t n = 0; n < experts_; ++n) {
      const float a = alpha.at(r, n);
      blended += a * w.middleRows(static_cast<Eigen::Index>(n * out_), static_cast<Eigen::Index>(out_));
      for (std::size_t o = 0; o < out_; ++o) {
        bias[static_cast<Eigen::Index>(o)] += a * bias_.value[n * out_ + o];
      }
    }
    const Eigen::Map<const Eigen::VectorXf> xr(x.data().data() + r * n_in, static_cast<Eigen::Index>(n_in));
    const Eigen::VectorXf yr = blended * xr + bias;
    for (std::size_t o = 0; o < out_; ++o) {
      float v = yr[static_cast<Eigen::Index>(o)];
      if (act_ == nn::Activation::elu && v < 0.0f) {
        v = std::expm1(v);
      }
      y.at(r, o) = v;
    }
  }
  return y;
}

Mlp::Mlp(const std::string& name, const std::vector<std::size_t>& widths, Rng& rng) {
  if (widths.size() < 2) {
    throw ConfigError("Mlp '" + name + "' needs at least input and output widths");
  }
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::string prefix = name + "." + std::to_string(l);
    weights_.emplace_back(prefix + ".weight",
                          nn::glorot_uniform({widths[l + 1], widths[l]}, widths[l], widths[l + 1], rng));
    biases_.emplace_back(prefix + ".bias", Tensor({widths[l + 1]}));
  }
}

Var Mlp::forward(Graph& g, Var x) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const bool last = l + 1 == weights_.size();
    x = nn::dense(x, g.parameter(weights_[l]), g.parameter(biases_[l]),
                  last ? nn::Activation::identity : nn::Activation::elu);
  }
  return x;
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

StyleModulator::StyleModulator(const std::string& name, std::size_t styles, std::size_t outputs,
                               const std::vector<std::size_t>& hidden, Rng& rng)
    : styles_(styles), has_hidden_(!hidden.empty()) {
  std::size_t width = styles;
  if (has_hidden_) {
    std::vector<std::size_t> widths{styles};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    hidden_ = Mlp(name + ".hidden", widths, rng);
    width = hidden.back();
  }
  sigma_ = Parameter(name + ".sigma", Tensor({outputs, width}));
  mu_ = Parameter(name + ".mu", Tensor({outputs, width}));
}

StyleModulator::Result StyleModulator::forward(Graph& g, Var style) {
  if (style.value().cols() != styles_) {
    throw DimensionError("style embedding " + nn::shape_string(style.shape()) + " does not match " +
                         std::to_string(styles_) + " styles");
  }
  const Var h = has_hidden_ ? nn::elu(hidden_.forward(g, style)) : style;
  const std::vector<float> ones(outputs(), 1.0f);
  return {nn::affine_columns(nn::matmul_nt(h, g.parameter(sigma_)), ones, ones),
          nn::matmul_nt(h, g.parameter(mu_))};
}

Var StyleModulator::modulate(Graph& g, Var alpha, Var style) {
  const Result r = forward(g, style);
  return nn::add(nn::mul(r.sigma, alpha), r.mu);
}

void StyleModulator::set_identity() {
  sigma_.value.fill(0.0f);
  mu_.value.fill(0.0f);
}

std::vector<Parameter*> StyleModulator::parameters() {
  std::vector<Parameter*> out;
  if (has_hidden_) {
    out = hidden_.parameters();
  }
  out.push_back(&sigma_);
  out.push_back(&mu_);
  return out;
}

TcnEncoder::TcnEncoder(const std::string& name, std::size_t in_channels, const std::vector<std::size_t>& channels,
                       std::size_t kernel_width, bool use_win, float eps, Rng& rng)
    : use_win_(use_win), eps_(eps) {
  if (channels.empty() || kernel_width == 0) {
    throw ConfigError("TcnEncoder '" + name + "' needs at least one layer and a positive kernel width");
  }
  std::size_t in = in_channels;
  for (std::size_t l = 0; l < channels.size(); ++l) {
    const std::string prefix = name + "." + std::to_string(l);
    kernels_.emplace_back(prefix + ".kernel", nn::glorot_uniform({kernel_width, in, channels[l]}, kernel_width * in,
                                                                 kernel_width * channels[l], rng));
    biases_.emplace_back(prefix + ".bias", Tensor({channels[l]}));
    in = channels[l];
  }
}

Var TcnEncoder::forward_sequence(Graph& g, Var window) {
  const Tensor& wv = window.value();
  if (wv.size() == 0 || wv.rank() < 2 || wv.dim(wv.rank() - 2) == 0) {
    throw StateError("tcn_encode: empty window");
  }
  Var h = window;
  for (std::size_t l = 0; l < kernels_.size(); ++l) {
    h = nn::causal_conv1d(h, g.parameter(kernels_[l]), nn::Padding::replicate);
    if (use_win_) {
      h = nn::window_instance_norm(h, eps_);
    }
    h = nn::elu(nn::add_bias(h, g.parameter(biases_[l])));
  }
  return h;
}

Var TcnEncoder::forward(Graph& g, Var window) { return nn::last_step(forward_sequence(g, window)); }

std::size_t TcnEncoder::receptive_field() const { return kernels_.size() * (kernel_width() - 1) + 1; }

std::vector<Parameter*> TcnEncoder::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t l = 0; l < kernels_.size(); ++l) {
    out.push_back(&kernels_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

Tensor phase_encoding(std::span<const float> phase) {
  Tensor out({phase.size(), 2});
  for (std::size_t r = 0; r < phase.size(); ++r) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(phase[r]);
    out.at(r, 0) = static_cast<float>(std::sin(a));
    out.at(r, 1) = static_cast<float>(std::cos(a));
  }
  return out;
}

Tensor gating_input_nsm(std::span<const float> phase, const Tensor& gamma) {
  if (gamma.rows() != phase.size()) {
    throw DimensionError("gating_input_nsm: " + std::to_string(phase.size()) + " phases for gait " +
                         nn::shape_string(gamma.shape()));
  }
  const Tensor enc = phase_encoding(phase);
  const std::size_t n = gamma.cols();
  Tensor out({phase.size(), 2 * n});
  for (std::size_t r = 0; r < phase.size(); ++r) {
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        out.at(r, i * n + j) = enc.at(r, i) * gamma.at(r, j);
      }
    }
  }
  return out;
}

Tensor modulate(const Tensor& alpha, const Tensor& sigma, const Tensor& mu) {
  if (alpha.shape() != sigma.shape() || alpha.shape() != mu.shape()) {
    throw DimensionError("modulate: shapes " + nn::shape_string(alpha.shape()) + ", " +
                         nn::shape_string(sigma.shape()) + ", " + nn::shape_string(mu.shape()));
  }
  Tensor out(alpha.shape());
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    out[i] = sigma[i] * alpha[i] + mu[i];
  }
  return out;
}

std::vector<float> blend_styles(std::span<const float> s1, std::span<const float> s2, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ConfigError("blend_styles: lambda " + std::to_string(lambda) + " outside [0, 1]");
  }
  if (s1.size() != s2.size()) {
    throw DimensionError("blend_styles: embeddings of size " + std::to_string(s1.size()) + " and " +
                         std::to_string(s2.size()));
  }
  std::vector<float> out(s1.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>((1.0 - lambda) * s1[i] + lambda * s2[i]);
  }
  return out;
}

std::vector<float> one_hot(std::size_t index, std::size_t size) {
  if (index >= size) {
    throw ConfigError("style index " + std::to_string(index) + " outside vocabulary of " + std::to_string(size));
  }
  std::vector<float> out(size, 0.0f);
  out[index] = 1.0f;
  return out;
}

Tensor window_instance_norm(const Tensor& window, float eps) {
  Graph g(nn::GradMode::disabled);
  return nn::window_instance_norm(g.constant(window), eps).value();
}

}  // namespace mstyle::models
