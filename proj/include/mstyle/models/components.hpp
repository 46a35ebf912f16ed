#pragma once

#include "mstyle/numerics/ops.hpp"

#include <string>
#include <vector>

namespace mstyle::models {

/// Mixture-of-experts dense layer: y = act(sum_n alpha_n (W_n x + b_n)).
///
/// Expert n owns rows [n*out, (n+1)*out) of the stacked weight [N*out x in]
/// and the matching slice of the stacked bias.
class MoeLayer {
 public:
  MoeLayer() = default;
  MoeLayer(const std::string& name, std::size_t experts, std::size_t in, std::size_t out, nn::Activation act,
           Rng& rng);

  std::size_t experts() const { return experts_; }
  std::size_t in() const { return weight_.value.dim(1); }
  std::size_t out() const { return out_; }
  nn::Activation activation() const { return act_; }

  /// Blends expert outputs. alpha is [B x N].
  nn::Var forward(nn::Graph& g, nn::Var x, nn::Var alpha);
  /// Blends expert parameters per row first, then applies one dense layer.
  nn::Tensor forward_blended_parameters(const nn::Tensor& x, const nn::Tensor& alpha) const;

  nn::Parameter& weight() { return weight_; }
  nn::Parameter& bias() { return bias_; }
  std::vector<nn::Parameter*> parameters() { return {&weight_, &bias_}; }

 private:
  std::size_t experts_ = 0;
  std::size_t out_ = 0;
  nn::Activation act_ = nn::Activation::identity;
  nn::Parameter weight_;
  nn::Parameter bias_;
};

/// Stack of dense layers with ELU on all but the last.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, const std::vector<std::size_t>& widths, Rng& rng);

  nn::Var forward(nn::Graph& g, nn::Var x);
  std::size_t in() const { return weights_.front().value.dim(1); }
  std::size_t out() const { return weights_.back().value.dim(0); }
  std::vector<nn::Parameter*> parameters();

 private:
  std::vector<nn::Parameter> weights_;
  std::vector<nn::Parameter> biases_;
};

/// Elementwise affine re-modulation of expert weights: r(alpha, s) = sigma(s) * alpha + mu(s).
///
/// sigma(s) = 1 + A_sigma h(s) and mu(s) = A_mu h(s), where h is the style
/// vector itself or an optional ELU network of it. The final maps start at
/// zero, which is the identity configuration.
class StyleModulator {
 public:
  StyleModulator() = default;
  StyleModulator(const std::string& name, std::size_t styles, std::size_t outputs,
                 const std::vector<std::size_t>& hidden, Rng& rng);

  struct Result {
    nn::Var sigma;
    nn::Var mu;
  };
  Result forward(nn::Graph& g, nn::Var style);
  nn::Var modulate(nn::Graph& g, nn::Var alpha, nn::Var style);

  std::size_t styles() const { return styles_; }
  std::size_t outputs() const { return sigma_.value.dim(0); }
  void set_identity();
  nn::Parameter& sigma_map() { return sigma_; }
  nn::Parameter& mu_map() { return mu_; }
  std::vector<nn::Parameter*> parameters();

 private:
  std::size_t styles_ = 0;
  bool has_hidden_ = false;
  Mlp hidden_;
  nn::Parameter sigma_;
  nn::Parameter mu_;
};

/// Causal convolution stack over a pose window, optionally with window
/// instance normalization after every convolution. Each layer pads the past
/// with its first time step, so a constant window stays constant.
class TcnEncoder {
 public:
  TcnEncoder() = default;
  TcnEncoder(const std::string& name, std::size_t in_channels, const std::vector<std::size_t>& channels,
             std::size_t kernel_width, bool use_win, float eps, Rng& rng);

  /// [B x T x C] -> [B x T x C_last].
  nn::Var forward_sequence(nn::Graph& g, nn::Var window);
  /// Feature of the final time step, [B x C_last].
  nn::Var forward(nn::Graph& g, nn::Var window);

  bool use_win() const { return use_win_; }
  float eps() const { return eps_; }
  std::size_t in_channels() const { return kernels_.front().value.dim(1); }
  std::size_t out_channels() const { return kernels_.back().value.dim(2); }
  std::size_t kernel_width() const { return kernels_.front().value.dim(0); }
  std::size_t receptive_field() const;
  std::vector<nn::Parameter*> parameters();

 private:
  bool use_win_ = false;
  float eps_ = 0.3f;
  std::vector<nn::Parameter> kernels_;
  std::vector<nn::Parameter> biases_;
};

/// (sin 2 pi p, cos 2 pi p) kron gamma, row by row. phase is [B], gamma [B x G].
nn::Tensor gating_input_nsm(std::span<const float> phase, const nn::Tensor& gamma);
nn::Tensor phase_encoding(std::span<const float> phase);

/// sigma * alpha + mu elementwise.
nn::Tensor modulate(const nn::Tensor& alpha, const nn::Tensor& sigma, const nn::Tensor& mu);

/// (1 - lambda) s1 + lambda s2. Throws ConfigError for lambda outside [0, 1].
std::vector<float> blend_styles(std::span<const float> s1, std::span<const float> s2, double lambda);
std::vector<float> one_hot(std::size_t index, std::size_t size);

/// Per-channel window normalization of a [T x C] sequence.
nn::Tensor window_instance_norm(const nn::Tensor& window, float eps);

}  // namespace mstyle::models
