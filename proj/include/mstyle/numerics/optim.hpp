#pragma once

#include "mstyle/numerics/graph.hpp"
#include "mstyle/numerics/rng.hpp"

#include <span>

namespace mstyle::nn {

struct OptimizerConfig {
  float learning_rate = 1e-3f;
  float weight_decay = 1e-5f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps_adam = 1e-8f;
  float dropout_rate = 0.4f;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

/// One bias-corrected Adam update with L2 weight decay folded into the gradient.
///
/// `step_index` counts from 1. Gradients are zeroed afterwards. Throws
/// NumericError naming the parameter if any gradient is non-finite; in that
/// case no parameter is modified.
void adam_step(std::span<Parameter* const> params, const OptimizerConfig& cfg, long step_index);

void zero_grads(std::span<Parameter* const> params);

/// Flush-to-zero and denormals-are-zero on the calling thread while alive.
class DenormalGuard {
 public:
  DenormalGuard();
  ~DenormalGuard();
  DenormalGuard(const DenormalGuard&) = delete;
  DenormalGuard& operator=(const DenormalGuard&) = delete;

 private:
  unsigned saved_ = 0;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace mstyle::nn
