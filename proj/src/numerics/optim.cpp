#include "mstyle/numerics/optim.hpp"

#include <cmath>
#include <string>

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace mstyle::nn {

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0f)) {
    throw ConfigError("learning_rate must be positive");
  }
  if (!(dropout_rate >= 0.0f && dropout_rate < 1.0f)) {
    throw ConfigError("dropout_rate must lie in [0, 1)");
  }
  if (!(weight_decay >= 0.0f) || !(beta1 >= 0.0f && beta1 < 1.0f) || !(beta2 >= 0.0f && beta2 < 1.0f) ||
      !(eps_adam > 0.0f)) {
    throw ConfigError("invalid Adam constants");
  }
}

void adam_step(std::span<Parameter* const> params, const OptimizerConfig& cfg, long step_index) {
  if (step_index < 1) {
    throw ConfigError("adam step index starts at 1");
  }
  for (const Parameter* p : params) {
    if (!p->grad.all_finite()) {
      throw NumericError("non-finite gradient in parameter '" + p->name + "'");
    }
  }
  const double correction1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), static_cast<double>(step_index));
  const double correction2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), static_cast<double>(step_index));
  for (Parameter* p : params) {
    float* value = p->value.data().data();
    float* grad = p->grad.data().data();
    float* m = p->first_moment.data().data();
    float* v = p->second_moment.data().data();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const float g = grad[i] + cfg.weight_decay * value[i];
      m[i] = cfg.beta1 * m[i] + (1.0f - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0f - cfg.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      value[i] -= static_cast<float>(cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps_adam));
      grad[i] = 0.0f;
    }
  }
}

void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) {
    p->zero_grad();
  }
}

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (float& v : t.data()) {
    v = static_cast<float>(rng.uniform(-limit, limit));
  }
  return t;
}

DenormalGuard::DenormalGuard() {
#if defined(__SSE__)
  saved_ = _mm_getcsr();
  _mm_setcsr(saved_ | 0x8040u);
#endif
}

DenormalGuard::~DenormalGuard() {
#if defined(__SSE__)
  _mm_setcsr(saved_);
#endif
}

}  // namespace mstyle::nn
