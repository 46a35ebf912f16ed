#include "gradcheck.hpp"

namespace mstyle::testing {

using nn::Graph;
using nn::Tensor;
using nn::Var;

std::vector<GradCase> make_op_cases(Rng& rng) {
  std::vector<GradCase> cases;
  const std::size_t rows = 2 + rng.below(3);
  const std::size_t in = 2 + rng.below(4);
  const std::size_t out = 2 + rng.below(4);

  cases.push_back({"dense_elu",
                   {random_tensor({rows, in}, rng), random_tensor({out, in}, rng), random_tensor({out}, rng)},
                   [](Graph&, const std::vector<Var>& v) { return nn::dense(v[0], v[1], v[2], nn::Activation::elu); },
                   [=](const std::vector<DVec>& v) {
                     DVec y = ref_matmul_nt(v[0], v[1], rows, in, out);
                     for (std::size_t r = 0; r < rows; ++r) {
                       for (std::size_t o = 0; o < out; ++o) {
                         y[r * out + o] = ref_elu(y[r * out + o] + v[2][o]);
                       }
                     }
                     return y;
                   }});

  cases.push_back({"softmax_groups",
                   {random_tensor({rows, 2 * out}, rng)},
                   [=](Graph&, const std::vector<Var>& v) { return nn::softmax_groups(v[0], out); },
                   [=](const std::vector<DVec>& v) {
                     DVec y(v[0].size());
                     for (std::size_t k = 0; k < 2 * rows; ++k) {
                       double total = 0.0;
                       for (std::size_t i = 0; i < out; ++i) {
                         total += std::exp(v[0][k * out + i]);
                       }
                       for (std::size_t i = 0; i < out; ++i) {
                         y[k * out + i] = std::exp(v[0][k * out + i]) / total;
                       }
                     }
                     return y;
                   }});

  cases.push_back({"add_sub_mul_scale",
                   {random_tensor({rows, in}, rng), random_tensor({rows, in}, rng), random_tensor({rows, in}, rng)},
                   [](Graph&, const std::vector<Var>& v) {
                     return nn::scale(nn::mul(nn::add(v[0], v[1]), nn::sub(v[2], v[0])), 0.7f);
                   },
                   [](const std::vector<DVec>& v) {
                     DVec y(v[0].size());
                     for (std::size_t i = 0; i < y.size(); ++i) {
                       y[i] = 0.7 * (v[0][i] + v[1][i]) * (v[2][i] - v[0][i]);
                     }
                     return y;
                   }});

  {
    std::vector<float> col_scale(in);
    std::vector<float> col_shift(in);
    for (std::size_t c = 0; c < in; ++c) {
      col_scale[c] = static_cast<float>(rng.uniform(0.5, 2.0));
      col_shift[c] = static_cast<float>(rng.uniform(-1.0, 1.0));
    }
    cases.push_back({"affine_columns",
                     {random_tensor({rows, in}, rng)},
                     [=](Graph&, const std::vector<Var>& v) { return nn::affine_columns(v[0], col_scale, col_shift); },
                     [=](const std::vector<DVec>& v) {
                       DVec y(v[0].size());
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t c = 0; c < in; ++c) {
                           y[r * in + c] = v[0][r * in + c] * col_scale[c] + col_shift[c];
                         }
                       }
                       return y;
                     }});
  }

  cases.push_back({"reshape",
                   {random_tensor({rows, in}, rng)},
                   [=](Graph&, const std::vector<Var>& v) {
                     return nn::mul(nn::reshape(v[0], {rows * in, 1}), nn::reshape(v[0], {rows * in, 1}));
                   },
                   [=](const std::vector<DVec>& v) {
                     DVec y;
                     for (const double a : v[0]) {
                       y.push_back(a * a);
                     }
                     return y;
                   }});

  cases.push_back({"concat_slice",
                   {random_tensor({rows, in}, rng), random_tensor({rows, out}, rng)},
                   [=](Graph&, const std::vector<Var>& v) { return nn::slice_cols(nn::concat_cols({v[0], v[1]}), 1, in); },
                   [=](const std::vector<DVec>& v) {
                     DVec y;
                     for (std::size_t r = 0; r < rows; ++r) {
                       for (std::size_t c = 1; c < 1 + in; ++c) {
                         y.push_back(c < in ? v[0][r * in + c] : v[1][r * out + c - in]);
                       }
                     }
                     return y;
                   }});

  {
    const std::size_t steps = 3;
    cases.push_back({"stack_time_last_step",
                     {random_tensor({rows, in}, rng), random_tensor({rows, in}, rng), random_tensor({rows, in}, rng)},
                     [](Graph&, const std::vector<Var>& v) {
                       Var stacked = nn::stack_time({v[0], v[1], v[2]});
                       return nn::add(nn::last_step(stacked), nn::last_step(nn::elu(stacked)));
                     },
                     [=](const std::vector<DVec>& v) {
                       DVec y(rows * in);
                       for (std::size_t i = 0; i < y.size(); ++i) {
                         y[i] = v[steps - 1][i] + ref_elu(v[steps - 1][i]);
                       }
                       return y;
                     }});
  }

  {
    std::vector<bool> mask(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      mask[r] = rng.bernoulli(0.5);
    }
    cases.push_back({"where_rows",
                     {random_tensor({rows, in}, rng), random_tensor({rows, in}, rng)},
                     [=](Graph&, const std::vector<Var>& v) { return nn::where_rows(mask, v[0], nn::elu(v[1])); },
                     [=](const std::vector<DVec>& v) {
                       DVec y(rows * in);
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t c = 0; c < in; ++c) {
                           y[r * in + c] = mask[r] ? v[0][r * in + c] : ref_elu(v[1][r * in + c]);
                         }
                       }
                       return y;
                     }});
  }

  cases.push_back({"kron_rows",
                   {random_tensor({rows, 2}, rng), random_tensor({rows, out}, rng)},
                   [](Graph&, const std::vector<Var>& v) { return nn::kron_rows(v[0], v[1]); },
                   [=](const std::vector<DVec>& v) {
                     DVec y(rows * 2 * out);
                     for (std::size_t r = 0; r < rows; ++r) {
                       for (std::size_t i = 0; i < 2; ++i) {
                         for (std::size_t j = 0; j < out; ++j) {
                           y[r * 2 * out + i * out + j] = v[0][r * 2 + i] * v[1][r * out + j];
                         }
                       }
                     }
                     return y;
                   }});

  {
    const std::size_t experts = 2 + rng.below(3);
    cases.push_back({"moe_combine",
                     {random_tensor({rows, experts * out}, rng), random_tensor({rows, experts}, rng)},
                     [=](Graph&, const std::vector<Var>& v) { return nn::moe_combine(v[0], v[1], experts); },
                     [=](const std::vector<DVec>& v) {
                       DVec y(rows * out, 0.0);
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t e = 0; e < experts; ++e) {
                           for (std::size_t o = 0; o < out; ++o) {
                             y[r * out + o] += v[1][r * experts + e] * v[0][r * experts * out + e * out + o];
                           }
                         }
                       }
                       return y;
                     }});
  }

  {
    const std::size_t batch = 1 + rng.below(2);
    const std::size_t time = 4 + rng.below(4);
    const std::size_t taps = 1 + rng.below(3);
    cases.push_back({"causal_conv1d",
                     {random_tensor({batch, time, in}, rng), random_tensor({taps, in, out}, rng)},
                     [](Graph&, const std::vector<Var>& v) { return nn::causal_conv1d(v[0], v[1]); },
                     [=](const std::vector<DVec>& v) { return ref_causal_conv(v[0], v[1], batch, time, in, taps, out); }});
    const std::size_t wide = taps + 2;
    cases.push_back({"causal_conv1d_replicate",
                     {random_tensor({batch, time, in}, rng), random_tensor({wide, in, out}, rng)},
                     [](Graph&, const std::vector<Var>& v) {
                       return nn::causal_conv1d(v[0], v[1], nn::Padding::replicate);
                     },
                     [=](const std::vector<DVec>& v) {
                       return ref_causal_conv(v[0], v[1], batch, time, in, wide, out, true);
                     }});
  }

  {
    const std::size_t batch = 1 + rng.below(2);
    const std::size_t time = 3 + rng.below(5);
    cases.push_back({"window_instance_norm",
                     {random_tensor({batch, time, in}, rng)},
                     [](Graph&, const std::vector<Var>& v) { return nn::window_instance_norm(v[0], 0.05f); },
                     [=](const std::vector<DVec>& v) { return ref_window_norm(v[0], batch, time, in, 0.05); }});
    cases.push_back({"window_instance_norm_floored",
                     {random_tensor({batch, time, in}, rng)},
                     [](Graph&, const std::vector<Var>& v) { return nn::window_instance_norm(v[0], 3.0f); },
                     [=](const std::vector<DVec>& v) { return ref_window_norm(v[0], batch, time, in, 3.0); }});
  }

  {
    const std::uint64_t seed = rng.next();
    Graph probe(nn::GradMode::disabled);
    Rng mask_rng(seed);
    const Tensor mask = nn::dropout(probe.constant(Tensor({rows, in}, 1.0f)), 0.4f, true, mask_rng).value();
    cases.push_back({"dropout",
                     {random_tensor({rows, in}, rng)},
                     [=](Graph&, const std::vector<Var>& v) {
                       Rng r(seed);
                       return nn::dropout(v[0], 0.4f, true, r);
                     },
                     [=](const std::vector<DVec>& v) {
                       DVec y(v[0].size());
                       for (std::size_t i = 0; i < y.size(); ++i) {
                         y[i] = v[0][i] * mask[i];
                       }
                       return y;
                     }});
  }

  cases.push_back({"mse_mean",
                   {random_tensor({rows, in}, rng), random_tensor({rows, in}, rng)},
                   [](Graph&, const std::vector<Var>& v) {
                     return nn::add(nn::mse(v[0], v[1]), nn::mean(nn::elu(v[0])));
                   },
                   [](const std::vector<DVec>& v) {
                     double acc = 0.0;
                     double m = 0.0;
                     for (std::size_t i = 0; i < v[0].size(); ++i) {
                       acc += (v[0][i] - v[1][i]) * (v[0][i] - v[1][i]);
                       m += ref_elu(v[0][i]);
                     }
                     const auto n = static_cast<double>(v[0].size());
                     return DVec{acc / n + m / n};
                   }});

  return cases;
}

}  // namespace mstyle::testing
