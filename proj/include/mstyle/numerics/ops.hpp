#pragma once

#include "mstyle/numerics/graph.hpp"
#include "mstyle/numerics/rng.hpp"

#include <span>
#include <vector>

namespace mstyle::nn {

enum class Activation { identity, elu };

// Matrix ops. A tensor of shape [..., n] is viewed as rows x n.

/// x [rows x in], w [out x in] -> x * w^T with shape [..., out].
Var matmul_nt(Var x, Var w);
/// Adds a bias of `x.cols()` elements to every row.
Var add_bias(Var x, Var b);
Var elu(Var x);
Var activate(Var x, Activation act);
/// y = act(w x + b) for every row of x.
Var dense(Var x, Var w, Var b, Activation act);

// Elementwise ops on equally shaped tensors.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, float factor);
/// y[:, c] = x[:, c] * col_scale[c] + col_shift[c] with constant per-column factors.
Var affine_columns(Var x, std::span<const float> col_scale, std::span<const float> col_shift);

// Layout ops.
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
/// Same elements under a new shape.
Var reshape(Var x, Shape shape);
/// Stacks T tensors of shape [B x C] into [B x T x C].
Var stack_time(const std::vector<Var>& frames);
/// [B x T x C] -> [B x C] at the final time index.
Var last_step(Var x);
/// Row r comes from `a` where take_a[r], else from `b`.
Var where_rows(const std::vector<bool>& take_a, Var a, Var b);
/// Row-wise Kronecker product: [B x m] (x) [B x n] -> [B x m*n].
Var kron_rows(Var a, Var b);

/// Softmax over consecutive groups of `group` columns in every row.
Var softmax_groups(Var x, std::size_t group);

/// Blends expert outputs: h [B x N*out] with expert n in columns [n*out, (n+1)*out),
/// alpha [B x N] -> sum_n alpha[:, n] * h_n.
Var moe_combine(Var h, Var alpha, std::size_t experts);

enum class Padding { zeros, replicate };

/// Causal temporal convolution; times before 0 read zeros or the first step.
///
/// x is [T x Cin] or [B x T x Cin]; kernel is [W x Cin x Cout] where tap k
/// multiplies the input at time t - k. Output length equals input length.
Var causal_conv1d(Var x, Var kernel, Padding padding = Padding::zeros);

/// Per-channel normalization over the time axis of [T x C] or [B x T x C].
///
/// Uses the sample standard deviation (denominator T - 1) floored at `eps`;
/// a single-step window takes the floored branch.
Var window_instance_norm(Var x, float eps);

/// Inverted dropout; identity when not training or rate == 0.
Var dropout(Var x, float rate, bool training, Rng& rng);

// Reductions to a single-element tensor.
Var sum(Var x);
Var mean(Var x);
Var mse(Var prediction, Var target);

}  // namespace mstyle::nn
