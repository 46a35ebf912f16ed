#include "mstyle/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mstyle::nn {
namespace {

Graph& same_graph(const Var& a, const Var& b) {
  Graph& g = a.graph();
  if (&b.graph() != &g) {
    throw StateError("operands belong to different graphs");
  }
  return g;
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

struct Sequence {
  std::size_t batch;
  std::size_t time;
  std::size_t channels;
};

Sequence sequence_dims(const Shape& shape, const char* op) {
  if (shape.size() == 2) {
    return {1, shape[0], shape[1]};
  }
  if (shape.size() == 3) {
    return {shape[0], shape[1], shape[2]};
  }
  throw DimensionError(std::string(op) + ": expected [T x C] or [B x T x C], got " + shape_string(shape));
}

Shape with_last(Shape shape, std::size_t last) {
  if (shape.empty()) {
    shape.push_back(last);
  } else {
    shape.back() = last;
  }
  return shape;
}

}  // namespace

Var matmul_nt(Var x, Var w) {
  Graph& g = same_graph(x, w);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (wv.rank() < 2 || xv.cols() != wv.cols()) {
    throw DimensionError("matmul: input " + shape_string(xv.shape()) + " does not conform to weight " +
                         shape_string(wv.shape()));
  }
  Tensor out(with_last(xv.shape(), wv.rows()));
  out.matrix().noalias() = xv.matrix() * wv.matrix().transpose();
  return g.record(std::move(out), {x, w}, [](Graph& graph, int self) {
    const int xi = graph.input(self, 0);
    const int wi = graph.input(self, 1);
    const auto dy = graph.upstream(self).matrix();
    if (graph.requires_grad(xi)) {
      graph.grad_buffer(xi).matrix().noalias() += dy * graph.value(wi).matrix();
    }
    if (graph.requires_grad(wi)) {
      graph.grad_buffer(wi).matrix().noalias() += dy.transpose() * graph.value(xi).matrix();
    }
  });
}

Var add_bias(Var x, Var b) {
  Graph& g = same_graph(x, b);
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  if (bv.size() != xv.cols()) {
    throw DimensionError("bias " + shape_string(bv.shape()) + " does not match input " +
                         shape_string(xv.shape()));
  }
  Tensor out = xv;
  const Eigen::Map<const Eigen::RowVectorXf> bias(bv.data().data(), static_cast<Eigen::Index>(bv.size()));
  out.matrix().rowwise() += bias;
  return g.record(std::move(out), {x, b}, [](Graph& graph, int self) {
    const int xi = graph.input(self, 0);
    const int bi = graph.input(self, 1);
    const auto dy = graph.upstream(self).matrix();
    if (graph.requires_grad(xi)) {
      graph.grad_buffer(xi).matrix() += dy;
    }
    if (graph.requires_grad(bi)) {
      Tensor& db = graph.grad_buffer(bi);
      Eigen::Map<Eigen::RowVectorXf> dbias(db.data().data(), static_cast<Eigen::Index>(db.size()));
      dbias += dy.colwise().sum();
    }
  });
}

Var elu(Var x) {
  Graph& g = x.graph();
  Tensor out = x.value();
  for (float& v : out.data()) {
    v = v > 0.0f ? v : std::expm1(v);
  }
  return g.record(std::move(out), {x}, [](Graph& graph, int self) {
    const int xi = graph.input(self, 0);
    const Tensor& y = graph.value(self);
    const Tensor& xv = graph.value(xi);
    const Tensor& dy = graph.upstream(self);
    Tensor& dx = graph.grad_buffer(xi);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      dx[i] += dy[i] * (xv[i] > 0.0f ? 1.0f : y[i] + 1.0f);
    }
  });
}

Var activate(Var x, Activation act) { return act == Activation::elu ? elu(x) : x; }

Var dense(Var x, Var w, Var b, Activation act) { return activate(add_bias(matmul_nt(x, w), b), act); }

Var add(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  out.matrix() += b.value().matrix();
  return g.record(std::move(out), {a, b}, [](Graph& graph, int self) {
    for (std::size_t k = 0; k < 2; ++k) {
      const int in = graph.input(self, k);
      if (graph.requires_grad(in)) {
        graph.grad_buffer(in).matrix() += graph.upstream(self).matrix();
      }
    }
  });
}

Var sub(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  out.matrix() -= b.value().matrix();
  return g.record(std::move(out), {a, b}, [](Graph& graph, int self) {
    const int ai = graph.input(self, 0);
    const int bi = graph.input(self, 1);
    if (graph.requires_grad(ai)) {
      graph.grad_buffer(ai).matrix() += graph.upstream(self).matrix();
    }
    if (graph.requires_grad(bi)) {
      graph.grad_buffer(bi).matrix() -= graph.upstream(self).matrix();
    }
  });
}

Var mul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  out.matrix().array() *= b.value().matrix().array();
  return g.record(std::move(out), {a, b}, [](Graph& graph, int self) {
    const int ai = graph.input(self, 0);
    const int bi = graph.input(self, 1);
    const auto dy = graph.upstream(self).matrix().array();
    if (graph.requires_grad(ai)) {
      graph.grad_buffer(ai).matrix().array() += dy * graph.value(bi).matrix().array();
    }
    if (graph.requires_grad(bi)) {
      graph.grad_buffer(bi).matrix().array() += dy * graph.value(ai).matrix().array();
    }
  });
}

Var scale(Var a, float factor) {
  Graph& g = a.graph();
  Tensor out = a.value();
  out.matrix() *= factor;
  return g.record(std::move(out), {a}, [factor](Graph& graph, int self) {
    graph.grad_buffer(graph.input(self, 0)).matrix() += factor * graph.upstream(self).matrix();
  });
}

Var affine_columns(Var x, std::span<const float> col_scale, std::span<const float> col_shift) {
  Graph& g = x.graph();
  const Tensor& xv = x.value();
  if (col_scale.size() != xv.cols() || col_shift.size() != xv.cols()) {
    throw DimensionError("affine_columns: " + std::to_string(col_scale.size()) + " factors for input " +
                         shape_string(xv.shape()));
  }
  const Eigen::Map<const Eigen::RowVectorXf> s(col_scale.data(), static_cast<Eigen::Index>(col_scale.size()));
  const Eigen::Map<const Eigen::RowVectorXf> t(col_shift.data(), static_cast<Eigen::Index>(col_shift.size()));
  Tensor out = xv;
  out.matrix().array().rowwise() *= s.array();
  out.matrix().rowwise() += t;
  Eigen::RowVectorXf factors = s;
  return g.record(std::move(out), {x}, [factors](Graph& graph, int self) {
    auto dx = graph.grad_buffer(graph.input(self, 0)).matrix();
    dx.array() += graph.upstream(self).matrix().array().rowwise() * factors.array();
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) {
    throw DimensionError("concat_cols: no inputs");
  }
  Graph& g = parts.front().graph();
  const std::size_t rows = parts.front().value().rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    same_graph(parts.front(), p);
    if (p.value().rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_string(parts.front().shape()) + " vs " +
                           shape_string(p.shape()));
    }
    total += p.value().cols();
  }
  Tensor out(with_last(parts.front().shape(), total));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const auto c = static_cast<Eigen::Index>(p.value().cols());
    out.matrix().middleCols(static_cast<Eigen::Index>(offset), c) = p.value().matrix();
    offsets.push_back(offset);
    offset += p.value().cols();
  }
  return g.record(std::move(out), parts, [offsets](Graph& graph, int self) {
    const auto dy = graph.upstream(self).matrix();
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      const int in = graph.input(self, k);
      if (graph.requires_grad(in)) {
        auto dx = graph.grad_buffer(in).matrix();
        dx += dy.middleCols(static_cast<Eigen::Index>(offsets[k]), dx.cols());
      }
    }
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  Graph& g = x.graph();
  const Tensor& xv = x.value();
  if (begin + count > xv.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_string(xv.shape()));
  }
  Tensor out(with_last(xv.shape(), count));
  out.matrix() = xv.matrix().middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
  return g.record(std::move(out), {x}, [begin](Graph& graph, int self) {
    const auto dy = graph.upstream(self).matrix();
    graph.grad_buffer(graph.input(self, 0)).matrix().middleCols(static_cast<Eigen::Index>(begin), dy.cols()) +=
        dy;
  });
}

Var reshape(Var x, Shape shape) {
  Graph& g = x.graph();
  const Tensor& xv = x.value();
  if (shape_numel(shape) != xv.size()) {
    throw DimensionError("reshape: " + shape_string(xv.shape()) + " to " + shape_string(shape));
  }
  return g.record(xv.reshaped(std::move(shape)), {x}, [](Graph& graph, int self) {
    const auto dy = graph.upstream(self).data();
    auto dx = graph.grad_buffer(graph.input(self, 0)).data();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      dx[i] += dy[i];
    }
  });
}

Var stack_time(const std::vector<Var>& frames) {
  if (frames.empty()) {
    throw DimensionError("stack_time: no frames");
  }
  Graph& g = frames.front().graph();
  const Shape& first = frames.front().shape();
  const std::size_t batch = frames.front().value().rows();
  const std::size_t channels = frames.front().value().cols();
  for (const Var& f : frames) {
    same_graph(frames.front(), f);
    if (f.shape() != first) {
      throw DimensionError("stack_time: frame shape " + shape_string(f.shape()) + " differs from " +
                           shape_string(first));
    }
  }
  const std::size_t steps = frames.size();
  Shape shape = first.size() <= 1 ? Shape{steps, channels} : Shape{batch, steps, channels};
  Tensor out(shape);
  for (std::size_t t = 0; t < steps; ++t) {
    const Tensor& f = frames[t].value();
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(f.data().begin() + static_cast<std::ptrdiff_t>(b * channels), channels,
                  out.data().begin() + static_cast<std::ptrdiff_t>((b * steps + t) * channels));
    }
  }
  return g.record(std::move(out), frames, [steps, batch, channels](Graph& graph, int self) {
    const Tensor& dy = graph.upstream(self);
    for (std::size_t t = 0; t < steps; ++t) {
      const int in = graph.input(self, t);
      if (!graph.requires_grad(in)) {
        continue;
      }
      Tensor& dx = graph.grad_buffer(in);
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t src = (b * steps + t) * channels;
        for (std::size_t c = 0; c < channels; ++c) {
          dx[b * channels + c] += dy[src + c];
        }
      }
    }
  });
}

Var last_step(Var x) {
  Graph& g = x.graph();
  const Sequence seq = sequence_dims(x.shape(), "last_step");
  Shape shape = x.shape().size() == 2 ? Shape{seq.channels} : Shape{seq.batch, seq.channels};
  Tensor out(shape);
  const Tensor& xv = x.value();
  for (std::size_t b = 0; b < seq.batch; ++b) {
    std::copy_n(xv.data().begin() + static_cast<std::ptrdiff_t>((b * seq.time + seq.time - 1) * seq.channels),
                seq.channels, out.data().begin() + static_cast<std::ptrdiff_t>(b * seq.channels));
  }
  return g.record(std::move(out), {x}, [seq](Graph& graph, int self) {
    const Tensor& dy = graph.upstream(self);
    Tensor& dx = graph.grad_buffer(graph.input(self, 0));
    for (std::size_t b = 0; b < seq.batch; ++b) {
      const std::size_t dst = (b * seq.time + seq.time - 1) * seq.channels;
      for (std::size_t c = 0; c < seq.channels; ++c) {
        dx[dst + c] += dy[b * seq.channels + c];
      }
    }
  });
}

Var where_rows(const std::vector<bool>& take_a, Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same_shape(a, b, "where_rows");
  const std::size_t rows = a.value().rows();
  if (take_a.size() != rows) {
    throw DimensionError("where_rows: mask of " + std::to_string(take_a.size()) + " rows for input " +
                         shape_string(a.shape()));
  }
  Tensor out = b.value();
  for (std::size_t r = 0; r < rows; ++r) {
    if (take_a[r]) {
      out.matrix().row(static_cast<Eigen::Index>(r)) = a.value().matrix().row(static_cast<Eigen::Index>(r));
    }
  }
  return g.record(std::move(out), {a, b}, [take_a](Graph& graph, int self) {
    const auto dy = graph.upstream(self).matrix();
    for (std::size_t k = 0; k < 2; ++k) {
      const int in = graph.input(self, k);
      if (!graph.requires_grad(in)) {
        continue;
      }
      auto dx = graph.grad_buffer(in).matrix();
      for (std::size_t r = 0; r < take_a.size(); ++r) {
        if (take_a[r] == (k == 0)) {
          dx.row(static_cast<Eigen::Index>(r)) += dy.row(static_cast<Eigen::Index>(r));
        }
      }
    }
  });
}

Var softmax_groups(Var x, std::size_t group) {
  const Tensor& xv = x.value();
  if (group == 0 || xv.cols() % group != 0) {
    throw DimensionError("softmax_groups: group " + std::to_string(group) + " does not divide " +
                         shape_string(xv.shape()));
  }
  const std::size_t blocks = xv.size() / group;
  Tensor out(xv.shape());
  for (std::size_t k = 0; k < blocks; ++k) {
    const float* src = xv.data().data() + k * group;
    float* dst = out.data().data() + k * group;
    const float top = *std::max_element(src, src + group);
    double total = 0.0;
    for (std::size_t i = 0; i < group; ++i) {
      dst[i] = std::exp(src[i] - top);
      total += dst[i];
    }
    for (std::size_t i = 0; i < group; ++i) {
      dst[i] = static_cast<float>(dst[i] / total);
    }
  }
  return x.graph().record(std::move(out), {x}, [blocks, group](Graph& graph, int self) {
    const Tensor& y = graph.value(self);
    const Tensor& dy = graph.upstream(self);
    Tensor& dx = graph.grad_buffer(graph.input(self, 0));
    for (std::size_t k = 0; k < blocks; ++k) {
      const std::size_t o = k * group;
      double dot = 0.0;
      for (std::size_t i = 0; i < group; ++i) {
        dot += static_cast<double>(dy[o + i]) * y[o + i];
      }
      for (std::size_t i = 0; i < group; ++i) {
        dx[o + i] += static_cast<float>(y[o + i] * (dy[o + i] - dot));
      }
    }
  });
}

Var kron_rows(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows() != bv.rows()) {
    throw DimensionError("kron_rows: row mismatch " + shape_string(av.shape()) + " vs " +
                         shape_string(bv.shape()));
  }
  const std::size_t rows = av.rows();
  const std::size_t m = av.cols();
  const std::size_t n = bv.cols();
  Tensor out(with_last(bv.shape(), m * n));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        out[r * m * n + i * n + j] = av[r * m + i] * bv[r * n + j];
      }
    }
  }
  return g.record(std::move(out), {a, b}, [rows, m, n](Graph& graph, int self) {
    const int ai = graph.input(self, 0);
    const int bi = graph.input(self, 1);
    const Tensor& dy = graph.upstream(self);
    const Tensor& av = graph.value(ai);
    const Tensor& bv = graph.value(bi);
    if (graph.requires_grad(ai)) {
      Tensor& da = graph.grad_buffer(ai);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < m; ++i) {
          float acc = 0.0f;
          for (std::size_t j = 0; j < n; ++j) {
            acc += dy[r * m * n + i * n + j] * bv[r * n + j];
          }
          da[r * m + i] += acc;
        }
      }
    }
    if (graph.requires_grad(bi)) {
      Tensor& db = graph.grad_buffer(bi);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            db[r * n + j] += dy[r * m * n + i * n + j] * av[r * m + i];
          }
        }
      }
    }
  });
}

Var moe_combine(Var h, Var alpha, std::size_t experts) {
  Graph& g = same_graph(h, alpha);
  const Tensor& hv = h.value();
  const Tensor& av = alpha.value();
  if (experts == 0 || hv.cols() % experts != 0 || av.cols() != experts || av.rows() != hv.rows()) {
    throw DimensionError("moe_combine: expert outputs " + shape_string(hv.shape()) + " vs coefficients " +
                         shape_string(av.shape()) + " for " + std::to_string(experts) + " experts");
  }
  const std::size_t rows = hv.rows();
  const std::size_t width = hv.cols() / experts;
  Tensor out(with_last(hv.shape(), width));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t e = 0; e < experts; ++e) {
      const float a = av[r * experts + e];
      const float* src = hv.data().data() + r * hv.cols() + e * width;
      float* dst = out.data().data() + r * width;
      for (std::size_t o = 0; o < width; ++o) {
        dst[o] += a * src[o];
      }
    }
  }
  return g.record(std::move(out), {h, alpha}, [rows, width, experts](Graph& graph, int self) {
    const int hi = graph.input(self, 0);
    const int ai = graph.input(self, 1);
    const Tensor& dy = graph.upstream(self);
    const Tensor& hv = graph.value(hi);
    const Tensor& av = graph.value(ai);
    if (graph.requires_grad(hi)) {
      Tensor& dh = graph.grad_buffer(hi);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t e = 0; e < experts; ++e) {
          const float a = av[r * experts + e];
          float* dst = dh.data().data() + r * experts * width + e * width;
          const float* g = dy.data().data() + r * width;
          for (std::size_t o = 0; o < width; ++o) {
            dst[o] += a * g[o];
          }
        }
      }
    }
    if (graph.requires_grad(ai)) {
      Tensor& da = graph.grad_buffer(ai);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t e = 0; e < experts; ++e) {
          const float* src = hv.data().data() + r * experts * width + e * width;
          const float* g = dy.data().data() + r * width;
          float acc = 0.0f;
          for (std::size_t o = 0; o < width; ++o) {
            acc += src[o] * g[o];
          }
          da[r * experts + e] += acc;
        }
      }
    }
  });
}

namespace {

// Unrolls x [B x T x Cin] into [B*T x W*Cin] where block k holds x at t - k.
RowMatrix unroll_causal(const Tensor& x, const Sequence& seq, std::size_t taps, Padding padding) {
  RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(seq.batch * seq.time),
                                   static_cast<Eigen::Index>(taps * seq.channels));
  const float* src = x.data().data();
  for (std::size_t b = 0; b < seq.batch; ++b) {
    for (std::size_t t = 0; t < seq.time; ++t) {
      float* row = cols.data() + (b * seq.time + t) * taps * seq.channels;
      const std::size_t reach = padding == Padding::replicate ? taps : std::min(taps, t + 1);
      for (std::size_t k = 0; k < reach; ++k) {
        const std::size_t u = k <= t ? t - k : 0;
        std::copy_n(src + (b * seq.time + u) * seq.channels, seq.channels, row + k * seq.channels);
      }
    }
  }
  return cols;
}

}  // namespace

Var causal_conv1d(Var x, Var kernel, Padding padding) {
  Graph& g = same_graph(x, kernel);
  const Sequence seq = sequence_dims(x.shape(), "causal_conv1d");
  const Tensor& kv = kernel.value();
  if (kv.rank() != 3 || kv.dim(1) != seq.channels) {
    throw DimensionError("causal_conv1d: kernel " + shape_string(kv.shape()) + " does not match input " +
                         shape_string(x.shape()));
  }
  const std::size_t taps = kv.dim(0);
  const std::size_t out_channels = kv.dim(2);
  const ConstMatrixMap kmat(kv.data().data(), static_cast<Eigen::Index>(taps * seq.channels),
                            static_cast<Eigen::Index>(out_channels));
  Tensor out(with_last(x.shape(), out_channels));
  out.matrix().noalias() = unroll_causal(x.value(), seq, taps, padding) * kmat;
  return g.record(std::move(out), {x, kernel}, [seq, taps, out_channels, padding](Graph& graph, int self) {
    const int xi = graph.input(self, 0);
    const int ki = graph.input(self, 1);
    const auto dy = graph.upstream(self).matrix();
    if (graph.requires_grad(ki)) {
      Tensor& dk = graph.grad_buffer(ki);
      MatrixMap dkmat(dk.data().data(), static_cast<Eigen::Index>(taps * seq.channels),
                      static_cast<Eigen::Index>(out_channels));
      dkmat.noalias() += unroll_causal(graph.value(xi), seq, taps, padding).transpose() * dy;
    }
    if (graph.requires_grad(xi)) {
      const Tensor& kv = graph.value(ki);
      const ConstMatrixMap kmat(kv.data().data(), static_cast<Eigen::Index>(taps * seq.channels),
                                static_cast<Eigen::Index>(out_channels));
      const RowMatrix dcols = dy * kmat.transpose();
      Tensor& dx = graph.grad_buffer(xi);
      for (std::size_t b = 0; b < seq.batch; ++b) {
        for (std::size_t t = 0; t < seq.time; ++t) {
          const float* row = dcols.data() + (b * seq.time + t) * taps * seq.channels;
          const std::size_t reach = padding == Padding::replicate ? taps : std::min(taps, t + 1);
          for (std::size_t k = 0; k < reach; ++k) {
            float* dst = dx.data().data() + (b * seq.time + (k <= t ? t - k : 0)) * seq.channels;
            for (std::size_t c = 0; c < seq.channels; ++c) {
              dst[c] += row[k * seq.channels + c];
            }
          }
        }
      }
    }
  });
}

Var window_instance_norm(Var x, float eps) {
  Graph& g = x.graph();
  const Sequence seq = sequence_dims(x.shape(), "window_instance_norm");
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  // Effective divisor per (batch, channel); negative marks the floored branch.
  std::vector<float> divisor(seq.batch * seq.channels);
  for (std::size_t b = 0; b < seq.batch; ++b) {
    for (std::size_t c = 0; c < seq.channels; ++c) {
      double mean = 0.0;
      for (std::size_t t = 0; t < seq.time; ++t) {
        mean += xv[(b * seq.time + t) * seq.channels + c];
      }
      mean /= static_cast<double>(seq.time);
      double var = 0.0;
      for (std::size_t t = 0; t < seq.time; ++t) {
        const double d = xv[(b * seq.time + t) * seq.channels + c] - mean;
        var += d * d;
      }
      const double sigma = seq.time > 1 ? std::sqrt(var / static_cast<double>(seq.time - 1)) : 0.0;
      const bool floored = !(sigma > static_cast<double>(eps));
      const double denom = floored ? static_cast<double>(eps) : sigma;
      divisor[b * seq.channels + c] = static_cast<float>(floored ? -denom : denom);
      for (std::size_t t = 0; t < seq.time; ++t) {
        const std::size_t i = (b * seq.time + t) * seq.channels + c;
        out[i] = static_cast<float>((xv[i] - mean) / denom);
      }
    }
  }
  return g.record(std::move(out), {x}, [seq, divisor = std::move(divisor)](Graph& graph, int self) {
    const Tensor& y = graph.value(self);
    const Tensor& dy = graph.upstream(self);
    Tensor& dx = graph.grad_buffer(graph.input(self, 0));
    const double n = static_cast<double>(seq.time);
    for (std::size_t b = 0; b < seq.batch; ++b) {
      for (std::size_t c = 0; c < seq.channels; ++c) {
        const float d = divisor[b * seq.channels + c];
        const double denom = std::abs(d);
        double mean_g = 0.0;
        double dot = 0.0;
        for (std::size_t t = 0; t < seq.time; ++t) {
          const std::size_t i = (b * seq.time + t) * seq.channels + c;
          mean_g += dy[i];
          dot += static_cast<double>(dy[i]) * y[i];
        }
        mean_g /= n;
        const double coupling = d < 0.0f ? 0.0 : dot / ((n - 1.0) * denom);
        for (std::size_t t = 0; t < seq.time; ++t) {
          const std::size_t i = (b * seq.time + t) * seq.channels + c;
          dx[i] += static_cast<float>((dy[i] - mean_g) / denom - y[i] * coupling);
        }
      }
    }
  });
}

Var dropout(Var x, float rate, bool training, Rng& rng) {
  if (!(rate >= 0.0f && rate < 1.0f)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0f) {
    return x;
  }
  Graph& g = x.graph();
  const float keep_scale = 1.0f / (1.0f - rate);
  Tensor mask(x.shape());
  for (float& m : mask.data()) {
    m = rng.uniform() < static_cast<double>(rate) ? 0.0f : keep_scale;
  }
  Tensor out = x.value();
  out.matrix().array() *= mask.matrix().array();
  return g.record(std::move(out), {x}, [mask = std::move(mask)](Graph& graph, int self) {
    graph.grad_buffer(graph.input(self, 0)).matrix().array() +=
        graph.upstream(self).matrix().array() * mask.matrix().array();
  });
}

Var sum(Var x) {
  Graph& g = x.graph();
  Tensor out({1});
  out[0] = x.value().matrix().sum();
  return g.record(std::move(out), {x}, [](Graph& graph, int self) {
    graph.grad_buffer(graph.input(self, 0)).matrix().array() += graph.upstream(self)[0];
  });
}

Var mean(Var x) {
  const auto n = static_cast<float>(x.value().size());
  return scale(sum(x), 1.0f / n);
}

Var mse(Var prediction, Var target) {
  Graph& g = same_graph(prediction, target);
  require_same_shape(prediction, target, "mse");
  const auto n = static_cast<double>(prediction.value().size());
  Tensor out({1});
  double acc = 0.0;
  const Tensor& p = prediction.value();
  const Tensor& t = target.value();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - t[i];
    acc += d * d;
  }
  out[0] = static_cast<float>(acc / n);
  return g.record(std::move(out), {prediction, target}, [n](Graph& graph, int self) {
    const int pi = graph.input(self, 0);
    const int ti = graph.input(self, 1);
    const float gscale = static_cast<float>(2.0 / n) * graph.upstream(self)[0];
    const auto diff = (graph.value(pi).matrix() - graph.value(ti).matrix()).eval();
    if (graph.requires_grad(pi)) {
      graph.grad_buffer(pi).matrix() += gscale * diff;
    }
    if (graph.requires_grad(ti)) {
      graph.grad_buffer(ti).matrix() -= gscale * diff;
    }
  });
}

}  // namespace mstyle::nn
