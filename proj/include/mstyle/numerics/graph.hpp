#pragma once

#include "mstyle/numerics/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mstyle::nn {

/// Trainable tensor with its gradient and Adam moment buffers.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor init);

  std::string name;
  Tensor value;
  Tensor grad;
  Tensor first_moment;
  Tensor second_moment;

  void zero_grad() { grad.fill(0.0f); }
};

class Graph;

/// Handle to a node recorded on a Graph.
class Var {
 public:
  Var() = default;

  bool valid() const { return graph_ != nullptr && id_ >= 0; }
  Graph& graph() const;
  int id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Graph;
  Var(Graph* graph, int id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  int id_ = -1;
};

enum class GradMode { enabled, disabled };

/// Dynamic computation trace for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so reverse insertion order is a
/// valid topological order for the backward sweep. With GradMode::disabled
/// nothing beyond the forward values is kept.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int)>;

  explicit Graph(GradMode mode = GradMode::enabled) : mode_(mode) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var parameter(Parameter& param);

  /// Accumulates d(loss)/d(value) into every reachable Parameter::grad.
  void backward(Var loss);

  void clear();
  std::size_t size() const { return nodes_.size(); }
  GradMode mode() const { return mode_; }

  const Tensor& value(int id) const {
    const Node& node = nodes_.at(static_cast<std::size_t>(id));
    return node.param != nullptr ? node.param->value : node.value;
  }
  /// Gradient of the last backward sweep with respect to a node (empty if unreached).
  const Tensor& grad(Var v) const;

  // Op-construction interface.
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  bool requires_grad(const Var& v) const { return requires_grad(v.id()); }
  /// Gradient buffer of a node, allocated on first access.
  Tensor& grad_buffer(int id);
  const Tensor& upstream(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  int input(int id, std::size_t k) const { return nodes_[static_cast<std::size_t>(id)].inputs[k]; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  void check_owned(const Var& v, const char* what) const;

  GradMode mode_;
  std::vector<Node> nodes_;
};

}  // namespace mstyle::nn
