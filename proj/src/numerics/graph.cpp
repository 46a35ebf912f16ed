#include "mstyle/numerics/graph.hpp"

namespace mstyle::nn {

Parameter::Parameter(std::string param_name, Tensor init)
    : name(std::move(param_name)),
      value(std::move(init)),
      grad(value.shape()),
      first_moment(value.shape()),
      second_moment(value.shape()) {}

Graph& Var::graph() const {
  if (graph_ == nullptr) {
    throw StateError("variable is not attached to a graph");
  }
  return *graph_;
}

const Tensor& Var::value() const { return graph().value(id_); }

void Graph::check_owned(const Var& v, const char* what) const {
  if (!v.valid() || v.graph_ != this || v.id_ >= static_cast<int>(nodes_.size())) {
    throw StateError(std::string(what) + ": variable was not recorded on this graph");
  }
}

Var Graph::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::parameter(Parameter& param) {
  Node node;
  node.param = &param;
  node.requires_grad = mode_ == GradMode::enabled;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  if (mode_ == GradMode::enabled) {
    for (const Var& in : inputs) {
      check_owned(in, "record");
      node.requires_grad = node.requires_grad || requires_grad(in);
    }
    if (node.requires_grad) {
      node.inputs.reserve(inputs.size());
      for (const Var& in : inputs) {
        node.inputs.push_back(in.id());
      }
      node.backward = std::move(backward);
    }
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor& Graph::grad_buffer(int id) {
  Node& node = nodes_[static_cast<std::size_t>(id)];
  const Tensor& value = this->value(id);
  if (node.grad.size() != value.size()) {
    node.grad = Tensor(value.shape());
  }
  return node.grad;
}

const Tensor& Graph::grad(Var v) const {
  check_owned(v, "grad");
  return nodes_[static_cast<std::size_t>(v.id())].grad;
}

void Graph::backward(Var loss) {
  if (nodes_.empty()) {
    throw StateError("backward called before any forward computation was recorded");
  }
  check_owned(loss, "backward");
  if (mode_ != GradMode::enabled) {
    throw StateError("backward called on a graph recorded without gradients");
  }
  if (value(loss.id()).size() != 1) {
    throw DimensionError("backward expects a scalar loss, got shape " + shape_string(loss.shape()));
  }
  for (Node& node : nodes_) {
    node.grad = Tensor();
  }
  if (!requires_grad(loss)) {
    return;
  }
  grad_buffer(loss.id())[0] = 1.0f;
  for (int id = loss.id(); id >= 0; --id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.requires_grad || node.grad.empty()) {
      continue;
    }
    if (node.param != nullptr) {
      node.param->grad.matrix() += node.grad.matrix();
    } else if (node.backward) {
      node.backward(*this, id);
    }
  }
}

void Graph::clear() { nodes_.clear(); }

}  // namespace mstyle::nn
