#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "fainr/autodiff/tensor.hpp"

namespace fainr::ad {

template <class T>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const Tensor<T>& value() const { return tape->value(*this); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Reverse-mode recording of one forward pass. A tape is built per batch and
// discarded; it never outlives the step that created it.
template <class T>
class Tape {
 public:
  // Accumulates the node's gradient into the gradients of its inputs.
  using BackwardFn = std::function<void(Tape&, int)>;

  struct Node {
    const char* op = "";
    Tensor<T> value;
    Tensor<T> grad;
    bool needs_grad = false;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push("constant", std::move(value), false, {}); }

  // Differentiable leaf whose gradient can be read back after backward().
  Var<T> input(Tensor<T> value) { return push("input", std::move(value), true, {}); }

  // One differentiable leaf per parameter, in ParameterSet order.
  std::vector<Var<T>> bind(const ParameterSet<T>& params, bool requires_grad = true) {
    std::vector<Var<T>> vars;
    vars.reserve(params.size());
    for (const auto& e : params) vars.push_back(push("param", e.value, requires_grad, {}));
    return vars;
  }

  Var<T> push(const char* op, Tensor<T> value, bool needs_grad, BackwardFn fn) {
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_[check(v)].value; }
  bool needs_grad(Var<T> v) const { return nodes_[check(v)].needs_grad; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  const Node& node(int id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient accumulator of a node, zero-allocated on first touch.
  Tensor<T>& grad_ref(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Tensor<T>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  // Propagates d(root)/d(node) to every differentiable node. Accumulators are
  // reset first, so repeated calls give identical results.
  void backward(Var<T> root) {
    const int r = check(root);
    FAINR_REQUIRE(nodes_[r].value.size() == 1, ContractError,
                  "backward requires a scalar root, got " + shape_string(nodes_[r].value));
    for (auto& n : nodes_) n.grad.resize(0, 0);
    if (!nodes_[r].needs_grad) return;
    grad_ref(r).setOnes();
    for (int i = r; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.size() == 0 || !n.backward) continue;
      n.backward(*this, i);
    }
  }

  // Gradient of the last backward() root w.r.t. v; zeros if v is unreachable.
  Tensor<T> grad(Var<T> v) const {
    const Node& n = nodes_[check(v)];
    if (n.grad.size() == 0) return Tensor<T>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

 private:
  int check(Var<T> v) const {
    FAINR_REQUIRE(v.tape == this && v.id >= 0 && v.id < static_cast<int>(nodes_.size()),
                  ContractError, "variable does not belong to this tape");
    return v.id;
  }

  std::vector<Node> nodes_;
};

// Runs backward from a scalar root and collects gradients for the bound
// parameter leaves.
template <class T>
GradientMap<T> backward(Var<T> root, const std::vector<Var<T>>& bound) {
  root.tape->backward(root);
  GradientMap<T> grads;
  grads.reserve(bound.size());
  for (const auto& v : bound) grads.push_back(root.tape->grad(v));
  return grads;
}

}  // namespace fainr::ad
