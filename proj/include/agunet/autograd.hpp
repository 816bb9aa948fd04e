#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "agunet/tensor.hpp"

namespace agunet {

/// One vertex of the reverse-mode graph. Children own their parents, so a
/// graph is released as soon as the last handle to its output goes away.
template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor<Scalar>& grad_ref() {
    if (grad.shape() != value.shape()) grad = Tensor<Scalar>::Zero(value.shape());
    return grad;
  }
};

/// Handle to a value participating in automatic differentiation.
template <typename Scalar>
class Var {
 public:
  using NodePtr = std::shared_ptr<Node<Scalar>>;

  Var() = default;
  explicit Var(Tensor<Scalar> value, bool requires_grad = false) : node_(std::make_shared<Node<Scalar>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<Scalar>& value() const { return node_->value; }
  /// In-place access for parameters, buffers and optimiser updates.
  Tensor<Scalar>& mutable_value() const { return node_->value; }
  const Tensor<Scalar>& grad() const { return node_->grad_ref(); }
  Tensor<Scalar>& mutable_grad() const { return node_->grad_ref(); }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const NodePtr& node() const { return node_; }

  void zero_grad() const {
    if (node_->grad.size() > 0) node_->grad.set_zero();
  }

  /// Back-propagates from a single-element output, accumulating into the
  /// gradients of every reachable leaf that requires them.
  void backward() const {
    if (value().size() != 1) throw UsageError("backward() needs a scalar output, got " + shape().str());
    if (!requires_grad()) return;
    std::vector<Node<Scalar>*> order;
    std::unordered_set<Node<Scalar>*> seen;
    std::vector<std::pair<Node<Scalar>*, bool>> stack{{node_.get(), false}};
    while (!stack.empty()) {
      auto [node, expanded] = stack.back();
      stack.pop_back();
      if (expanded) {
        order.push_back(node);
        continue;
      }
      if (!seen.insert(node).second) continue;
      stack.emplace_back(node, true);
      for (const auto& parent : node->parents) {
        if (parent->requires_grad && !seen.count(parent.get())) stack.emplace_back(parent.get(), false);
      }
    }
    node_->grad_ref().flat().array() += Scalar(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<Scalar>* node = *it;
      if (node->backward_fn && node->grad.size() == node->value.size()) node->backward_fn(*node);
    }
  }

 private:
  NodePtr node_;
};

/// Per-thread switch for graph recording; disabled inside NoGradGuard.
inline bool& grad_mode_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

/// Disables graph construction for the guard's lifetime (inference).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(grad_mode_enabled()) { grad_mode_enabled() = false; }
  ~NoGradGuard() { grad_mode_enabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds an interior node. The backward closure is dropped when no parent
/// requires a gradient, which keeps inference graph-free.
template <typename Scalar>
Var<Scalar> make_result(Tensor<Scalar> value, std::vector<Var<Scalar>> parents,
                        std::function<void(Node<Scalar>&)> backward_fn) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  if (grad_mode_enabled()) {
    for (const auto& p : parents) node->requires_grad = node->requires_grad || p.requires_grad();
  }
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Var<Scalar>(std::move(node));
}

}  // namespace agunet
