#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "kneemark/tensor.hpp"

namespace kneemark {

// Reverse-mode differentiation over a dynamically recorded graph. Each Var
// owns a node; a node produced while gradients are enabled keeps its parents
// alive together with a closure that pushes its gradient back to them.
// Nodes built under NoGradGuard keep nothing, so intermediates die with
// their Var.

template <typename Scalar>
struct Node {
  using BackwardFn = std::function<void(Node&)>;

  Tensor<Scalar> value;
  Tensor<Scalar> grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;

  // Lazily allocates grad and returns it.
  typename Tensor<Scalar>::Array& grad_data() {
    if (grad.empty()) grad = Tensor<Scalar>(value.shape());
    return grad.data();
  }
};

template <typename Scalar>
class Var {
 public:
  using NodeT = Node<Scalar>;

  Var() = default;
  explicit Var(std::shared_ptr<NodeT> node) : node_(std::move(node)) {}

  static Var constant(Tensor<Scalar> value) { return leaf(std::move(value), false); }
  static Var leaf(Tensor<Scalar> value, bool requires_grad) {
    auto node = std::make_shared<NodeT>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return Var(std::move(node));
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor<Scalar>& value() const { return node_->value; }
  Tensor<Scalar>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  const Tensor<Scalar>& grad() const { return node_->grad; }
  Tensor<Scalar>& mutable_grad() {
    node_->grad_data();
    return node_->grad;
  }
  void zero_grad() { node_->grad = Tensor<Scalar>(); }

  const std::shared_ptr<NodeT>& node() const { return node_; }

 private:
  std::shared_ptr<NodeT> node_;
};

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Wraps an op result. The closure and parents are only retained when some
// parent requires a gradient and recording is enabled.
template <typename Scalar>
Var<Scalar> make_result(Tensor<Scalar> value, std::vector<Var<Scalar>> parents,
                        typename Node<Scalar>::BackwardFn backward) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Var<Scalar>(std::move(node));
}

// Seeds d(root)/d(root) = 1 for a single-element root and propagates to every
// reachable node that requires a gradient. Leaf gradients accumulate across
// calls until zero_grad.
template <typename Scalar>
void backward(const Var<Scalar>& root);

}  // namespace kneemark
