#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "brightvae/tensor.hpp"

namespace brightvae {

/// Reverse-mode tape. Every op builds a Node whose backward closure scatters
/// the node's gradient into its parents. With gradients disabled (inference,
/// metrics) ops skip recording and the graph is never retained.

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

inline bool grad_enabled() { return grad_mode_flag(); }

struct NoGradGuard {
  NoGradGuard() : prev_(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated lazily on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor<T>& ensure_grad() {
    if (grad.numel() != value.numel()) grad = Tensor<T>::zeros(value.shape());
    return grad;
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : n_(std::move(n)) {}

  /// Leaf from a tensor value. Leaves with requires_grad become parameters.
  static Var leaf(Tensor<T> value, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }

  static Var constant(Tensor<T> value) { return leaf(std::move(value), false); }

  bool defined() const { return n_ != nullptr; }
  const Tensor<T>& value() const { return n_->value; }
  Tensor<T>& value() { return n_->value; }
  // Gradient access is shallow-const: a Var is a handle to a shared node.
  Tensor<T>& grad() const { return n_->ensure_grad(); }
  const Tensor<T>& grad_view() const { return n_->grad; }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  void zero_grad() const {
    if (n_ && n_->grad.numel() > 0) std::fill(n_->grad.data(), n_->grad.data() + n_->grad.numel(), T(0));
  }
  std::shared_ptr<Node<T>> node() const { return n_; }

  const std::vector<int64_t>& shape() const { return n_->value.shape(); }
  int64_t numel() const { return n_->value.numel(); }

 private:
  std::shared_ptr<Node<T>> n_;
};

/// Creates a non-leaf node. Parents with requires_grad propagate the flag.
template <typename T>
Var<T> make_op_node(Tensor<T> value, std::vector<Var<T>> parents,
                    std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  if (grad_enabled()) {
    bool needs = false;
    for (const auto& p : parents)
      if (p.requires_grad()) needs = true;
    if (needs) {
      n->requires_grad = true;
      for (auto& p : parents) n->parents.push_back(p.node());
      n->backward = std::move(backward);
    }
  }
  return Var<T>(std::move(n));
}

/// Runs reverse-mode accumulation from a scalar root (grad seeded with 1).
template <typename T>
void backward(const Var<T>& root) {
  if (!root.defined()) throw std::logic_error("backward: undefined variable");
  if (root.numel() != 1) throw std::logic_error("backward: root must be scalar");
  if (!root.requires_grad()) return;

  // Iterative post-order topological sort.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.push_back({root.node().get(), 0});
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<T>* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad()[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward && node->grad.numel() > 0) node->backward(*node);
  }
}

}  // namespace brightvae
