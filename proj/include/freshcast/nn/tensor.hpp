#pragma once

#include <concepts>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "freshcast/core/error.hpp"

namespace freshcast::nn {

using Shape = std::vector<std::int64_t>;

inline std::size_t numel(const Shape& s) {
  return static_cast<std::size_t>(std::accumulate(s.begin(), s.end(), std::int64_t{1}, std::multiplies<>()));
}

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

// Graph recording is per thread: inference under NoGradGuard never touches
// shared state, which is what makes eval-mode forward reentrant.
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

inline bool grad_enabled() { return grad_mode_flag(); }

class NoGradGuard {
 public:
  NoGradGuard() : previous_(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <std::floating_point T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;

  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

// Value-semantics handle to a node of the autograd graph. Copies share the node.
template <std::floating_point T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (nn::numel(shape) != values.size())
      throw ShapeError("tensor shape " + to_string(shape) + " does not match " + std::to_string(values.size()) +
                       " values");
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = nn::numel(shape);
    return from(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor full(Shape shape, T v, bool requires_grad = false) {
    const auto n = nn::numel(shape);
    return from(std::move(shape), std::vector<T>(n, v), requires_grad);
  }

  static Tensor scalar(T v) { return from({}, {v}); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::int64_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  // Direct write access. Only meant for leaves (initialization, optimizer steps).
  std::span<T> mutable_data() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }

  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool r) { node_->requires_grad = r; }

  T item() const {
    if (node_->value.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return node_->value[0];
  }

  void zero_grad() { node_->grad.clear(); }

  // Leaf copy with no history.
  Tensor detach() const { return from(shape(), node_->value, false); }

  void backward() const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

// Builds an op result. History is only recorded when grad mode is on and some
// input needs gradients.
template <std::floating_point T>
Tensor<T> make_result(Shape shape, std::vector<T> values, std::initializer_list<Tensor<T>> inputs,
                      std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const auto& in : inputs) node->parents.push_back(in.node_ptr());
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor<T>(std::move(node));
}

template <std::floating_point T>
Tensor<T> make_result(Shape shape, std::vector<T> values, const std::vector<Tensor<T>>& inputs,
                      std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const auto& in : inputs) node->parents.push_back(in.node_ptr());
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor<T>(std::move(node));
}

}  // namespace detail

template <std::floating_point T>
void Tensor<T>::backward() const {
  if (node_->value.size() != 1) throw ShapeError("backward() needs a scalar, got " + to_string(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order DFS for a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p->requires_grad && !seen.contains(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->ensure_grad();
  node_->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
  }
}

}  // namespace freshcast::nn
