/*
 * Copyright 2026 The tfsep Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Dense rank-4 tensor in (N, C, F, T) row-major layout with a reverse-mode
// gradient tape. A Tensor is a cheap handle onto a shared node; copying the
// handle aliases the node.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace tfsep {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t f = 0;
  std::size_t t = 0;

  constexpr std::size_t numel() const { return n * c * f * t; }
  constexpr std::size_t plane() const { return f * t; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    std::ostringstream os;
    os << '(' << n << ',' << c << ',' << f << ',' << t << ')';
    return os.str();
  }
};

inline std::size_t offset(const Shape& s, std::size_t n, std::size_t c,
                          std::size_t f, std::size_t t) {
  return ((n * s.c + c) * s.f + f) * s.t + t;
}

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

/// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode(); }

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T{0});
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<Node<T>>;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> data) : node_(std::make_shared<Node<T>>()) {
    if (data.size() != shape.numel()) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape.str());
    }
    node_->shape = shape;
    node_->data = std::move(data);
  }

  static Tensor zeros(Shape shape) { return Tensor(shape, std::vector<T>(shape.numel(), T{0})); }
  static Tensor full(Shape shape, T value) {
    return Tensor(shape, std::vector<T>(shape.numel(), value));
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return checked().shape; }
  std::size_t numel() const { return shape().numel(); }

  std::span<const T> data() const { return checked().data; }
  // Direct write access, for optimizer updates and finite differences.
  std::span<T> mutable_data() { return checked().data; }

  bool requires_grad() const { return checked().requires_grad; }
  Tensor& set_requires_grad(bool on = true) {
    checked().requires_grad = on;
    return *this;
  }

  bool has_grad() const { return defined() && node_->grad.size() == node_->data.size(); }
  std::span<const T> grad() const {
    if (!has_grad()) throw std::logic_error("tensor has no gradient");
    return node_->grad;
  }
  void zero_grad() {
    if (defined()) node_->grad.clear();
  }

  T at(std::size_t n, std::size_t c, std::size_t f, std::size_t t) const {
    return checked().data[offset(shape(), n, c, f, t)];
  }
  T item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape().str());
    return checked().data[0];
  }

  /// Same values, fresh leaf node with no tape history.
  Tensor detach() const { return Tensor(shape(), checked().data); }

  const NodePtr& node() const { return node_; }

  /// Builds an op result. The backward closure is retained only when grad mode
  /// is on and some parent participates in the tape.
  static Tensor make_result(Shape shape, std::vector<T> data,
                            std::initializer_list<Tensor> parents,
                            std::function<void(Node<T>&)> backward) {
    Tensor out(shape, std::move(data));
    if (!grad_enabled()) return out;
    bool any = false;
    for (const auto& p : parents) any = any || (p.defined() && p.requires_grad());
    if (!any) return out;
    out.node_->requires_grad = true;
    for (const auto& p : parents) {
      if (p.defined()) out.node_->parents.push_back(p.node_);
    }
    out.node_->backward = std::move(backward);
    return out;
  }

 private:
  Node<T>& checked() const {
    if (!node_) throw std::logic_error("use of undefined tensor");
    return *node_;
  }

  NodePtr node_;
};

/// Reverse-mode sweep from a scalar. Gradients accumulate into every
/// requires_grad node reachable from `loss`.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward() requires a scalar loss, got " + loss.shape().str());
  }
  if (!loss.requires_grad()) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward && node->grad.size() == node->data.size()) node->backward(*node);
  }
}

}  // namespace tfsep
