// Copyright 2026 The evonas Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "evonas/tensor.hpp"

namespace evonas {

/// A trainable tensor with its accumulated gradient.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() {
    if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    grad.fill(T(0));
  }
};

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(*this); }
  const Shape& shape() const { return tape->value(*this).shape(); }
  bool requires_grad() const { return tape->requires_grad(*this); }
};

/// Reverse-mode gradient tape. Single-threaded; one tape per training step.
///
/// Nodes are appended in evaluation order, so a reverse sweep visits every
/// consumer before its producers.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  void set_grad_enabled(bool on) { grad_enabled_ = on; }

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  Var<T> constant(Tensor<T> v) { return push(std::move(v), false, nullptr); }
  Var<T> leaf(Tensor<T> v, bool requires_grad = true) {
    return push(std::move(v), requires_grad && grad_enabled_, nullptr);
  }

  /// Records a parameter; backward() adds its gradient into p.grad.
  Var<T> parameter(Parameter<T>& p) {
    return push(p.value, grad_enabled_, &p);
  }

  /// Records the result of an op. `backward` is only kept when some input
  /// requires a gradient.
  Var<T> record(Tensor<T> v, bool requires_grad, BackwardFn backward) {
    const bool rg = requires_grad && grad_enabled_;
    Var<T> out = push(std::move(v), rg, nullptr);
    if (rg) nodes_[out.id].backward = std::move(backward);
    return out;
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_[v.id].value; }
  bool requires_grad(Var<T> v) const { return nodes_[v.id].requires_grad; }

  /// Gradient buffer of `v`, allocated (zeroed) on first access.
  Tensor<T>& grad(Var<T> v) {
    Node& n = nodes_[v.id];
    if (n.grad.shape() != n.value.shape()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }
  bool has_grad(Var<T> v) const {
    const Node& n = nodes_[v.id];
    return n.grad.shape() == n.value.shape() && !n.grad.empty();
  }

  /// Seeds d(root)/d(root) = 1 for every element of `root` and sweeps.
  void backward(Var<T> root) {
    if (!nodes_[root.id].requires_grad) return;
    grad(root).fill(T(1));
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !has_grad(Var<T>{this, i})) continue;
      if (n.backward) n.backward(*this);
      if (n.sink != nullptr) {
        Tensor<T>& g = n.sink->grad;
        if (g.shape() != n.value.shape()) g = Tensor<T>(n.value.shape());
        const Tensor<T>& src = n.grad;
        for (std::int64_t k = 0; k < src.numel(); ++k) g[k] += src[k];
      }
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackwardFn backward;
    Parameter<T>* sink = nullptr;
    bool requires_grad = false;
  };

  Var<T> push(Tensor<T> v, bool rg, Parameter<T>* sink) {
    Node n;
    n.value = std::move(v);
    n.requires_grad = rg;
    n.sink = sink;
    nodes_.push_back(std::move(n));
    return Var<T>{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  bool grad_enabled_;
};

}  // namespace evonas
