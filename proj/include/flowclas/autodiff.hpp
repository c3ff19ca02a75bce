/*
 * Copyright 2026 The flowclas Authors.
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

#pragma once

// Tape-based reverse-mode differentiation over Tensor<T>.
//
// Every differentiable op appends one node to a Tape. Nodes are immutable once
// recorded; Tape::backward() walks them in exact reverse execution order and
// accumulates gradients into the Parameters that were read as leaves.

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <deque>
#include <vector>

#include "flowclas/error.hpp"
#include "flowclas/tensor.hpp"

namespace flowclas {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(train) {}

  void zero_grad() {
    if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    grad.fill(T(0));
  }
};

template <typename T>
class Tape;

// Handle to a node on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  Tape<T>* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  // A non-recording tape evaluates ops without keeping backward closures.
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  Var<T> constant(Tensor<T> value) {
    nodes_.push_back(Node{"constant", std::move(value), {}, nullptr, {}, false});
    return Var<T>(this, nodes_.size() - 1);
  }

  // Reads a parameter as a leaf; its gradient lands in param.grad on backward().
  Var<T> parameter(Parameter<T>& param) {
    const bool rg = recording_ && param.trainable;
    nodes_.push_back(Node{"parameter", param.value, {}, rg ? &param : nullptr, {}, rg});
    return Var<T>(this, nodes_.size() - 1);
  }

  // Appends an op result. `inputs` lists the node ids the op read.
  Var<T> record(const char* op, Tensor<T> value, const std::vector<std::size_t>& inputs, BackwardFn fn) {
    if (!value.all_finite()) {
      throw NumericError(std::string(op) + ": non-finite output");
    }
    bool rg = false;
    if (recording_) {
      for (std::size_t in : inputs) rg = rg || nodes_.at(in).requires_grad;
    }
    nodes_.push_back(Node{op, std::move(value), {}, nullptr, rg ? std::move(fn) : BackwardFn{}, rg});
    return Var<T>(this, nodes_.size() - 1);
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  const char* op_name(std::size_t id) const { return nodes_.at(id).op; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  // Gradient buffer of a node, allocated as zeros on first access.
  Tensor<T>& grad(std::size_t id) {
    Node& node = nodes_.at(id);
    if (node.grad.shape() != node.value.shape()) node.grad = Tensor<T>(node.value.shape());
    return node.grad;
  }

  // Accumulates d(loss)/d(parameter) into every reachable trainable Parameter and consumes the tape.
  void backward(const Var<T>& loss) {
    if (consumed_) throw Error("backward: tape already consumed");
    if (!recording_) throw Error("backward: tape is not recording");
    if (loss.tape() != this) throw Error("backward: loss belongs to another tape");
    if (loss.value().size() != 1) {
      throw ShapeError("backward: loss must be a scalar, got shape " + shape_string(loss.shape()));
    }
    consumed_ = true;
    visit_order_.clear();
    if (!nodes_[loss.id()].requires_grad) return;
    grad(loss.id())[0] = T(1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (!node.requires_grad || node.grad.empty()) continue;
      visit_order_.push_back(i);
      if (node.param != nullptr) {
        Parameter<T>& p = *node.param;
        if (p.grad.shape() != p.value.shape()) p.zero_grad();
        for (std::size_t k = 0; k < p.grad.size(); ++k) p.grad[k] += node.grad[k];
      } else if (node.backward) {
        node.backward(*this, i);
      }
    }
    for (Node& node : nodes_) node.backward = nullptr;
  }

  bool consumed() const { return consumed_; }

  // Node ids visited by the last backward(), in visit order.
  const std::vector<std::size_t>& visit_order() const { return visit_order_; }

 private:
  struct Node {
    const char* op;
    Tensor<T> value;
    Tensor<T> grad;
    Parameter<T>* param;
    BackwardFn backward;
    bool requires_grad;
  };

  std::deque<Node> nodes_;  // deque: references to values stay valid as the tape grows
  std::vector<std::size_t> visit_order_;
  bool recording_;
  bool consumed_ = false;
};

}  // namespace flowclas
