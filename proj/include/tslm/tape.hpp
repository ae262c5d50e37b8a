// Copyright 2026 The tslm Authors.
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

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "tslm/tensor.hpp"

namespace tslm::ad {

using NodeId = std::uint32_t;
class Tape;

/// A named learnable tensor (or, with trainable == false, a persistent
/// buffer such as BatchNorm running statistics).
struct Parameter {
  std::string name;
  Tensor value;
  // Accumulated by Tape::backward through const references.
  mutable Tensor grad;
  bool trainable = true;

  void zero_grad() const;
};

/// Owns parameters with stable addresses, in registration order.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor value, bool trainable = true);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::deque<Parameter>& all() { return params_; }
  const std::deque<Parameter>& all() const { return params_; }
  std::vector<Parameter*> trainable();
  void zero_grad() const;
  std::size_t trainable_count() const;

 private:
  std::deque<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  NodeId id() const { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool needs_grad() const;

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

/// Records primitive operations in execution order and replays them in
/// reverse to accumulate gradients. One tape serves one forward pass and one
/// backward pass; parameters are copied in on first use, so several tapes may
/// evaluate the same model concurrently as long as none of them calls
/// backward().
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, NodeId)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf whose gradient is tracked (readable through grad() afterwards).
  Var variable(Tensor value);
  /// Leaf bound to a parameter; backward() adds into Parameter::grad when
  /// the parameter is trainable. Repeated calls return the same node.
  Var param(const Parameter& p);

  /// Records a computed node. When no input needs a gradient the backward
  /// function is dropped and the node behaves as a constant.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  bool needs_grad(NodeId id) const { return nodes_[id].needs_grad; }
  /// Gradient of a node after backward(); a zero tensor if none reached it.
  const Tensor& grad(NodeId id);
  const Tensor& grad(Var v) { return grad(v.id()); }
  /// Mutable gradient buffer, allocated as zeros on first access.
  Tensor& grad_mut(NodeId id);

  /// Seeds d(root)/d(root) = 1 and runs every recorded backward function in
  /// reverse order. Root must be a single element. May run only once.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    const Parameter* param = nullptr;
    bool needs_grad = false;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, NodeId> param_nodes_;
  bool backward_done_ = false;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline bool Var::needs_grad() const { return tape_->needs_grad(id_); }

}  // namespace tslm::ad
