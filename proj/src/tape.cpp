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

#include "tslm/tape.hpp"

#include "tslm/errors.hpp"

namespace tslm::ad {

void Parameter::zero_grad() const {
  if (grad.shape() != value.shape() || grad.size() != value.size()) {
    grad = Tensor(value.shape());
  } else {
    grad.fill(0.0);
  }
}

Parameter& ParameterStore::add(std::string name, Tensor value, bool trainable) {
  if (index_.count(name)) {
    throw ValidationError("duplicate parameter name: " + name);
  }
  index_.emplace(name, params_.size());
  Parameter& p = params_.emplace_back();
  p.name = std::move(name);
  p.grad = Tensor(value.shape());
  p.value = std::move(value);
  p.trainable = trainable;
  return p;
}

Parameter* ParameterStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

const Parameter* ParameterStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

std::vector<Parameter*> ParameterStore::trainable() {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (p.trainable) out.push_back(&p);
  }
  return out;
}

void ParameterStore::zero_grad() const {
  for (const auto& p : params_) p.zero_grad();
}

std::size_t ParameterStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.trainable) n += p.value.size();
  }
  return n;
}

Var Tape::push(Node node) {
  if (backward_done_) {
    throw std::logic_error("tape already replayed; record a new forward pass");
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = true;
  return push(std::move(n));
}

Var Tape::param(const Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.value = p.value;
  n.param = &p;
  n.needs_grad = p.trainable;
  Var v = push(std::move(n));
  param_nodes_.emplace(&p, v.id());
  return v;
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.valid() && &in.tape() != this) {
      throw std::logic_error("operand recorded on a different tape");
    }
    if (in.valid() && nodes_[in.id()].needs_grad) n.needs_grad = true;
  }
  if (n.needs_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (&in.tape() != this) {
      throw std::logic_error("operand recorded on a different tape");
    }
    if (nodes_[in.id()].needs_grad) n.needs_grad = true;
  }
  if (n.needs_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

const Tensor& Tape::grad(NodeId id) { return grad_mut(id); }

Tensor& Tape::grad_mut(NodeId id) {
  Node& n = nodes_[id];
  if (n.grad.shape() != n.value.shape() || n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(Var root) {
  if (backward_done_) {
    throw std::logic_error("backward() may run only once per tape");
  }
  if (root.value().size() != 1) {
    throw DimensionError("backward root must be a single element, got " +
                         shape_str(root.shape()));
  }
  backward_done_ = true;
  grad_mut(root.id())[0] = 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, static_cast<NodeId>(i));
    if (n.param != nullptr) {
      Tensor& pg = n.param->grad;
      if (pg.shape() != n.value.shape() || pg.size() != n.value.size()) pg = Tensor(n.value.shape());
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
    }
  }
}

}  // namespace tslm::ad
