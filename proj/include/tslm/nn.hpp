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

#include <string>

#include "tslm/ops.hpp"
#include "tslm/rng.hpp"

namespace tslm::ad {

/// U(-bound, bound) initialized tensor.
Tensor uniform_tensor(Shape shape, double bound, Rng& rng);

/// Fully connected map x * W + b registered in a ParameterStore.
struct Linear {
  const Parameter* weight = nullptr;
  const Parameter* bias = nullptr;

  /// Weights U(-1/sqrt(in), 1/sqrt(in)); bias zero.
  static Linear make(ParameterStore& store, const std::string& name, std::size_t in,
                     std::size_t out, Rng& rng, bool with_bias = true);

  std::size_t in_dim() const { return weight->value.rows(); }
  std::size_t out_dim() const { return weight->value.cols(); }

  Var operator()(Tape& tape, Var x) const {
    return linear(x, tape.param(*weight), bias ? tape.param(*bias) : Var{});
  }
};

struct LayerNormParams {
  const Parameter* gamma = nullptr;
  const Parameter* beta = nullptr;

  static LayerNormParams make(ParameterStore& store, const std::string& name,
                              std::size_t dim);

  Var operator()(Tape& tape, Var x) const {
    return layer_norm(x, tape.param(*gamma), tape.param(*beta));
  }
};

struct GruParams {
  const Parameter* w_ih = nullptr;
  const Parameter* w_hh = nullptr;
  const Parameter* b_ih = nullptr;
  const Parameter* b_hh = nullptr;

  static GruParams make(ParameterStore& store, const std::string& name,
                        std::size_t in, std::size_t hidden, Rng& rng);

  std::size_t hidden() const { return w_hh->value.rows(); }

  /// Runs from a zero initial state.
  GruOutput operator()(Tape& tape, Var x) const;
};

}  // namespace tslm::ad
