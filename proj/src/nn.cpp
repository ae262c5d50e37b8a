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

#include "tslm/nn.hpp"

#include <cmath>

namespace tslm::ad {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

Linear Linear::make(ParameterStore& store, const std::string& name, std::size_t in,
                    std::size_t out, Rng& rng, bool with_bias) {
  Linear l;
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  l.weight = &store.add(name + ".weight", uniform_tensor({in, out}, bound, rng));
  if (with_bias) l.bias = &store.add(name + ".bias", Tensor({1, out}));
  return l;
}

LayerNormParams LayerNormParams::make(ParameterStore& store, const std::string& name,
                                      std::size_t dim) {
  LayerNormParams p;
  p.gamma = &store.add(name + ".gamma", Tensor({1, dim}, 1.0));
  p.beta = &store.add(name + ".beta", Tensor({1, dim}));
  return p;
}

GruParams GruParams::make(ParameterStore& store, const std::string& name, std::size_t in,
                          std::size_t hidden, Rng& rng) {
  GruParams p;
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  p.w_ih = &store.add(name + ".w_ih", uniform_tensor({in, 3 * hidden}, bound, rng));
  p.w_hh = &store.add(name + ".w_hh", uniform_tensor({hidden, 3 * hidden}, bound, rng));
  p.b_ih = &store.add(name + ".b_ih", Tensor({1, 3 * hidden}));
  p.b_hh = &store.add(name + ".b_hh", Tensor({1, 3 * hidden}));
  return p;
}

GruOutput GruParams::operator()(Tape& tape, Var x) const {
  Var h0 = tape.constant(Tensor({1, hidden()}));
  return gru_forward(x, h0,
                     {tape.param(*w_ih), tape.param(*w_hh), tape.param(*b_ih),
                      tape.param(*b_hh)});
}

}  // namespace tslm::ad
