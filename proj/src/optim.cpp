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

#include "tslm/optim.hpp"

#include <cmath>

#include "tslm/errors.hpp"

namespace tslm::ad {

void adamw_step(const std::vector<Parameter*>& params, AdamWState& state,
                const AdamWConfig& cfg, double lr) {
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const Parameter* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    if (p.grad.shape() != p.value.shape() || p.grad.size() != p.value.size()) {
      throw DimensionError("gradient of " + p.name + " has shape " +
                           shape_str(p.grad.shape()) + ", expected " +
                           shape_str(p.value.shape()));
    }
    if (state.m[i].shape() != p.value.shape()) {
      throw DimensionError("optimizer state for " + p.name + " does not match");
    }
    if (!p.grad.all_finite()) {
      throw NumericalError("non-finite gradient in parameter " + p.name +
                           " at optimizer step " + std::to_string(state.t + 1));
    }
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      p.value[k] -= lr * cfg.weight_decay * p.value[k];
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p.value[k] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

AdamW::AdamW(std::vector<Parameter*> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (const Parameter* p : params_) {
    state_.m.emplace_back(p->value.shape());
    state_.v.emplace_back(p->value.shape());
  }
}

}  // namespace tslm::ad
