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
#include <vector>

#include "tslm/tape.hpp"

namespace tslm::ad {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// First/second moments per parameter plus the step counter.
struct AdamWState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;
};

/// Bias-corrected Adam update with decoupled weight decay
/// (p <- p - lr * wd * p, then p <- p - lr * m_hat / (sqrt(v_hat) + eps)).
/// Gradients are read from Parameter::grad. On a non-finite gradient nothing
/// is modified and NumericalError names the parameter.
void adamw_step(const std::vector<Parameter*>& params, AdamWState& state,
                const AdamWConfig& cfg, double lr);

class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWConfig cfg = {});

  void step(double lr) { adamw_step(params_, state_, cfg_, lr); }

  const std::vector<Parameter*>& params() const { return params_; }
  AdamWState& state() { return state_; }
  const AdamWState& state() const { return state_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  std::vector<Parameter*> params_;
  AdamWConfig cfg_;
  AdamWState state_;
};

}  // namespace tslm::ad
