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

#include <functional>
#include <string>
#include <vector>

#include "tslm/tape.hpp"

namespace tslm::ad {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;  // "<param>[<index>]" of the largest relative error

  bool passed(double tol) const { return max_rel_error <= tol; }
};

/// Builds a scalar loss on a fresh tape, reading the checked tensors through
/// Tape::param.
using LossBuilder = std::function<Var(Tape&)>;

/// Compares the reverse-mode gradient of `loss` with central differences
/// (f(x + eps) - f(x - eps)) / 2 eps for every coordinate of every parameter.
///
/// Relative error per coordinate is |analytic - numeric| / max(|analytic|,
/// |numeric|, floor); the floor keeps exact zeros from turning rounding noise
/// into huge ratios. The loss must be deterministic; training-mode BatchNorm
/// is fine because its output does not depend on the running buffers.
GradCheckResult finite_diff_check(const LossBuilder& loss,
                                  const std::vector<Parameter*>& params,
                                  double eps = 1e-5, double floor = 1e-4);

/// Single-input form: f maps a variable to a scalar.
GradCheckResult finite_diff_check(const std::function<Var(Var)>& f, const Tensor& point,
                                  double eps = 1e-5, double floor = 1e-4);

}  // namespace tslm::ad
