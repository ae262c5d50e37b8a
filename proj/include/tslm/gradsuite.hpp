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
#include <string>
#include <vector>

namespace tslm {

struct GradSuiteOptions {
  std::size_t cases = 20;
  double eps = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 2024;
};

struct GradSuiteResult {
  std::string name;
  std::size_t cases = 0;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  std::string worst;
  bool passed = false;
  double seconds = 0.0;
};

/// Names of every check: differentiable primitives first, then submodules.
std::vector<std::string> gradient_suite_names();

/// Central finite-difference checks on random inputs and parameters.
/// `only` restricts the run to the named checks (empty = all).
std::vector<GradSuiteResult> run_gradient_suite(const GradSuiteOptions& opts,
                                                const std::vector<std::string>& only = {});

/// Fixed-width pass/fail table of suite results.
std::string gradient_suite_table(const std::vector<GradSuiteResult>& results, double tolerance);

}  // namespace tslm
