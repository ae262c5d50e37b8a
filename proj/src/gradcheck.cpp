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

#include "tslm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "tslm/errors.hpp"

namespace tslm::ad {

GradCheckResult finite_diff_check(const LossBuilder& loss,
                                  const std::vector<Parameter*>& params, double eps,
                                  double floor) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var out = loss(tape);
    tape.backward(out);
  }
  std::vector<Tensor> analytic;
  for (const Parameter* p : params) analytic.push_back(p->grad);

  auto eval = [&]() {
    Tape tape;
    return loss(tape).value().item();
  };

  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double orig = p.value[k];
      p.value[k] = orig + eps;
      const double fp = eval();
      p.value[k] = orig - eps;
      const double fm = eval();
      p.value[k] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[pi][k];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), floor});
      res.max_abs_error = std::max(res.max_abs_error, abs_err);
      if (res.coordinates == 0 || rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst = p.name + "[" + std::to_string(k) + "]";
      }
      ++res.coordinates;
    }
  }
  return res;
}

GradCheckResult finite_diff_check(const std::function<Var(Var)>& f, const Tensor& point,
                                  double eps, double floor) {
  Parameter x;
  x.name = "x";
  x.value = point;
  x.grad = Tensor(point.shape());
  return finite_diff_check([&](Tape& t) { return f(t.param(x)); }, {&x}, eps, floor);
}

}  // namespace tslm::ad
