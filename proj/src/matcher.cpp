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

#include "tslm/matcher.hpp"

#include <algorithm>
#include <cmath>

#include "tslm/errors.hpp"

namespace tslm {

using namespace ad;

Labels highlight_labels(std::size_t T, std::size_t i_s, std::size_t i_e) {
  if (i_s > i_e || i_e >= T) {
    throw ValidationError("highlight span [" + std::to_string(i_s) + ", " +
                          std::to_string(i_e) + "] invalid for T=" + std::to_string(T));
  }
  Labels y(T, 0);
  for (std::size_t i = i_s; i <= i_e; ++i) y[i] = 1;
  return y;
}

Tensor sinusoidal_positions(std::size_t T_max, std::size_t d) {
  Tensor pe({T_max, d});
  for (std::size_t pos = 0; pos < T_max; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double a = static_cast<double>(pos) * freq;
      pe.at(pos, i) = i % 2 == 0 ? std::sin(a) : std::cos(a);
    }
  }
  return pe;
}

MatcherParams MatcherParams::make(ParameterStore& store, const std::string& name,
                                  std::size_t d, std::size_t T_max, Rng& rng) {
  MatcherParams p;
  p.labels = &store.add(name + ".labels", uniform_tensor({3, d}, 1.0, rng));
  p.conv = Linear::make(store, name + ".conv", d, 1, rng);
  p.positions = sinusoidal_positions(T_max, d);
  return p;
}

Var build_label_embeddings(Tape& tape, const Labels& Y_h, const MatcherParams& p) {
  std::vector<std::size_t> ids(Y_h.size());
  for (std::size_t i = 0; i < Y_h.size(); ++i) ids[i] = Y_h[i] ? kForeground : kBackground;
  return gather_rows(tape.param(*p.labels), ids);
}

Labels perturbation_mask(std::size_t T, double alpha, Rng& rng) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ValidationError("perturb rate must lie in [0, 1], got " + std::to_string(alpha));
  }
  const auto ones = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(T) + 0.5));
  const std::size_t n = std::min(ones, T);
  const std::size_t start = rng.index(T - n + 1);
  Labels mask(T, 0);
  for (std::size_t i = start; i < start + n; ++i) mask[i] = 1;
  return mask;
}

Var perturb_embeddings(Var E, const Labels& mask, Var pad_row) {
  const std::size_t T = E.rows();
  if (mask.size() != T) {
    throw DimensionError("perturbation mask of length " + std::to_string(mask.size()) +
                         " for " + std::to_string(T) + " rows");
  }
  Tensor m({T, 1}), keep({T, 1});
  for (std::size_t i = 0; i < T; ++i) {
    m[i] = mask[i] ? 1.0 : 0.0;
    keep[i] = 1.0 - m[i];
  }
  Tape& tape = E.tape();
  Var pad = mul(repeat_rows(pad_row, T), tape.constant(std::move(m)));
  return add(pad, mul(E, tape.constant(std::move(keep))));
}

Var pad_embeddings(Tape& tape, std::size_t T, const MatcherParams& p) {
  const std::vector<std::size_t> ids(T, kHighlightPad);
  return gather_rows(tape.param(*p.labels), ids);
}

Var highlight_scores(Tape& tape, Var Mq, Var E, const MatcherParams& p) {
  const std::size_t T = Mq.rows();
  if (T > p.positions.rows()) {
    throw DimensionError("sequence of " + std::to_string(T) +
                         " exceeds positional table of " + std::to_string(p.positions.rows()));
  }
  Tensor pos({T, p.positions.cols()});
  std::copy_n(p.positions.data(), pos.size(), pos.data());
  return sigmoid(p.conv(tape, add(add(Mq, E), tape.constant(std::move(pos)))));
}

Var seq_loss(Var S_lp, const Labels& Y_h) {
  Tensor y({Y_h.size(), 1});
  for (std::size_t i = 0; i < Y_h.size(); ++i) y[i] = Y_h[i] ? 1.0 : 0.0;
  return binary_cross_entropy(S_lp, y);
}

Var apply_highlight(Var S_lp, Var Mq) { return mul(Mq, S_lp); }

double perturb_rate(double alpha_max, std::size_t step, std::size_t warmup) {
  if (warmup == 0) return alpha_max;
  return alpha_max * std::min(1.0, static_cast<double>(step) / static_cast<double>(warmup));
}

}  // namespace tslm
