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

#include <vector>

#include "tslm/encoders.hpp"

namespace tslm {

enum HighlightLabel : std::size_t { kBackground = 0, kForeground = 1, kHighlightPad = 2 };

using Labels = std::vector<std::uint8_t>;

/// Y_h[i] = 1 iff i_s <= i <= i_e.
Labels highlight_labels(std::size_t T, std::size_t i_s, std::size_t i_e);

/// [T_max x d] sinusoidal table: even columns sin, odd columns cos.
Tensor sinusoidal_positions(std::size_t T_max, std::size_t d);

struct MatcherParams {
  const Parameter* labels = nullptr;  // [3 x d]: background, foreground, PAD
  Linear conv;                        // kernel-1 convolution d -> 1
  Tensor positions;                   // [T_max x d], fixed

  static MatcherParams make(ParameterStore& store, const std::string& name, std::size_t d,
                            std::size_t T_max, Rng& rng);
};

Var build_label_embeddings(Tape& tape, const Labels& Y_h, const MatcherParams& p);

/// Exactly round(alpha * T) ones in one contiguous run with a uniform start.
Labels perturbation_mask(std::size_t T, double alpha, Rng& rng);

/// mask * E_pad + (1 - mask) * E, row-wise.
Var perturb_embeddings(Var E, const Labels& mask, Var pad_row);

/// Row of the PAD label repeated T times.
Var pad_embeddings(Tape& tape, std::size_t T, const MatcherParams& p);

/// sigmoid(conv(M + E + E_pos)) as a [T x 1] column.
Var highlight_scores(Tape& tape, Var Mq, Var E, const MatcherParams& p);

/// Mean binary cross-entropy against Y_h.
Var seq_loss(Var S_lp, const Labels& Y_h);

/// Scales row t of M by S_lp[t].
Var apply_highlight(Var S_lp, Var Mq);

/// alpha_max * min(1, step / warmup).
double perturb_rate(double alpha_max, std::size_t step, std::size_t warmup);

}  // namespace tslm
