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

/// Rows of the span label table.
enum SpanLabel : std::size_t {
  kStart = 0,
  kNonStart = 1,
  kEnd = 2,
  kNonEnd = 3,
  kSpanPad = 4,
};

struct Branch {
  Linear in_proj;  // 2d -> d over [input ; label channel]
  ad::GruParams gru;
  Linear head1;
  ad::LayerNormParams head_norm;
  Linear head2;  // d -> 1

  static Branch make(ParameterStore& store, const std::string& name, std::size_t d, Rng& rng);
};

struct PredictorParams {
  Branch start, end;
  Linear end_cond;  // 2d -> d over [M~ ; start GRU outputs]
  const Parameter* labels = nullptr;  // [5 x d]

  static PredictorParams make(ParameterStore& store, const std::string& name, std::size_t d,
                              Rng& rng);
};

struct BranchOutput {
  Var scores;  // [T x 1]
  Var probs;   // [1 x T]
  Var hidden;  // [T x d] GRU outputs
};

/// One branch: project [input ; label channel], GRU, head, softmax over time.
BranchOutput run_branch(Tape& tape, Var input, Var label_channel, const Branch& b,
                        const Mask& valid = {});

/// Label channel rows: `hot` at position `index`, `cold` elsewhere.
Var span_label_channel(Tape& tape, std::size_t T, std::size_t index, SpanLabel hot,
                       SpanLabel cold, const PredictorParams& p);
/// PAD_label row repeated T times.
Var pad_label_channel(Tape& tape, std::size_t T, const PredictorParams& p);

/// Input of the end branch: linear map of [M~ ; start hidden states].
Var condition_end_branch(Tape& tape, Var Mt, Var start_hidden, const PredictorParams& p);

struct PartOutput {
  BranchOutput start, end;
};

/// Predicting part: both branches with PAD label channels.
PartOutput predict_part(Tape& tape, Var Mt, const PredictorParams& p, const Mask& valid = {});
/// Recovering part: both branches fed flipped start/end labels.
PartOutput recover_part(Tape& tape, Var Mt, std::size_t flipped_s, std::size_t flipped_e,
                        const PredictorParams& p, const Mask& valid = {});

/// With probability beta moves the single 1 to a uniformly chosen other index.
std::size_t flip_index(std::size_t index, std::size_t T, double beta, Rng& rng);
/// One-hot wrapper of flip_index.
std::vector<std::uint8_t> flip_labels(const std::vector<std::uint8_t>& one_hot, double beta,
                                      Rng& rng);

/// -log P[target].
Var span_loss(Var P, std::size_t target);
/// KL(P || stopgrad(P_rec)).
Var align_loss(Var P, Var P_rec);

struct SpanPrediction {
  std::size_t i_s = 0;
  std::size_t i_e = 0;
  double p_se = 0.0;
};

/// argmax over i_s <= i_e of P_s[i_s] * P_e[i_e]; ties go to the smallest
/// i_s, then the smallest i_e.
SpanPrediction infer_span(const std::vector<double>& P_s, const std::vector<double>& P_e);

}  // namespace tslm
