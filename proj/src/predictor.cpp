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

#include "tslm/predictor.hpp"

#include "tslm/errors.hpp"

namespace tslm {

using namespace ad;

Branch Branch::make(ParameterStore& store, const std::string& name, std::size_t d, Rng& rng) {
  Branch b;
  b.in_proj = Linear::make(store, name + ".in_proj", 2 * d, d, rng);
  b.gru = GruParams::make(store, name + ".gru", d, d, rng);
  b.head1 = Linear::make(store, name + ".head1", d, d, rng);
  b.head_norm = LayerNormParams::make(store, name + ".head_norm", d);
  b.head2 = Linear::make(store, name + ".head2", d, 1, rng);
  return b;
}

PredictorParams PredictorParams::make(ParameterStore& store, const std::string& name,
                                      std::size_t d, Rng& rng) {
  PredictorParams p;
  p.start = Branch::make(store, name + ".start", d, rng);
  p.end = Branch::make(store, name + ".end", d, rng);
  p.end_cond = Linear::make(store, name + ".end_cond", 2 * d, d, rng);
  p.labels = &store.add(name + ".labels", uniform_tensor({5, d}, 1.0, rng));
  return p;
}

BranchOutput run_branch(Tape& tape, Var input, Var label_channel, const Branch& b,
                        const Mask& valid) {
  Var x = b.in_proj(tape, concat_cols({input, label_channel}));
  Var h = b.gru(tape, x).outputs;
  Var scores = b.head2(tape, relu(b.head_norm(tape, b.head1(tape, h))));
  return {scores, softmax(transpose(scores), valid), h};
}

Var span_label_channel(Tape& tape, std::size_t T, std::size_t index, SpanLabel hot,
                       SpanLabel cold, const PredictorParams& p) {
  if (index >= T) {
    throw RangeError("label index " + std::to_string(index) + " outside T=" + std::to_string(T));
  }
  std::vector<std::size_t> ids(T, cold);
  ids[index] = hot;
  return gather_rows(tape.param(*p.labels), ids);
}

Var pad_label_channel(Tape& tape, std::size_t T, const PredictorParams& p) {
  const std::vector<std::size_t> ids(T, kSpanPad);
  return gather_rows(tape.param(*p.labels), ids);
}

Var condition_end_branch(Tape& tape, Var Mt, Var start_hidden, const PredictorParams& p) {
  return p.end_cond(tape, concat_cols({Mt, start_hidden}));
}

PartOutput predict_part(Tape& tape, Var Mt, const PredictorParams& p, const Mask& valid) {
  const std::size_t T = Mt.rows();
  Var pad = pad_label_channel(tape, T, p);
  PartOutput out;
  out.start = run_branch(tape, Mt, pad, p.start, valid);
  out.end = run_branch(tape, condition_end_branch(tape, Mt, out.start.hidden, p), pad, p.end,
                       valid);
  return out;
}

PartOutput recover_part(Tape& tape, Var Mt, std::size_t flipped_s, std::size_t flipped_e,
                        const PredictorParams& p, const Mask& valid) {
  const std::size_t T = Mt.rows();
  PartOutput out;
  out.start = run_branch(tape, Mt, span_label_channel(tape, T, flipped_s, kStart, kNonStart, p),
                         p.start, valid);
  out.end = run_branch(tape, condition_end_branch(tape, Mt, out.start.hidden, p),
                       span_label_channel(tape, T, flipped_e, kEnd, kNonEnd, p), p.end, valid);
  return out;
}

std::size_t flip_index(std::size_t index, std::size_t T, double beta, Rng& rng) {
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw ValidationError("flip rate must lie in [0, 1], got " + std::to_string(beta));
  }
  if (index >= T) throw RangeError("flip_index: index outside sequence");
  if (T < 2 || !rng.bernoulli(beta)) return index;
  const std::size_t k = rng.index(T - 1);
  return k < index ? k : k + 1;
}

std::vector<std::uint8_t> flip_labels(const std::vector<std::uint8_t>& one_hot, double beta,
                                      Rng& rng) {
  std::size_t index = one_hot.size();
  std::size_t count = 0;
  for (std::size_t i = 0; i < one_hot.size(); ++i) {
    if (one_hot[i]) {
      index = i;
      ++count;
    }
  }
  if (count != 1) throw ValidationError("flip_labels expects exactly one positive label");
  std::vector<std::uint8_t> out(one_hot.size(), 0);
  out[flip_index(index, one_hot.size(), beta, rng)] = 1;
  return out;
}

Var span_loss(Var P, std::size_t target) { return cross_entropy(P, target); }

Var align_loss(Var P, Var P_rec) { return kl_divergence(P, stop_gradient(P_rec)); }

SpanPrediction infer_span(const std::vector<double>& P_s, const std::vector<double>& P_e) {
  if (P_s.empty() || P_s.size() != P_e.size()) {
    throw DimensionError("infer_span needs two distributions of equal nonzero length");
  }
  SpanPrediction best;
  best.p_se = -1.0;
  std::size_t arg_s = 0;
  for (std::size_t e = 0; e < P_e.size(); ++e) {
    if (P_s[e] > P_s[arg_s]) arg_s = e;
    const double v = P_s[arg_s] * P_e[e];
    if (v > best.p_se || (v == best.p_se && arg_s < best.i_s)) {
      best = {arg_s, e, v};
    }
  }
  return best;
}

}  // namespace tslm
