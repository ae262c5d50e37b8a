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

#include "tslm/model.hpp"

#include "tslm/errors.hpp"

namespace tslm {

using namespace ad;

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.vocab_size == 0) throw ValidationError("model needs a nonempty vocabulary");
  if (cfg.d == 0 || cfg.d_w == 0 || cfg.snippets == 0) {
    throw ValidationError("model widths and snippet count must be positive");
  }
  Rng rng(seed);
  const std::size_t cells = kJoints * kJointFeatures;
  input_mean_ = &store_.add("input.mean", Tensor({1, cells}), false);
  input_std_ = &store_.add("input.std", Tensor({1, cells}, 1.0), false);
  word_embeddings = &store_.add("text.embeddings", uniform_tensor({cfg.vocab_size, cfg.d_w}, 1.0, rng));
  encoder.text_proj = Linear::make(store_, "text.proj", cfg.d_w, cfg.d, rng);
  encoder.gcn = GcnStack::make(store_, "gcn", kJointFeatures, cfg.d, cfg.gcn_layers,
                               skeleton_adjacency(), rng);
  for (std::size_t i = 0; i < cfg.n_sgpa; ++i) {
    encoder.blocks.push_back(
        SgpaBlock::make(store_, "sgpa." + std::to_string(i), cfg.d, cfg.heads, rng));
  }
  fusion = FusionParams::make(store_, "fusion", cfg.d, rng);
  matcher = MatcherParams::make(store_, "matcher", cfg.d, cfg.snippets, rng);
  predictor = PredictorParams::make(store_, "predictor", cfg.d, rng);
}

void Model::set_input_normalization(const Tensor& mean, const Tensor& stddev) {
  if (mean.size() != input_mean_->value.size() || stddev.size() != input_std_->value.size()) {
    throw DimensionError("input normalization needs 264 channels");
  }
  input_mean_->value = Tensor(input_mean_->value.shape(), mean.storage());
  input_std_->value = Tensor(input_std_->value.shape(), stddev.storage());
}

Tensor Model::prepare_motion(const MotionSequence& m) const {
  Tensor grid = snippetize_joints(m.features, cfg_.snippets);
  const std::size_t cells = kJoints * kJointFeatures;
  const double* mu = input_mean_->value.data();
  const double* sd = input_std_->value.data();
  for (std::size_t t = 0; t < grid.shape()[0]; ++t) {
    double* row = grid.data() + t * cells;
    for (std::size_t c = 0; c < cells; ++c) row[c] = (row[c] - mu[c]) / sd[c];
  }
  return grid;
}

Var Model::query_features(Tape& tape, const std::vector<std::size_t>& tokens) const {
  if (tokens.empty()) throw ValidationError("empty query");
  for (auto t : tokens) {
    if (t >= cfg_.vocab_size) {
      throw ValidationError("token id " + std::to_string(t) + " outside vocabulary of " +
                            std::to_string(cfg_.vocab_size));
    }
  }
  return encoder.text_proj(tape, gather_rows(tape.param(*word_embeddings), tokens));
}

Var Model::query_aware_motion(Tape& tape, Var M_prime,
                              const std::vector<std::size_t>& tokens) const {
  Var Q_prime = query_features(tape, tokens);
  Var M_bar = temporal_encode(tape, M_prime, Q_prime, encoder);
  Var Q_bar = encode_query(tape, Q_prime, M_prime, encoder);
  Var Mq = cqa_fuse(tape, M_bar, Q_bar, fusion);
  Var q = additive_attention_pool(tape, Q_bar, fusion);
  return attach_sentence(tape, Mq, q, fusion);
}

SampleLosses Model::losses(Tape& tape, Var M_prime, const std::vector<std::size_t>& tokens,
                           const SampleTargets& y) const {
  const std::size_t T = M_prime.rows();
  Var Mq = query_aware_motion(tape, M_prime, tokens);
  const Labels Y_h = highlight_labels(T, y.i_s, y.i_e);
  Var E = build_label_embeddings(tape, Y_h, matcher);
  Var pad_row = slice_rows(tape.param(*matcher.labels), kHighlightPad, 1);
  Var E_bar = perturb_embeddings(E, y.perturb, pad_row);
  Var S_lp = highlight_scores(tape, Mq, E_bar, matcher);
  Var Mt = apply_highlight(S_lp, Mq);

  PartOutput pred = predict_part(tape, Mt, predictor);
  PartOutput rec = recover_part(tape, Mt, y.flipped_s, y.flipped_e, predictor);
  SampleLosses l;
  l.seq = seq_loss(S_lp, Y_h);
  l.span_s = span_loss(pred.start.probs, y.i_s);
  l.span_e = span_loss(pred.end.probs, y.i_e);
  l.rec_s = span_loss(rec.start.probs, y.i_s);
  l.rec_e = span_loss(rec.end.probs, y.i_e);
  l.align_s = align_loss(pred.start.probs, rec.start.probs);
  l.align_e = align_loss(pred.end.probs, rec.end.probs);
  return l;
}

Localization Model::locate(Tape& tape, Var M_prime, const std::vector<std::size_t>& tokens) const {
  const std::size_t T = M_prime.rows();
  Var Mq = query_aware_motion(tape, M_prime, tokens);
  Var S_lp = highlight_scores(tape, Mq, pad_embeddings(tape, T, matcher), matcher);
  PartOutput pred = predict_part(tape, apply_highlight(S_lp, Mq), predictor);
  Localization out;
  out.P_s = pred.start.probs.value().storage();
  out.P_e = pred.end.probs.value().storage();
  out.highlight = S_lp.value().storage();
  out.span = infer_span(out.P_s, out.P_e);
  return out;
}

Localization Model::locate(const Tensor& grid, const std::vector<std::size_t>& tokens) const {
  Tape tape;
  auto M = spatial_encode(tape, {&grid}, encoder.gcn, false);
  return locate(tape, M.front(), tokens);
}

}  // namespace tslm
