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

#include <memory>
#include <vector>

#include "tslm/dataset.hpp"
#include "tslm/fusion.hpp"
#include "tslm/matcher.hpp"
#include "tslm/predictor.hpp"

namespace tslm {

struct ModelConfig {
  std::size_t d = 32;
  std::size_t d_w = 32;
  std::size_t heads = 2;
  std::size_t n_sgpa = 2;
  std::size_t gcn_layers = 3;
  std::size_t snippets = 64;  // S, also the positional table length
  std::size_t vocab_size = 0;

  bool operator==(const ModelConfig&) const = default;
};

/// Ground truth and per-step randomness for one training sample.
struct SampleTargets {
  std::size_t i_s = 0;
  std::size_t i_e = 0;
  Labels perturb;  // contiguous PAD run over the highlight labels
  std::size_t flipped_s = 0;
  std::size_t flipped_e = 0;
};

struct SampleLosses {
  Var seq, span_s, span_e, rec_s, rec_e, align_s, align_e;
};

struct Localization {
  std::vector<double> P_s, P_e, highlight;
  SpanPrediction span;
};

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }

  /// Per-channel standardisation applied to joint grids before encoding.
  void set_input_normalization(const Tensor& mean, const Tensor& stddev);
  /// Snippetized and standardised [T x 22 x 12] grid of a motion.
  Tensor prepare_motion(const MotionSequence& m) const;

  /// Q' = linear(word embeddings), [N x d].
  Var query_features(Tape& tape, const std::vector<std::size_t>& tokens) const;
  /// M-bar^q: encoders, context-query fusion and sentence attachment.
  Var query_aware_motion(Tape& tape, Var M_prime, const std::vector<std::size_t>& tokens) const;

  SampleLosses losses(Tape& tape, Var M_prime, const std::vector<std::size_t>& tokens,
                      const SampleTargets& targets) const;

  /// Inference path; never reads labels.
  Localization locate(Tape& tape, Var M_prime, const std::vector<std::size_t>& tokens) const;
  /// Convenience wrapper running the spatial encoder in evaluation mode.
  Localization locate(const Tensor& grid, const std::vector<std::size_t>& tokens) const;

  EncoderParams encoder;
  FusionParams fusion;
  MatcherParams matcher;
  PredictorParams predictor;
  const Parameter* word_embeddings = nullptr;

 private:
  ModelConfig cfg_;
  ParameterStore store_;
  Parameter* input_mean_ = nullptr;
  Parameter* input_std_ = nullptr;
};

}  // namespace tslm
