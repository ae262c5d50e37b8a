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

#include "tslm/encoders.hpp"

namespace tslm {

struct FusionParams {
  // Trilinear similarity w_m . m + w_q . q + w_mq . (m * q).
  const Parameter* sim_m = nullptr;   // [d x 1]
  const Parameter* sim_q = nullptr;   // [1 x d]
  const Parameter* sim_mq = nullptr;  // [1 x d]
  Linear fuse;                        // 4d -> d
  Linear pool_w;                      // d -> d, no bias
  Linear pool_v;                      // d -> 1, no bias
  Linear attach;                      // 2d -> d

  static FusionParams make(ParameterStore& store, const std::string& name, std::size_t d,
                           Rng& rng);
};

/// [T x N] similarity between every (motion row, word row) pair.
Var similarity(Tape& tape, Var M, Var Q, const FusionParams& p);

/// Query-aware motion features [T x d].
Var cqa_fuse(Tape& tape, Var M, Var Q, const FusionParams& p, const Mask& m_mask = {},
             const Mask& q_mask = {});

/// Sentence vector [1 x d] by additive attention over valid words.
Var additive_attention_pool(Tape& tape, Var Q, const FusionParams& p, const Mask& q_mask = {});

/// Linear map of [M^q ; q] per row, 2d -> d.
Var attach_sentence(Tape& tape, Var Mq, Var q, const FusionParams& p);

}  // namespace tslm
