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

#include "tslm/fusion.hpp"

#include <cmath>

#include "tslm/errors.hpp"

namespace tslm {

using namespace ad;

FusionParams FusionParams::make(ParameterStore& store, const std::string& name, std::size_t d,
                                Rng& rng) {
  FusionParams p;
  const double b = 1.0 / std::sqrt(static_cast<double>(3 * d));
  p.sim_m = &store.add(name + ".sim_m", uniform_tensor({d, 1}, b, rng));
  p.sim_q = &store.add(name + ".sim_q", uniform_tensor({1, d}, b, rng));
  p.sim_mq = &store.add(name + ".sim_mq", uniform_tensor({1, d}, b, rng));
  p.fuse = Linear::make(store, name + ".fuse", 4 * d, d, rng);
  p.pool_w = Linear::make(store, name + ".pool_w", d, d, rng, false);
  p.pool_v = Linear::make(store, name + ".pool_v", d, 1, rng, false);
  p.attach = Linear::make(store, name + ".attach", 2 * d, d, rng);
  return p;
}

Var similarity(Tape& tape, Var M, Var Q, const FusionParams& p) {
  Var s_m = matmul(M, tape.param(*p.sim_m));          // [T x 1]
  Var s_q = matmul_nt(tape.param(*p.sim_q), Q);       // [1 x N]
  Var s_mq = matmul_nt(mul(M, tape.param(*p.sim_mq)), Q);  // [T x N]
  return add(add(s_mq, s_m), s_q);
}

Var cqa_fuse(Tape& tape, Var M, Var Q, const FusionParams& p, const Mask& m_mask,
             const Mask& q_mask) {
  if (M.cols() != Q.cols()) {
    throw DimensionError("cqa_fuse: motion width " + std::to_string(M.cols()) +
                         " != query width " + std::to_string(Q.cols()));
  }
  Var S = similarity(tape, M, Q, p);
  Var S_r = softmax(S, q_mask);                 // over words
  Var S_cT = softmax(transpose(S), m_mask);     // over time, already transposed
  Var A_mq = matmul(S_r, Q);
  Var A_qm = matmul(S_r, matmul(S_cT, M));
  return p.fuse(tape, concat_cols({M, A_mq, mul(M, A_mq), mul(M, A_qm)}));
}

Var additive_attention_pool(Tape& tape, Var Q, const FusionParams& p, const Mask& q_mask) {
  if (Q.rows() == 0) throw ValidationError("additive_attention_pool: empty query");
  Var scores = p.pool_v(tape, tanh(p.pool_w(tape, Q)));  // [N x 1]
  Var w = softmax(transpose(scores), q_mask);             // [1 x N]
  return matmul(w, Q);
}

Var attach_sentence(Tape& tape, Var Mq, Var q, const FusionParams& p) {
  return p.attach(tape, concat_cols({Mq, repeat_rows(q, Mq.rows())}));
}

}  // namespace tslm
