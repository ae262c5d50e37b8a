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

#include "tslm/motion.hpp"
#include "tslm/nn.hpp"

namespace tslm {

using ad::Linear;
using ad::Mask;
using ad::Parameter;
using ad::ParameterStore;
using ad::Tape;
using ad::Var;

struct GcnLayer {
  const Parameter* weight = nullptr;
  const Parameter* gamma = nullptr;
  const Parameter* beta = nullptr;
  Parameter* running_mean = nullptr;
  Parameter* running_var = nullptr;
};

/// BN(tanh(A H W)) for one layer. H holds blocks of adj.size() node rows;
/// batch statistics run over every row, i.e. over batch x node.
Var gcn_layer_forward(Tape& tape, Var H, const ad::Adjacency& adj, const GcnLayer& layer,
                      bool training);

struct GcnStack {
  std::vector<GcnLayer> layers;
  ad::Adjacency adj;

  static GcnStack make(ParameterStore& store, const std::string& name, std::size_t in_dim,
                       std::size_t d, std::size_t num_layers, ad::Adjacency adj, Rng& rng);

  /// X: [(elements * J) x d_p] -> per-element joint mean [elements x d].
  Var operator()(Tape& tape, Var X, bool training) const;
};

/// Spatial encoding of one or more snippet grids [T x J x d_p], stacked so
/// BatchNorm sees the whole batch. Returns one [T_i x d] Var per grid.
std::vector<Var> spatial_encode(Tape& tape, const std::vector<const Tensor*>& grids,
                                const GcnStack& stack, bool training);

struct SgpaBlock {
  Linear q_self, k_self, v_self, k_cross, v_cross;
  Linear gate_self, gate_cross;  // applied to M_s and M_c respectively
  std::size_t heads = 1;

  static SgpaBlock make(ParameterStore& store, const std::string& name, std::size_t d,
                        std::size_t heads, Rng& rng);

  /// self_mask / cross_mask mark valid rows of X and C (empty = all valid).
  Var operator()(Tape& tape, Var X, Var C, const Mask& self_mask = {},
                 const Mask& cross_mask = {}) const;
};

/// softmax(q k^T / sqrt(d_head)) v per head, heads concatenated.
Var multi_head_attention(Var q, Var k, Var v, std::size_t heads, const Mask& key_mask);

struct EncoderParams {
  GcnStack gcn;
  std::vector<SgpaBlock> blocks;
  Linear text_proj;  // d_w -> d
};

/// Stack of SGPA blocks on the motion stream; Q' stays fixed as context.
Var temporal_encode(Tape& tape, Var M_prime, Var Q_prime, const EncoderParams& p,
                    const Mask& m_mask = {}, const Mask& q_mask = {});
/// The same blocks with the roles swapped; M' stays fixed as context.
Var encode_query(Tape& tape, Var Q_prime, Var M_prime, const EncoderParams& p,
                 const Mask& q_mask = {}, const Mask& m_mask = {});

}  // namespace tslm
