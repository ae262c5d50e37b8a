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

#include "tslm/encoders.hpp"

#include <cmath>

#include "tslm/errors.hpp"

namespace tslm {

using namespace ad;

Var gcn_layer_forward(Tape& tape, Var H, const Adjacency& adj, const GcnLayer& layer,
                      bool training) {
  Var pre = matmul(graph_propagate(H, adj), tape.param(*layer.weight));
  BatchNormOptions opts;
  opts.training = training;
  return batch_norm(tanh(pre), tape.param(*layer.gamma), tape.param(*layer.beta),
                    *layer.running_mean, *layer.running_var, opts);
}

GcnStack GcnStack::make(ParameterStore& store, const std::string& name, std::size_t in_dim,
                        std::size_t d, std::size_t num_layers, Adjacency adj, Rng& rng) {
  GcnStack s;
  s.adj = std::move(adj);
  std::size_t in = in_dim;
  for (std::size_t l = 0; l < num_layers; ++l) {
    const std::string p = name + "." + std::to_string(l);
    GcnLayer layer;
    layer.weight = &store.add(p + ".weight",
                              uniform_tensor({in, d}, 1.0 / std::sqrt(static_cast<double>(in)), rng));
    layer.gamma = &store.add(p + ".bn.gamma", Tensor({1, d}, 1.0));
    layer.beta = &store.add(p + ".bn.beta", Tensor({1, d}));
    layer.running_mean = &store.add(p + ".bn.running_mean", Tensor({1, d}), false);
    layer.running_var = &store.add(p + ".bn.running_var", Tensor({1, d}, 1.0), false);
    s.layers.push_back(layer);
    in = d;
  }
  return s;
}

Var GcnStack::operator()(Tape& tape, Var X, bool training) const {
  Var h = X;
  for (const auto& layer : layers) h = gcn_layer_forward(tape, h, adj, layer, training);
  return group_mean(h, adj.size());
}

std::vector<Var> spatial_encode(Tape& tape, const std::vector<const Tensor*>& grids,
                                const GcnStack& stack, bool training) {
  if (grids.empty()) return {};
  const std::size_t J = stack.adj.size();
  std::size_t rows = 0;
  const std::size_t dp = grids.front()->shape().back();
  for (const Tensor* g : grids) {
    if (g->rank() != 3 || g->shape()[1] != J || g->shape()[2] != dp) {
      throw DimensionError("spatial_encode expects [T x " + std::to_string(J) + " x " +
                           std::to_string(dp) + "], got " + shape_str(g->shape()));
    }
    rows += g->shape()[0] * J;
  }
  Tensor stacked({rows, dp});
  std::size_t off = 0;
  for (const Tensor* g : grids) {
    std::copy(g->storage().begin(), g->storage().end(), stacked.storage().begin() + off);
    off += g->size();
  }
  Var pooled = stack(tape, tape.constant(std::move(stacked)), training);
  std::vector<Var> out;
  std::size_t row = 0;
  for (const Tensor* g : grids) {
    const std::size_t T = g->shape()[0];
    out.push_back(grids.size() == 1 ? pooled : slice_rows(pooled, row, T));
    row += T;
  }
  return out;
}

SgpaBlock SgpaBlock::make(ParameterStore& store, const std::string& name, std::size_t d,
                          std::size_t heads, Rng& rng) {
  if (heads == 0 || d % heads != 0) {
    throw ValidationError("model width " + std::to_string(d) + " is not divisible by " +
                          std::to_string(heads) + " heads");
  }
  SgpaBlock b;
  b.heads = heads;
  b.q_self = Linear::make(store, name + ".q_self", d, d, rng);
  b.k_self = Linear::make(store, name + ".k_self", d, d, rng);
  b.v_self = Linear::make(store, name + ".v_self", d, d, rng);
  b.k_cross = Linear::make(store, name + ".k_cross", d, d, rng);
  b.v_cross = Linear::make(store, name + ".v_cross", d, d, rng);
  b.gate_self = Linear::make(store, name + ".gate_self", d, d, rng);
  b.gate_cross = Linear::make(store, name + ".gate_cross", d, d, rng);
  return b;
}

Var multi_head_attention(Var q, Var k, Var v, std::size_t heads, const Mask& key_mask) {
  const std::size_t d = q.cols();
  const std::size_t dh = d / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dh));
  if (heads == 1) return matmul(softmax(scale(matmul_nt(q, k), s), key_mask), v);
  std::vector<Var> parts;
  parts.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = slice_cols(q, h * dh, dh);
    Var kh = slice_cols(k, h * dh, dh);
    Var vh = slice_cols(v, h * dh, dh);
    parts.push_back(matmul(softmax(scale(matmul_nt(qh, kh), s), key_mask), vh));
  }
  return concat_cols(parts);
}

Var SgpaBlock::operator()(Tape& tape, Var X, Var C, const Mask& self_mask,
                          const Mask& cross_mask) const {
  Var q = q_self(tape, X);
  Var m_s = multi_head_attention(q, k_self(tape, X), v_self(tape, X), heads, self_mask);
  Var m_c = multi_head_attention(q, k_cross(tape, C), v_cross(tape, C), heads, cross_mask);
  return add(mul(sigmoid(gate_cross(tape, m_c)), m_s), mul(sigmoid(gate_self(tape, m_s)), m_c));
}

Var temporal_encode(Tape& tape, Var M_prime, Var Q_prime, const EncoderParams& p,
                    const Mask& m_mask, const Mask& q_mask) {
  Var m = M_prime;
  for (const auto& block : p.blocks) m = block(tape, m, Q_prime, m_mask, q_mask);
  return m;
}

Var encode_query(Tape& tape, Var Q_prime, Var M_prime, const EncoderParams& p,
                 const Mask& q_mask, const Mask& m_mask) {
  Var q = Q_prime;
  for (const auto& block : p.blocks) q = block(tape, q, M_prime, q_mask, m_mask);
  return q;
}

}  // namespace tslm
