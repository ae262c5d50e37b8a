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

#include <cstdint>
#include <span>
#include <vector>

#include "tslm/tape.hpp"

namespace tslm::ad {

/// Floor applied inside every log in the loss primitives.
inline constexpr double kLogFloor = 1e-12;

/// Per-position validity; nonzero means valid. An empty mask means all valid.
using Mask = std::vector<std::uint8_t>;

// Linear algebra -----------------------------------------------------------

Var matmul(Var a, Var b);
/// a * b^T without materializing the transpose.
Var matmul_nt(Var a, Var b);
Var transpose(Var a);
/// x * w + b. `b` may be an invalid Var for no bias.
Var linear(Var x, Var w, Var b = {});

// Elementwise (b broadcasts against a: same shape, 1 x n, m x 1 or 1 x 1) ----

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var stop_gradient(Var a);

// Shape ---------------------------------------------------------------------

Var reshape(Var a, Shape shape);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
/// Tiles a single row m times.
Var repeat_rows(Var row, std::size_t m);
/// Embedding lookup: row i of the result is table[ids[i]].
Var gather_rows(Var table, std::span<const std::size_t> ids);

// Reductions ----------------------------------------------------------------

Var sum(Var a);
Var mean(Var a);
/// Mean of consecutive groups of `group` rows: [(g*k) x c] -> [k x c].
Var group_mean(Var a, std::size_t group);

// Normalization and attention -------------------------------------------------

/// Row-wise softmax over columns. Positions with mask == 0 receive exactly
/// zero probability. Throws DegenerateRowError when a row has no valid entry.
Var softmax(Var logits, const Mask& valid = {});

Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

struct BatchNormOptions {
  bool training = true;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Normalizes each column over all rows. In training mode batch statistics
/// are used and the running buffers are updated in place; otherwise the
/// running buffers are used.
Var batch_norm(Var x, Var gamma, Var beta, Parameter& running_mean,
               Parameter& running_var, const BatchNormOptions& opts);

/// Sparse adjacency as neighbour lists (self-loops included explicitly).
using Adjacency = std::vector<std::vector<std::size_t>>;

/// For x laid out as blocks of J = adj.size() rows, computes A * block for
/// every block, i.e. out[i] = sum over j in adj[i] of x[j].
Var graph_propagate(Var x, const Adjacency& adj);

// Recurrent -----------------------------------------------------------------

/// Gate layout follows the common (reset, update, new) convention:
///   r = sig(x W_ir + b_ir + h W_hr + b_hr)
///   z = sig(x W_iz + b_iz + h W_hz + b_hz)
///   n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
///   h' = (1 - z) * n + z * h
/// w_ih is [d_in x 3d], w_hh is [d x 3d], biases are [1 x 3d].
struct GruWeights {
  Var w_ih, w_hh, b_ih, b_hh;
};

struct GruOutput {
  Var outputs;  // [T x d]
  Var last;     // [1 x d]
};

GruOutput gru_forward(Var inputs, Var h0, const GruWeights& w);

// Losses --------------------------------------------------------------------

/// -log pred[target] for a probability row.
Var cross_entropy(Var pred, std::size_t target);
/// Mean over valid elements of -[y log p + (1-y) log(1-p)].
Var binary_cross_entropy(Var pred, const Tensor& target, const Mask& valid = {});
/// sum p log(p / q), with 0 log 0 = 0.
Var kl_divergence(Var p, Var q);

}  // namespace tslm::ad
