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

#include "tslm/gradsuite.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <memory>
#include <sstream>

#include "tslm/encoders.hpp"
#include "tslm/errors.hpp"
#include "tslm/fusion.hpp"
#include "tslm/gradcheck.hpp"
#include "tslm/matcher.hpp"
#include "tslm/motion.hpp"
#include "tslm/nn.hpp"
#include "tslm/predictor.hpp"

namespace tslm {

using namespace ad;

namespace {

// A random problem instance: parameters to check plus the loss over them.
struct Probe {
  std::unique_ptr<ParameterStore> store = std::make_unique<ParameterStore>();
  std::vector<Parameter*> checked;
  LossBuilder loss;

  Parameter& input(const std::string& name, Shape shape, Rng& rng, double bound = 1.0) {
    Parameter& p = store->add(name, uniform_tensor(std::move(shape), bound, rng));
    checked.push_back(&p);
    return p;
  }
};

using ProbeFactory = std::function<Probe(Rng&)>;

std::size_t dim(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); }

// Reduces any output to a scalar with fixed random weights so that every
// output coordinate contributes a distinct gradient.
Var weighted_sum(Var out, Rng& rng) {
  Tensor w = uniform_tensor(out.shape(), 1.0, rng);
  return sum(mul(out, out.tape().constant(std::move(w))));
}

Mask random_mask(std::size_t n, Rng& rng) {
  Mask m(n);
  for (auto& v : m) v = rng.bernoulli(0.7) ? 1 : 0;
  m[rng.index(n)] = 1;
  return m;
}

// Random second operand shape for broadcasting ops.
Shape broadcast_shape(std::size_t r, std::size_t c, Rng& rng) {
  switch (rng.index(4)) {
    case 0: return {r, c};
    case 1: return {1, c};
    case 2: return {r, 1};
    default: return {1, 1};
  }
}

// Keeps relu inputs away from the kink so central differences are valid.
Tensor away_from_zero(Tensor t, double gap) {
  for (auto& v : t.storage()) v = v >= 0 ? v + gap : v - gap;
  return t;
}

template <typename Op>
ProbeFactory binary_broadcast(Op op) {
  return [op](Rng& rng) {
    Probe p;
    const std::size_t r = dim(rng, 1, 4), c = dim(rng, 1, 4);
    Parameter& a = p.input("a", {r, c}, rng);
    Parameter& b = p.input("b", broadcast_shape(r, c, rng), rng);
    const std::uint64_t s = rng.next_u64();
    p.loss = [&a, &b, op, s](Tape& t) {
      Rng w(s);
      return weighted_sum(op(t.param(a), t.param(b)), w);
    };
    return p;
  };
}

template <typename Op>
ProbeFactory unary(Op op, double gap = 0.0) {
  return [op, gap](Rng& rng) {
    Probe p;
    Parameter& a = p.input("a", {dim(rng, 1, 4), dim(rng, 1, 5)}, rng, 2.0);
    if (gap > 0) a.value = away_from_zero(a.value, gap);
    const std::uint64_t s = rng.next_u64();
    p.loss = [&a, op, s](Tape& t) {
      Rng w(s);
      return weighted_sum(op(t.param(a)), w);
    };
    return p;
  };
}

Adjacency random_adjacency(std::size_t J, Rng& rng) {
  Adjacency adj(J);
  for (std::size_t i = 0; i < J; ++i) {
    adj[i].push_back(i);
    for (std::size_t j = 0; j < J; ++j) {
      if (j != i && rng.bernoulli(0.4)) adj[i].push_back(j);
    }
  }
  return adj;
}

std::vector<std::pair<std::string, ProbeFactory>> build_checks() {
  std::vector<std::pair<std::string, ProbeFactory>> c;

  c.emplace_back("matmul", [](Rng& rng) {
    Probe p;
    const std::size_t m = dim(rng, 1, 4), k = dim(rng, 1, 4), n = dim(rng, 1, 4);
    Parameter& a = p.input("a", {m, k}, rng);
    Parameter& b = p.input("b", {k, n}, rng);
    const auto s = rng.next_u64();
    p.loss = [&a, &b, s](Tape& t) { Rng w(s); return weighted_sum(matmul(t.param(a), t.param(b)), w); };
    return p;
  });
  c.emplace_back("matmul_nt", [](Rng& rng) {
    Probe p;
    const std::size_t m = dim(rng, 1, 4), k = dim(rng, 1, 4), n = dim(rng, 1, 4);
    Parameter& a = p.input("a", {m, k}, rng);
    Parameter& b = p.input("b", {n, k}, rng);
    const auto s = rng.next_u64();
    p.loss = [&a, &b, s](Tape& t) { Rng w(s); return weighted_sum(matmul_nt(t.param(a), t.param(b)), w); };
    return p;
  });
  c.emplace_back("transpose", unary([](Var a) { return transpose(a); }));
  c.emplace_back("linear", [](Rng& rng) {
    Probe p;
    const std::size_t m = dim(rng, 1, 4), k = dim(rng, 1, 4), n = dim(rng, 1, 4);
    Parameter& x = p.input("x", {m, k}, rng);
    Parameter& w = p.input("w", {k, n}, rng);
    const bool bias = rng.bernoulli(0.5);
    Parameter* b = bias ? &p.input("b", {1, n}, rng) : nullptr;
    const auto s = rng.next_u64();
    p.loss = [&x, &w, b, s](Tape& t) {
      Rng r(s);
      return weighted_sum(linear(t.param(x), t.param(w), b ? t.param(*b) : Var{}), r);
    };
    return p;
  });
  c.emplace_back("add", binary_broadcast([](Var a, Var b) { return add(a, b); }));
  c.emplace_back("sub", binary_broadcast([](Var a, Var b) { return sub(a, b); }));
  c.emplace_back("mul", binary_broadcast([](Var a, Var b) { return mul(a, b); }));
  c.emplace_back("scale", unary([](Var a) { return scale(a, -1.7); }));
  c.emplace_back("add_scalar", unary([](Var a) { return mul(add_scalar(a, 0.3), a); }));
  c.emplace_back("sigmoid", unary([](Var a) { return sigmoid(a); }));
  c.emplace_back("tanh", unary([](Var a) { return tanh(a); }));
  c.emplace_back("relu", unary([](Var a) { return relu(a); }, 0.01));
  c.emplace_back("reshape", [](Rng& rng) {
    Probe p;
    const std::size_t r = dim(rng, 1, 4), cc = dim(rng, 1, 4);
    Parameter& a = p.input("a", {r, cc}, rng);
    const auto s = rng.next_u64();
    p.loss = [&a, r, cc, s](Tape& t) {
      Rng w(s);
      return weighted_sum(reshape(t.param(a), {cc, r}), w);
    };
    return p;
  });
  c.emplace_back("concat_cols", [](Rng& rng) {
    Probe p;
    const std::size_t r = dim(rng, 1, 4);
    Parameter& a = p.input("a", {r, dim(rng, 1, 3)}, rng);
    Parameter& b = p.input("b", {r, dim(rng, 1, 3)}, rng);
    const auto s = rng.next_u64();
    p.loss = [&a, &b, s](Tape& t) {
      Rng w(s);
      return weighted_sum(concat_cols({t.param(a), t.param(b), t.param(a)}), w);
    };
    return p;
  });
  c.emplace_back("concat_rows", [](Rng& rng) {
    Probe p;
    const std::size_t cc = dim(rng, 1, 4);
    Parameter& a = p.input("a", {dim(rng, 1, 3), cc}, rng);
    Parameter& b = p.input("b", {dim(rng, 1, 3), cc}, rng);
    const auto s = rng.next_u64();
    p.loss = [&a, &b, s](Tape& t) {
      Rng w(s);
      return weighted_sum(concat_rows({t.param(b), t.param(a), t.param(b)}), w);
    };
    return p;
  });
  c.emplace_back("slice_cols", [](Rng& rng) {
    Probe p;
    const std::size_t cc = dim(rng, 2, 5);
    Parameter& a = p.input("a", {dim(rng, 1, 4), cc}, rng);
    const std::size_t begin = rng.index(cc), count = 1 + rng.index(cc - begin);
    const auto s = rng.next_u64();
    p.loss = [&a, begin, count, s](Tape& t) {
      Rng w(s);
      return weighted_sum(slice_cols(t.param(a), begin, count), w);
    };
    return p;
  });
  c.emplace_back("slice_rows", [](Rng& rng) {
    Probe p;
    const std::size_t r = dim(rng, 2, 5);
    Parameter& a = p.input("a", {r, dim(rng, 1, 4)}, rng);
    const std::size_t begin = rng.index(r), count = 1 + rng.index(r - begin);
    const auto s = rng.next_u64();
    p.loss = [&a, begin, count, s](Tape& t) {
      Rng w(s);
      return weighted_sum(slice_rows(t.param(a), begin, count), w);
    };
    return p;
  });
  c.emplace_back("repeat_rows", [](Rng& rng) {
    Probe p;
    Parameter& a = p.input("a", {1, dim(rng, 1, 4)}, rng);
    const std::size_t m = dim(rng, 1, 4);
    const auto s = rng.next_u64();
    p.loss = [&a, m, s](Tape& t) { Rng w(s); return weighted_sum(repeat_rows(t.param(a), m), w); };
    return p;
  });
  c.emplace_back("gather_rows", [](Rng& rng) {
    Probe p;
    const std::size_t n = dim(rng, 2, 5);
    Parameter& table = p.input("table", {n, dim(rng, 1, 4)}, rng);
    std::vector<std::size_t> ids(dim(rng, 1, 6));
    for (auto& i : ids) i = rng.index(n);
    const auto s = rng.next_u64();
    p.loss = [&table, ids, s](Tape& t) {
      Rng w(s);
      return weighted_sum(gather_rows(t.param(table), ids), w);
    };
    return p;
  });
  c.emplace_back("sum", unary([](Var a) { return mul(sum(a), sum(a)); }));
  c.emplace_back("mean", unary([](Var a) { return mul(mean(a), sum(a)); }));
  c.emplace_back("group_mean", [](Rng& rng) {
    Probe p;
    const std::size_t g = dim(rng, 1, 3), k = dim(rng, 1, 3);
    Parameter& a = p.input("a", {g * k, dim(rng, 1, 4)}, rng);
    const auto s = rng.next_u64();
    p.loss = [&a, g, s](Tape& t) { Rng w(s); return weighted_sum(group_mean(t.param(a), g), w); };
    return p;
  });
  c.emplace_back("softmax", [](Rng& rng) {
    Probe p;
    const std::size_t cc = dim(rng, 1, 6);
    Parameter& a = p.input("a", {dim(rng, 1, 4), cc}, rng, 3.0);
    const Mask m = rng.bernoulli(0.5) ? random_mask(cc, rng) : Mask{};
    const auto s = rng.next_u64();
    p.loss = [&a, m, s](Tape& t) { Rng w(s); return weighted_sum(softmax(t.param(a), m), w); };
    return p;
  });
  c.emplace_back("layer_norm", [](Rng& rng) {
    Probe p;
    const std::size_t cc = dim(rng, 2, 6);
    Parameter& x = p.input("x", {dim(rng, 1, 4), cc}, rng, 2.0);
    Parameter& g = p.input("gamma", {1, cc}, rng);
    Parameter& b = p.input("beta", {1, cc}, rng);
    const auto s = rng.next_u64();
    p.loss = [&x, &g, &b, s](Tape& t) {
      Rng w(s);
      return weighted_sum(layer_norm(t.param(x), t.param(g), t.param(b)), w);
    };
    return p;
  });
  c.emplace_back("batch_norm", [](Rng& rng) {
    Probe p;
    const std::size_t cc = dim(rng, 1, 4);
    Parameter& x = p.input("x", {dim(rng, 2, 6), cc}, rng, 2.0);
    Parameter& g = p.input("gamma", {1, cc}, rng);
    Parameter& b = p.input("beta", {1, cc}, rng);
    Parameter& rm = p.store->add("running_mean", Tensor({1, cc}), false);
    Parameter& rv = p.store->add("running_var", Tensor({1, cc}, 1.0), false);
    const auto s = rng.next_u64();
    p.loss = [&x, &g, &b, &rm, &rv, s](Tape& t) {
      Rng w(s);
      return weighted_sum(batch_norm(t.param(x), t.param(g), t.param(b), rm, rv, {}), w);
    };
    return p;
  });
  c.emplace_back("graph_propagate", [](Rng& rng) {
    Probe p;
    const std::size_t J = dim(rng, 1, 5);
    const Adjacency adj = random_adjacency(J, rng);
    Parameter& x = p.input("x", {J * dim(rng, 1, 3), dim(rng, 1, 3)}, rng);
    const auto s = rng.next_u64();
    p.loss = [&x, adj, s](Tape& t) { Rng w(s); return weighted_sum(graph_propagate(t.param(x), adj), w); };
    return p;
  });
  c.emplace_back("gru_forward", [](Rng& rng) {
    Probe p;
    const std::size_t T = dim(rng, 1, 4), din = dim(rng, 1, 3), d = dim(rng, 1, 3);
    Parameter& x = p.input("x", {T, din}, rng);
    Parameter& h0 = p.input("h0", {1, d}, rng, 0.5);
    Parameter& wih = p.input("w_ih", {din, 3 * d}, rng);
    Parameter& whh = p.input("w_hh", {d, 3 * d}, rng);
    Parameter& bih = p.input("b_ih", {1, 3 * d}, rng);
    Parameter& bhh = p.input("b_hh", {1, 3 * d}, rng);
    const auto s = rng.next_u64();
    p.loss = [&, s](Tape& t) {
      Rng w(s);
      GruOutput o = gru_forward(t.param(x), t.param(h0),
                                {t.param(wih), t.param(whh), t.param(bih), t.param(bhh)});
      return add(weighted_sum(o.outputs, w), weighted_sum(o.last, w));
    };
    return p;
  });
  c.emplace_back("cross_entropy", [](Rng& rng) {
    Probe p;
    const std::size_t n = dim(rng, 1, 6);
    Parameter& a = p.input("logits", {1, n}, rng, 2.0);
    const std::size_t target = rng.index(n);
    p.loss = [&a, target](Tape& t) { return cross_entropy(softmax(t.param(a)), target); };
    return p;
  });
  c.emplace_back("binary_cross_entropy", [](Rng& rng) {
    Probe p;
    const std::size_t n = dim(rng, 1, 6);
    Parameter& a = p.input("logits", {n, 1}, rng, 2.0);
    Tensor y({n, 1});
    for (auto& v : y.storage()) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const Mask m = rng.bernoulli(0.5) ? random_mask(n, rng) : Mask{};
    p.loss = [&a, y, m](Tape& t) { return binary_cross_entropy(sigmoid(t.param(a)), y, m); };
    return p;
  });
  c.emplace_back("kl_divergence", [](Rng& rng) {
    Probe p;
    const std::size_t n = dim(rng, 1, 6);
    Parameter& a = p.input("p_logits", {1, n}, rng, 2.0);
    Parameter& b = p.input("q_logits", {1, n}, rng, 2.0);
    p.loss = [&a, &b](Tape& t) { return kl_divergence(softmax(t.param(a)), softmax(t.param(b))); };
    return p;
  });

  // Composed submodules ------------------------------------------------------
  c.emplace_back("gcn_layer", [](Rng& rng) {
    Probe p;
    const std::size_t din = dim(rng, 1, 3), d = dim(rng, 1, 3), n = dim(rng, 1, 2);
    Parameter& x = p.input("x", {n * kJoints, din}, rng);
    GcnStack stack = GcnStack::make(*p.store, "gcn", din, d, 1, skeleton_adjacency(), rng);
    GcnLayer layer = stack.layers.front();
    for (auto* q : {layer.weight, layer.gamma, layer.beta}) {
      p.checked.push_back(p.store->find(q->name));
    }
    p.store->find(layer.gamma->name)->value = uniform_tensor({1, d}, 1.0, rng);
    const auto s = rng.next_u64();
    const Adjacency adj = stack.adj;
    p.loss = [&x, layer, adj, s](Tape& t) {
      Rng w(s);
      return weighted_sum(gcn_layer_forward(t, t.param(x), adj, layer, true), w);
    };
    return p;
  });
  c.emplace_back("sgpa_block", [](Rng& rng) {
    Probe p;
    const std::size_t heads = dim(rng, 1, 2), d = heads * dim(rng, 1, 2);
    const std::size_t T = dim(rng, 1, 4), N = dim(rng, 1, 3);
    Parameter& x = p.input("x", {T, d}, rng);
    Parameter& ctx = p.input("c", {N, d}, rng);
    SgpaBlock block = SgpaBlock::make(*p.store, "sgpa", d, heads, rng);
    for (auto& q : p.store->all()) {
      if (q.name.rfind("sgpa", 0) == 0) {
        q.value = uniform_tensor(q.value.shape(), 0.8, rng);
        p.checked.push_back(&q);
      }
    }
    const Mask sm = rng.bernoulli(0.5) ? random_mask(T, rng) : Mask{};
    const Mask cm = rng.bernoulli(0.5) ? random_mask(N, rng) : Mask{};
    const auto s = rng.next_u64();
    p.loss = [&x, &ctx, block, sm, cm, s](Tape& t) {
      Rng w(s);
      return weighted_sum(block(t, t.param(x), t.param(ctx), sm, cm), w);
    };
    return p;
  });
  c.emplace_back("cqa", [](Rng& rng) {
    Probe p;
    const std::size_t d = dim(rng, 1, 3), T = dim(rng, 1, 4), N = dim(rng, 1, 3);
    Parameter& M = p.input("M", {T, d}, rng);
    Parameter& Q = p.input("Q", {N, d}, rng);
    FusionParams f = FusionParams::make(*p.store, "fusion", d, rng);
    for (auto& q : p.store->all()) {
      if (q.name.rfind("fusion", 0) == 0) {
        q.value = uniform_tensor(q.value.shape(), 0.8, rng);
        p.checked.push_back(&q);
      }
    }
    const Mask mm = rng.bernoulli(0.5) ? random_mask(T, rng) : Mask{};
    const Mask qm = rng.bernoulli(0.5) ? random_mask(N, rng) : Mask{};
    const auto s = rng.next_u64();
    p.loss = [&M, &Q, f, mm, qm, s](Tape& t) {
      Rng w(s);
      Var Mq = cqa_fuse(t, t.param(M), t.param(Q), f, mm, qm);
      Var q = additive_attention_pool(t, t.param(Q), f, qm);
      return weighted_sum(attach_sentence(t, Mq, q, f), w);
    };
    return p;
  });
  c.emplace_back("matcher", [](Rng& rng) {
    Probe p;
    const std::size_t d = dim(rng, 1, 4), T = dim(rng, 2, 6);
    Parameter& Mq = p.input("Mq", {T, d}, rng);
    MatcherParams m = MatcherParams::make(*p.store, "matcher", d, 8, rng);
    for (auto& q : p.store->all()) {
      if (q.name.rfind("matcher", 0) == 0) p.checked.push_back(&q);
    }
    const std::size_t i_s = rng.index(T), i_e = i_s + rng.index(T - i_s);
    const Labels Y = highlight_labels(T, i_s, i_e);
    const Labels mask = perturbation_mask(T, rng.uniform(), rng);
    const auto s = rng.next_u64();
    p.loss = [&Mq, m, Y, mask, s](Tape& t) {
      Rng w(s);
      Var E = build_label_embeddings(t, Y, m);
      Var pad = slice_rows(t.param(*m.labels), kHighlightPad, 1);
      Var S = highlight_scores(t, t.param(Mq), perturb_embeddings(E, mask, pad), m);
      return add(scale(seq_loss(S, Y), 5.0), weighted_sum(apply_highlight(S, t.param(Mq)), w));
    };
    return p;
  });
  c.emplace_back("predictor_losses", [](Rng& rng) {
    Probe p;
    const std::size_t d = dim(rng, 1, 3), T = dim(rng, 2, 5);
    Parameter& Mt = p.input("Mt", {T, d}, rng);
    PredictorParams pr = PredictorParams::make(*p.store, "predictor", d, rng);
    for (auto& q : p.store->all()) {
      if (q.name.rfind("predictor", 0) == 0) {
        q.value = uniform_tensor(q.value.shape(), 0.8, rng);
        p.checked.push_back(&q);
      }
    }
    const std::size_t i_s = rng.index(T), i_e = i_s + rng.index(T - i_s);
    const std::size_t fs = flip_index(i_s, T, 0.5, rng), fe = flip_index(i_e, T, 0.5, rng);
    // The alignment target is a stopped gradient, so it enters as a constant
    // computed once at the unperturbed point.
    Tensor rec_s, rec_e;
    {
      Tape t;
      PartOutput rec = recover_part(t, t.param(Mt), fs, fe, pr);
      rec_s = rec.start.probs.value();
      rec_e = rec.end.probs.value();
    }
    p.loss = [&Mt, pr, i_s, i_e, fs, fe, rec_s, rec_e](Tape& t) {
      PartOutput pred = predict_part(t, t.param(Mt), pr);
      PartOutput rec = recover_part(t, t.param(Mt), fs, fe, pr);
      Var l = add(span_loss(pred.start.probs, i_s), span_loss(pred.end.probs, i_e));
      l = add(l, add(span_loss(rec.start.probs, i_s), span_loss(rec.end.probs, i_e)));
      l = add(l, align_loss(pred.start.probs, t.constant(rec_s)));
      return add(l, align_loss(pred.end.probs, t.constant(rec_e)));
    };
    return p;
  });
  return c;
}

const std::vector<std::pair<std::string, ProbeFactory>>& checks() {
  static const auto all = build_checks();
  return all;
}

}  // namespace

std::vector<std::string> gradient_suite_names() {
  std::vector<std::string> out;
  for (const auto& [name, f] : checks()) out.push_back(name);
  return out;
}

std::vector<GradSuiteResult> run_gradient_suite(const GradSuiteOptions& opts,
                                                const std::vector<std::string>& only) {
  for (const auto& n : only) {
    const auto names = gradient_suite_names();
    if (std::find(names.begin(), names.end(), n) == names.end()) {
      throw ValidationError("unknown gradient check '" + n + "'");
    }
  }
  std::vector<GradSuiteResult> out;
  for (std::size_t ci = 0; ci < checks().size(); ++ci) {
    const auto& [name, factory] = checks()[ci];
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    GradSuiteResult r;
    r.name = name;
    for (std::size_t k = 0; k < opts.cases; ++k) {
      Rng rng = Rng::stream(opts.seed, ci, k);
      Probe probe = factory(rng);
      const GradCheckResult g = finite_diff_check(probe.loss, probe.checked, opts.eps);
      r.coordinates += g.coordinates;
      if (r.cases == 0 || g.max_rel_error > r.max_rel_error) {
        r.max_rel_error = g.max_rel_error;
        r.worst = "case " + std::to_string(k) + " " + g.worst;
      }
      ++r.cases;
    }
    r.passed = r.max_rel_error <= opts.tolerance;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(r));
  }
  return out;
}

std::string gradient_suite_table(const std::vector<GradSuiteResult>& results, double tolerance) {
  std::ostringstream os;
  char line[200];
  std::snprintf(line, sizeof line, "%-22s %6s %8s %12s %8s  %s\n", "check", "cases", "coords",
                "max_rel_err", "seconds", "status");
  os << line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-22s %6zu %8zu %12.3e %8.2f  %s\n", r.name.c_str(),
                  r.cases, r.coordinates, r.max_rel_error, r.seconds,
                  r.max_rel_error <= tolerance ? "PASS" : "FAIL");
    os << line;
  }
  return os.str();
}

}  // namespace tslm
