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

#include "tslm/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "tslm/errors.hpp"

namespace tslm::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap view(const Tensor& t) {
  return ConstMatMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

MatMap view(Tensor& t) {
  return MatMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

[[noreturn]] void dim_error(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

Tape& same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) {
    throw std::logic_error("operands recorded on different tapes");
  }
  return a.tape();
}

// How operand b is broadcast against a.
struct Broadcast {
  bool row_bcast;  // b has a single row
  bool col_bcast;  // b has a single column
};

Broadcast broadcast_of(const char* op, const Tensor& a, const Tensor& b) {
  const bool rows_ok = b.rows() == a.rows() || b.rows() == 1;
  const bool cols_ok = b.cols() == a.cols() || b.cols() == 1;
  if (!rows_ok || !cols_ok || b.size() == 0) dim_error(op, a, b);
  return {b.rows() == 1 && a.rows() != 1, b.cols() == 1 && a.cols() != 1};
}

inline std::size_t bidx(const Broadcast& bc, std::size_t bcols, std::size_t r,
                        std::size_t c) {
  return (bc.row_bcast ? 0 : r) * bcols + (bc.col_bcast ? 0 : c);
}

template <typename F>
Var unary(Var a, F&& f, std::function<double(double x, double y)> dfdx) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  const NodeId ai = a.id();
  return a.tape().record(std::move(out), {a}, [ai, dfdx](Tape& t, NodeId self) {
    if (!t.needs_grad(ai)) return;
    const Tensor& x = t.value(ai);
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_mut(ai);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[i] * dfdx(x[i], y[i]);
  });
}

inline double clamp_prob(double p) {
  return std::clamp(p, kLogFloor, 1.0 - kLogFloor);
}

}  // namespace

// Linear algebra -------------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) dim_error("matmul", av, bv);
  Tensor out({av.rows(), bv.cols()});
  if (out.size() > 0) view(out).noalias() = view(av) * view(bv);
  const NodeId ai = a.id(), bi = b.id();
  return tape.record(std::move(out), {a, b}, [ai, bi](Tape& t, NodeId self) {
    const auto g = view(t.grad(self));
    if (t.needs_grad(ai)) {
      view(t.grad_mut(ai)).noalias() += g * view(t.value(bi)).transpose();
    }
    if (t.needs_grad(bi)) {
      view(t.grad_mut(bi)).noalias() += view(t.value(ai)).transpose() * g;
    }
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) dim_error("matmul_nt", av, bv);
  Tensor out({av.rows(), bv.rows()});
  if (out.size() > 0) view(out).noalias() = view(av) * view(bv).transpose();
  const NodeId ai = a.id(), bi = b.id();
  return tape.record(std::move(out), {a, b}, [ai, bi](Tape& t, NodeId self) {
    const auto g = view(t.grad(self));
    if (t.needs_grad(ai)) view(t.grad_mut(ai)).noalias() += g * view(t.value(bi));
    if (t.needs_grad(bi)) {
      view(t.grad_mut(bi)).noalias() += g.transpose() * view(t.value(ai));
    }
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  Tensor out({av.cols(), av.rows()});
  view(out) = view(av).transpose();
  const NodeId ai = a.id();
  return a.tape().record(std::move(out), {a}, [ai](Tape& t, NodeId self) {
    if (t.needs_grad(ai)) view(t.grad_mut(ai)) += view(t.grad(self)).transpose();
  });
}

Var linear(Var x, Var w, Var b) {
  Tape& tape = same_tape(x, w);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.cols() != wv.rows()) dim_error("linear", xv, wv);
  const std::size_t m = xv.rows(), n = wv.cols();
  Tensor out({m, n});
  view(out).noalias() = view(xv) * view(wv);
  if (b.valid()) {
    same_tape(x, b);
    const Tensor& bv = b.value();
    if (bv.size() != n) dim_error("linear bias", out, bv);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bv[c];
    }
  }
  const NodeId xi = x.id(), wi = w.id();
  const bool has_bias = b.valid();
  const NodeId bi = has_bias ? b.id() : 0;
  return tape.record(std::move(out), {x, w, b},
                     [xi, wi, bi, has_bias, m, n](Tape& t, NodeId self) {
                       const auto g = view(t.grad(self));
                       if (t.needs_grad(xi)) {
                         view(t.grad_mut(xi)).noalias() +=
                             g * view(t.value(wi)).transpose();
                       }
                       if (t.needs_grad(wi)) {
                         view(t.grad_mut(wi)).noalias() +=
                             view(t.value(xi)).transpose() * g;
                       }
                       if (has_bias && t.needs_grad(bi)) {
                         Tensor& gb = t.grad_mut(bi);
                         const Tensor& gs = t.grad(self);
                         for (std::size_t r = 0; r < m; ++r) {
                           for (std::size_t c = 0; c < n; ++c) gb[c] += gs[r * n + c];
                         }
                       }
                     });
}

// Elementwise ----------------------------------------------------------------

namespace {

Var add_impl(Var a, Var b, double sign) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast bc = broadcast_of(sign > 0 ? "add" : "sub", av, bv);
  const std::size_t m = av.rows(), n = av.cols(), bn = bv.cols();
  Tensor out(av.shape());
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      out[r * n + c] = av[r * n + c] + sign * bv[bidx(bc, bn, r, c)];
    }
  }
  const NodeId ai = a.id(), bi = b.id();
  return tape.record(std::move(out), {a, b},
                     [ai, bi, bc, m, n, bn, sign](Tape& t, NodeId self) {
                       const Tensor& g = t.grad(self);
                       if (t.needs_grad(ai)) {
                         Tensor& ga = t.grad_mut(ai);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                       }
                       if (t.needs_grad(bi)) {
                         Tensor& gb = t.grad_mut(bi);
                         for (std::size_t r = 0; r < m; ++r) {
                           for (std::size_t c = 0; c < n; ++c) {
                             gb[bidx(bc, bn, r, c)] += sign * g[r * n + c];
                           }
                         }
                       }
                     });
}

}  // namespace

Var add(Var a, Var b) { return add_impl(a, b, 1.0); }
Var sub(Var a, Var b) { return add_impl(a, b, -1.0); }

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast bc = broadcast_of("mul", av, bv);
  const std::size_t m = av.rows(), n = av.cols(), bn = bv.cols();
  Tensor out(av.shape());
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      out[r * n + c] = av[r * n + c] * bv[bidx(bc, bn, r, c)];
    }
  }
  const NodeId ai = a.id(), bi = b.id();
  return tape.record(std::move(out), {a, b}, [ai, bi, bc, m, n, bn](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(ai);
    const Tensor& y = t.value(bi);
    if (t.needs_grad(ai)) {
      Tensor& ga = t.grad_mut(ai);
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
          ga[r * n + c] += g[r * n + c] * y[bidx(bc, bn, r, c)];
        }
      }
    }
    if (t.needs_grad(bi)) {
      Tensor& gb = t.grad_mut(bi);
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
          gb[bidx(bc, bn, r, c)] += g[r * n + c] * x[r * n + c];
        }
      }
    }
  });
}

Var scale(Var a, double c) {
  return unary(a, [c](double x) { return c * x; },
               [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary(a, [c](double x) { return x + c; },
               [](double, double) { return 1.0; });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0 ? x : 0.0; },
               [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var stop_gradient(Var a) { return a.tape().constant(a.value()); }

// Shape ----------------------------------------------------------------------

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const NodeId ai = a.id();
  return a.tape().record(std::move(out), {a}, [ai](Tape& t, NodeId self) {
    if (!t.needs_grad(ai)) return;
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_mut(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  Tape& tape = parts.front().tape();
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  for (const Var& p : parts) {
    if (p.rows() != m) dim_error("concat_cols", parts.front().value(), p.value());
    n += p.cols();
  }
  Tensor out({m, n});
  std::vector<NodeId> ids;
  std::vector<std::size_t> widths;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    const std::size_t w = v.cols();
    for (std::size_t r = 0; r < m; ++r) {
      std::copy_n(v.data() + r * w, w, out.data() + r * n + off);
    }
    off += w;
    ids.push_back(p.id());
    widths.push_back(w);
  }
  return tape.record(std::move(out), parts, [ids, widths, m, n](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const std::size_t w = widths[k];
      if (t.needs_grad(ids[k])) {
        Tensor& gp = t.grad_mut(ids[k]);
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < w; ++c) gp[r * w + c] += g[r * n + off + c];
        }
      }
      off += w;
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  Tape& tape = parts.front().tape();
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  for (const Var& p : parts) {
    if (p.cols() != n) dim_error("concat_rows", parts.front().value(), p.value());
    m += p.rows();
  }
  Tensor out({m, n});
  std::vector<NodeId> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::copy_n(p.value().data(), p.value().size(), out.data() + off);
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.value().size();
  }
  return tape.record(std::move(out), parts, [ids, offsets](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.needs_grad(ids[k])) continue;
      Tensor& gp = t.grad_mut(ids[k]);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offsets[k] + i];
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  if (begin + count > n) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + ", +" +
                         std::to_string(count) + ") out of " + shape_str(av.shape()));
  }
  Tensor out({m, count});
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(av.data() + r * n + begin, count, out.data() + r * count);
  }
  const NodeId ai = a.id();
  return a.tape().record(std::move(out), {a}, [ai, m, n, begin, count](Tape& t, NodeId self) {
    if (!t.needs_grad(ai)) return;
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_mut(ai);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < count; ++c) ga[r * n + begin + c] += g[r * count + c];
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  if (begin + count > m) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + ", +" +
                         std::to_string(count) + ") out of " + shape_str(av.shape()));
  }
  Tensor out({count, n});
  std::copy_n(av.data() + begin * n, count * n, out.data());
  const NodeId ai = a.id();
  return a.tape().record(std::move(out), {a}, [ai, n, begin](Tape& t, NodeId self) {
    if (!t.needs_grad(ai)) return;
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_mut(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * n + i] += g[i];
  });
}

Var repeat_rows(Var row, std::size_t m) {
  const Tensor& rv = row.value();
  if (rv.rows() != 1) throw DimensionError("repeat_rows expects one row, got " +
                                           shape_str(rv.shape()));
  const std::size_t n = rv.cols();
  Tensor out({m, n});
  for (std::size_t r = 0; r < m; ++r) std::copy_n(rv.data(), n, out.data() + r * n);
  const NodeId ri = row.id();
  return row.tape().record(std::move(out), {row}, [ri, m, n](Tape& t, NodeId self) {
    if (!t.needs_grad(ri)) return;
    const Tensor& g = t.grad(self);
    Tensor& gr = t.grad_mut(ri);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < n; ++c) gr[c] += g[r * n + c];
    }
  });
}

Var gather_rows(Var table, std::span<const std::size_t> ids) {
  const Tensor& tv = table.value();
  const std::size_t n = tv.cols();
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  Tensor out({idx.size(), n});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= tv.rows()) {
      throw RangeError("gather_rows index " + std::to_string(idx[r]) +
                       " outside table of " + std::to_string(tv.rows()) + " rows");
    }
    std::copy_n(tv.data() + idx[r] * n, n, out.data() + r * n);
  }
  const NodeId ti = table.id();
  return table.tape().record(std::move(out), {table}, [ti, idx, n](Tape& t, NodeId self) {
    if (!t.needs_grad(ti)) return;
    const Tensor& g = t.grad(self);
    Tensor& gt = t.grad_mut(ti);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t c = 0; c < n; ++c) gt[idx[r] * n + c] += g[r * n + c];
    }
  });
}

// Reductions -----------------------------------------------------------------

Var sum(Var a) {
  const Tensor& av = a.value();
  double s = 0.0;
  for (double x : av.values()) s += x;
  const NodeId ai = a.id();
  return a.tape().record(Tensor::scalar(s), {a}, [ai](Tape& t, NodeId self) {
    if (!t.needs_grad(ai)) return;
    const double g = t.grad(self)[0];
    Tensor& ga = t.grad_mut(ai);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var group_mean(Var a, std::size_t group) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  if (group == 0 || m % group != 0) {
    throw DimensionError("group_mean: " + std::to_string(m) +
                         " rows not divisible into groups of " + std::to_string(group));
  }
  const std::size_t k = m / group;
  const double inv = 1.0 / static_cast<double>(group);
  Tensor out({k, n});
  for (std::size_t r = 0; r < m; ++r) {
    const std::size_t o = r / group;
    for (std::size_t c = 0; c < n; ++c) out[o * n + c] += av[r * n + c] * inv;
  }
  const NodeId ai = a.id();
  return a.tape().record(std::move(out), {a}, [ai, group, m, n, inv](Tape& t, NodeId self) {
    if (!t.needs_grad(ai)) return;
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_mut(ai);
    for (std::size_t r = 0; r < m; ++r) {
      const std::size_t o = r / group;
      for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += g[o * n + c] * inv;
    }
  });
}

// Normalization and attention --------------------------------------------------

Var softmax(Var logits, const Mask& valid) {
  const Tensor& lv = logits.value();
  const std::size_t m = lv.rows(), n = lv.cols();
  if (!valid.empty() && valid.size() != n) {
    throw DimensionError("softmax mask of length " + std::to_string(valid.size()) +
                         " for rows of length " + std::to_string(n));
  }
  auto ok = [&valid](std::size_t c) { return valid.empty() || valid[c] != 0; };
  Tensor out(lv.shape());
  for (std::size_t r = 0; r < m; ++r) {
    const double* x = lv.data() + r * n;
    double* y = out.data() + r * n;
    double mx = -INFINITY;
    for (std::size_t c = 0; c < n; ++c) {
      if (ok(c)) mx = std::max(mx, x[c]);
    }
    if (mx == -INFINITY) {
      throw DegenerateRowError("softmax row " + std::to_string(r) +
                               " has no valid position");
    }
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      y[c] = ok(c) ? std::exp(x[c] - mx) : 0.0;
      z += y[c];
    }
    for (std::size_t c = 0; c < n; ++c) y[c] /= z;
  }
  const NodeId li = logits.id();
  return logits.tape().record(std::move(out), {logits}, [li, m, n](Tape& t, NodeId self) {
    if (!t.needs_grad(li)) return;
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& gl = t.grad_mut(li);
    for (std::size_t r = 0; r < m; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * y[r * n + c];
      for (std::size_t c = 0; c < n; ++c) {
        gl[r * n + c] += y[r * n + c] * (g[r * n + c] - dot);
      }
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Tape& tape = same_tape(x, gamma);
  same_tape(x, beta);
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (gamma.value().size() != n || beta.value().size() != n) {
    dim_error("layer_norm", xv, gamma.value());
  }
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor out(xv.shape());
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(m);
  for (std::size_t r = 0; r < m; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += xv[r * n + c];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double d = xv[r * n + c] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat[r * n + c] = (xv[r * n + c] - mu) * inv_std[r];
      out[r * n + c] = xhat[r * n + c] * gv[c] + bv[c];
    }
  }
  const NodeId xi = x.id(), gi = gamma.id(), bi = beta.id();
  return tape.record(
      std::move(out), {x, gamma, beta},
      [xi, gi, bi, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        const Tensor& gv = t.value(gi);
        if (t.needs_grad(gi) || t.needs_grad(bi)) {
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < n; ++c) {
              if (t.needs_grad(gi)) t.grad_mut(gi)[c] += g[r * n + c] * xhat[r * n + c];
              if (t.needs_grad(bi)) t.grad_mut(bi)[c] += g[r * n + c];
            }
          }
        }
        if (!t.needs_grad(xi)) return;
        Tensor& gx = t.grad_mut(xi);
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < m; ++r) {
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t c = 0; c < n; ++c) {
            const double dxh = g[r * n + c] * gv[c];
            s1 += dxh;
            s2 += dxh * xhat[r * n + c];
          }
          for (std::size_t c = 0; c < n; ++c) {
            const double dxh = g[r * n + c] * gv[c];
            gx[r * n + c] +=
                inv_std[r] * (dxh - s1 * inv_n - xhat[r * n + c] * s2 * inv_n);
          }
        }
      });
}

Var batch_norm(Var x, Var gamma, Var beta, Parameter& running_mean,
               Parameter& running_var, const BatchNormOptions& opts) {
  Tape& tape = same_tape(x, gamma);
  same_tape(x, beta);
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (gamma.value().size() != n || beta.value().size() != n ||
      running_mean.value.size() != n || running_var.value.size() != n) {
    dim_error("batch_norm", xv, gamma.value());
  }
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  std::vector<double> mu(n, 0.0), inv_std(n);
  if (opts.training) {
    if (m == 0) throw DimensionError("batch_norm over zero rows");
    std::vector<double> var(n, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < n; ++c) mu[c] += xv[r * n + c];
    }
    for (auto& v : mu) v /= static_cast<double>(m);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        const double d = xv[r * n + c] - mu[c];
        var[c] += d * d;
      }
    }
    for (std::size_t c = 0; c < n; ++c) {
      const double biased = var[c] / static_cast<double>(m);
      const double unbiased = m > 1 ? var[c] / static_cast<double>(m - 1) : biased;
      inv_std[c] = 1.0 / std::sqrt(biased + opts.eps);
      running_mean.value[c] =
          (1.0 - opts.momentum) * running_mean.value[c] + opts.momentum * mu[c];
      running_var.value[c] =
          (1.0 - opts.momentum) * running_var.value[c] + opts.momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < n; ++c) {
      mu[c] = running_mean.value[c];
      inv_std[c] = 1.0 / std::sqrt(running_var.value[c] + opts.eps);
    }
  }
  Tensor out(xv.shape());
  Tensor xhat(xv.shape());
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      xhat[r * n + c] = (xv[r * n + c] - mu[c]) * inv_std[c];
      out[r * n + c] = xhat[r * n + c] * gv[c] + bv[c];
    }
  }
  const NodeId xi = x.id(), gi = gamma.id(), bi = beta.id();
  const bool training = opts.training;
  return tape.record(
      std::move(out), {x, gamma, beta},
      [xi, gi, bi, m, n, training, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        const Tensor& gv = t.value(gi);
        std::vector<double> sg(n, 0.0), sgx(n, 0.0);
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < n; ++c) {
            sg[c] += g[r * n + c];
            sgx[c] += g[r * n + c] * xhat[r * n + c];
          }
        }
        if (t.needs_grad(gi)) {
          Tensor& gg = t.grad_mut(gi);
          for (std::size_t c = 0; c < n; ++c) gg[c] += sgx[c];
        }
        if (t.needs_grad(bi)) {
          Tensor& gb = t.grad_mut(bi);
          for (std::size_t c = 0; c < n; ++c) gb[c] += sg[c];
        }
        if (!t.needs_grad(xi)) return;
        Tensor& gx = t.grad_mut(xi);
        const double inv_m = 1.0 / static_cast<double>(m);
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < n; ++c) {
            const double k = gv[c] * inv_std[c];
            if (training) {
              gx[r * n + c] += k * (g[r * n + c] - sg[c] * inv_m -
                                    xhat[r * n + c] * sgx[c] * inv_m);
            } else {
              gx[r * n + c] += k * g[r * n + c];
            }
          }
        }
      });
}

Var graph_propagate(Var x, const Adjacency& adj) {
  const Tensor& xv = x.value();
  const std::size_t J = adj.size();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (J == 0 || m % J != 0) {
    throw DimensionError("graph_propagate: " + std::to_string(m) +
                         " rows are not a whole number of " + std::to_string(J) +
                         "-node blocks");
  }
  for (const auto& nb : adj) {
    for (auto j : nb) {
      if (j >= J) throw RangeError("adjacency references node " + std::to_string(j));
    }
  }
  Tensor out(xv.shape());
  for (std::size_t base = 0; base < m; base += J) {
    for (std::size_t i = 0; i < J; ++i) {
      double* o = out.data() + (base + i) * n;
      for (auto j : adj[i]) {
        const double* src = xv.data() + (base + j) * n;
        for (std::size_t c = 0; c < n; ++c) o[c] += src[c];
      }
    }
  }
  const NodeId xi = x.id();
  return x.tape().record(std::move(out), {x}, [xi, adj, J, m, n](Tape& t, NodeId self) {
    if (!t.needs_grad(xi)) return;
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_mut(xi);
    for (std::size_t base = 0; base < m; base += J) {
      for (std::size_t i = 0; i < J; ++i) {
        const double* gi = g.data() + (base + i) * n;
        for (auto j : adj[i]) {
          double* dst = gx.data() + (base + j) * n;
          for (std::size_t c = 0; c < n; ++c) dst[c] += gi[c];
        }
      }
    }
  });
}

// Recurrent ------------------------------------------------------------------

GruOutput gru_forward(Var inputs, Var h0, const GruWeights& w) {
  Tape& tape = same_tape(inputs, h0);
  const Tensor& xv = inputs.value();
  const Tensor& wih = w.w_ih.value();
  const Tensor& whh = w.w_hh.value();
  const Tensor& bih = w.b_ih.value();
  const Tensor& bhh = w.b_hh.value();
  const std::size_t T = xv.rows(), din = xv.cols();
  const std::size_t d = h0.value().size();
  if (wih.rows() != din || wih.cols() != 3 * d) dim_error("gru w_ih", xv, wih);
  if (whh.rows() != d || whh.cols() != 3 * d) dim_error("gru w_hh", h0.value(), whh);
  if (bih.size() != 3 * d || bhh.size() != 3 * d) dim_error("gru bias", wih, bih);

  // Input projections for every step at once: [T x 3d].
  RowMat gx = view(xv) * view(wih);
  for (std::size_t s = 0; s < T; ++s) {
    for (std::size_t k = 0; k < 3 * d; ++k) gx(s, k) += bih[k];
  }
  // Saved per step: r, z, n, hidden projection of the n gate (h W_hn + b_hn).
  RowMat R(T, d), Z(T, d), N(T, d), HN(T, d);
  Tensor out({T, d});
  Eigen::RowVectorXd h = Eigen::Map<const Eigen::RowVectorXd>(h0.value().data(), d);
  const auto whh_m = view(whh);
  for (std::size_t s = 0; s < T; ++s) {
    Eigen::RowVectorXd gh = h * whh_m;
    for (std::size_t k = 0; k < 3 * d; ++k) gh(k) += bhh[k];
    for (std::size_t j = 0; j < d; ++j) {
      const double r = 1.0 / (1.0 + std::exp(-(gx(s, j) + gh(j))));
      const double z = 1.0 / (1.0 + std::exp(-(gx(s, d + j) + gh(d + j))));
      const double nn = std::tanh(gx(s, 2 * d + j) + r * gh(2 * d + j));
      R(s, j) = r;
      Z(s, j) = z;
      N(s, j) = nn;
      HN(s, j) = gh(2 * d + j);
      h(j) = (1.0 - z) * nn + z * h(j);
      out[s * d + j] = h(j);
    }
  }
  const NodeId xi = inputs.id(), hi = h0.id(), wi = w.w_ih.id(), ui = w.w_hh.id(),
               bi = w.b_ih.id(), ci = w.b_hh.id();
  Var outputs = tape.record(
      std::move(out), {inputs, h0, w.w_ih, w.w_hh, w.b_ih, w.b_hh},
      [=, R = std::move(R), Z = std::move(Z), N = std::move(N), HN = std::move(HN)](
          Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        const Tensor& hs = t.value(self);
        const Tensor& h0v = t.value(hi);
        const auto whh_m = view(t.value(ui));
        // Pre-activation gradients for input and hidden projections.
        RowMat dgx(T, 3 * d), dgh(T, 3 * d);
        Eigen::RowVectorXd dh = Eigen::RowVectorXd::Zero(d);
        for (std::size_t s = T; s-- > 0;) {
          for (std::size_t j = 0; j < d; ++j) dh(j) += g[s * d + j];
          for (std::size_t j = 0; j < d; ++j) {
            const double hprev = s == 0 ? h0v[j] : hs[(s - 1) * d + j];
            const double r = R(s, j), z = Z(s, j), nn = N(s, j);
            const double dn = dh(j) * (1.0 - z) * (1.0 - nn * nn);
            const double dz = dh(j) * (hprev - nn) * z * (1.0 - z);
            const double dr = dn * HN(s, j) * r * (1.0 - r);
            dgx(s, j) = dr;
            dgx(s, d + j) = dz;
            dgx(s, 2 * d + j) = dn;
            dgh(s, j) = dr;
            dgh(s, d + j) = dz;
            dgh(s, 2 * d + j) = dn * r;
          }
          // Carry to h_{s-1}: direct path through z plus hidden projections.
          Eigen::RowVectorXd carry = dgh.row(s) * whh_m.transpose();
          for (std::size_t j = 0; j < d; ++j) carry(j) += dh(j) * Z(s, j);
          dh = carry;
        }
        if (t.needs_grad(xi)) {
          view(t.grad_mut(xi)).noalias() += dgx * view(t.value(wi)).transpose();
        }
        if (t.needs_grad(hi)) {
          Tensor& gh0 = t.grad_mut(hi);
          for (std::size_t j = 0; j < d; ++j) gh0[j] += dh(j);
        }
        if (t.needs_grad(wi)) {
          view(t.grad_mut(wi)).noalias() += view(t.value(xi)).transpose() * dgx;
        }
        if (t.needs_grad(ui)) {
          RowMat hprev(T, d);
          for (std::size_t s = 0; s < T; ++s) {
            for (std::size_t j = 0; j < d; ++j) {
              hprev(s, j) = s == 0 ? h0v[j] : hs[(s - 1) * d + j];
            }
          }
          view(t.grad_mut(ui)).noalias() += hprev.transpose() * dgh;
        }
        if (t.needs_grad(bi)) {
          Tensor& gb = t.grad_mut(bi);
          for (std::size_t s = 0; s < T; ++s) {
            for (std::size_t k = 0; k < 3 * d; ++k) gb[k] += dgx(s, k);
          }
        }
        if (t.needs_grad(ci)) {
          Tensor& gc = t.grad_mut(ci);
          for (std::size_t s = 0; s < T; ++s) {
            for (std::size_t k = 0; k < 3 * d; ++k) gc[k] += dgh(s, k);
          }
        }
      });
  Var last = T > 0 ? slice_rows(outputs, T - 1, 1) : h0;
  return {outputs, last};
}

// Losses ---------------------------------------------------------------------

Var cross_entropy(Var pred, std::size_t target) {
  const Tensor& pv = pred.value();
  if (target >= pv.size()) {
    throw RangeError("cross_entropy target " + std::to_string(target) +
                     " outside " + shape_str(pv.shape()));
  }
  const double p = std::max(pv[target], kLogFloor);
  const NodeId pi = pred.id();
  return pred.tape().record(Tensor::scalar(-std::log(p)), {pred},
                            [pi, target](Tape& t, NodeId self) {
                              if (!t.needs_grad(pi)) return;
                              const double pt = t.value(pi)[target];
                              if (pt <= kLogFloor) return;
                              t.grad_mut(pi)[target] -= t.grad(self)[0] / pt;
                            });
}

Var binary_cross_entropy(Var pred, const Tensor& target, const Mask& valid) {
  const Tensor& pv = pred.value();
  if (target.size() != pv.size()) dim_error("binary_cross_entropy", pv, target);
  if (!valid.empty() && valid.size() != pv.size()) {
    throw DimensionError("binary_cross_entropy mask length mismatch");
  }
  std::size_t count = 0;
  double loss = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (!valid.empty() && !valid[i]) continue;
    const double p = clamp_prob(pv[i]);
    const double y = target[i];
    loss -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    ++count;
  }
  if (count == 0) throw DegenerateRowError("binary_cross_entropy with no valid element");
  loss /= static_cast<double>(count);
  const NodeId pi = pred.id();
  return pred.tape().record(
      Tensor::scalar(loss), {pred}, [pi, target, valid, count](Tape& t, NodeId self) {
        if (!t.needs_grad(pi)) return;
        const Tensor& pv = t.value(pi);
        Tensor& gp = t.grad_mut(pi);
        const double g = t.grad(self)[0] / static_cast<double>(count);
        for (std::size_t i = 0; i < pv.size(); ++i) {
          if (!valid.empty() && !valid[i]) continue;
          // Clamped region is flat.
          if (pv[i] <= kLogFloor || pv[i] >= 1.0 - kLogFloor) continue;
          const double y = target[i];
          gp[i] += g * (-y / pv[i] + (1.0 - y) / (1.0 - pv[i]));
        }
      });
}

Var kl_divergence(Var p, Var q) {
  Tape& tape = same_tape(p, q);
  const Tensor& pv = p.value();
  const Tensor& qv = q.value();
  if (pv.size() != qv.size()) dim_error("kl_divergence", pv, qv);
  double kl = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (pv[i] <= 0.0) continue;
    kl += pv[i] * (std::log(std::max(pv[i], kLogFloor)) -
                   std::log(std::max(qv[i], kLogFloor)));
  }
  const NodeId pi = p.id(), qi = q.id();
  return tape.record(Tensor::scalar(kl), {p, q}, [pi, qi](Tape& t, NodeId self) {
    const double g = t.grad(self)[0];
    const Tensor& pv = t.value(pi);
    const Tensor& qv = t.value(qi);
    if (t.needs_grad(pi)) {
      Tensor& gp = t.grad_mut(pi);
      for (std::size_t i = 0; i < pv.size(); ++i) {
        if (pv[i] <= 0.0) continue;
        gp[i] += g * (std::log(std::max(pv[i], kLogFloor)) -
                      std::log(std::max(qv[i], kLogFloor)) + 1.0);
      }
    }
    if (t.needs_grad(qi)) {
      Tensor& gq = t.grad_mut(qi);
      for (std::size_t i = 0; i < pv.size(); ++i) {
        if (pv[i] <= 0.0 || qv[i] <= kLogFloor) continue;
        gq[i] -= g * pv[i] / qv[i];
      }
    }
  });
}

}  // namespace tslm::ad
