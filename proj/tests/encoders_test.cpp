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

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numeric>

#include "tslm/encoders.hpp"
#include "tslm/errors.hpp"
#include "tslm/gradcheck.hpp"
#include "tslm/motion.hpp"
#include "tslm/nn.hpp"

using namespace tslm;
using namespace tslm::ad;

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m(r, c) = t.at(r, c);
  return m;
}

Tensor to_tensor(const Mat& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.at(r, c) = m(r, c);
  return t;
}

Mat row_softmax(const Mat& s) {
  Mat out = s;
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double mx = s.row(r).maxCoeff();
    out.row(r) = (s.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Mat sigmoid_m(const Mat& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

Mat apply_linear(const Linear& l, const Mat& x) {
  Mat y = x * to_mat(l.weight->value);
  if (l.bias) y.rowwise() += to_mat(l.bias->value).row(0);
  return y;
}

// Dense evaluation of one gated block without masks.
Mat sgpa_oracle(const SgpaBlock& b, const Mat& X, const Mat& C) {
  const Eigen::Index d = X.cols();
  const Eigen::Index dh = d / static_cast<Eigen::Index>(b.heads);
  auto attend = [&](const Mat& q, const Mat& k, const Mat& v) {
    Mat out(q.rows(), d);
    for (std::size_t h = 0; h < b.heads; ++h) {
      const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dh;
      Mat w = row_softmax(q.middleCols(c0, dh) * k.middleCols(c0, dh).transpose() /
                          std::sqrt(static_cast<double>(dh)));
      out.middleCols(c0, dh) = w * v.middleCols(c0, dh);
    }
    return out;
  };
  const Mat q = apply_linear(b.q_self, X);
  const Mat ms = attend(q, apply_linear(b.k_self, X), apply_linear(b.v_self, X));
  const Mat mc = attend(q, apply_linear(b.k_cross, C), apply_linear(b.v_cross, C));
  return (sigmoid_m(apply_linear(b.gate_cross, mc)).array() * ms.array() +
          sigmoid_m(apply_linear(b.gate_self, ms)).array() * mc.array())
      .matrix();
}

void zero_linear(ParameterStore& store, const Linear& l) {
  store.find(l.weight->name)->value.fill(0.0);
  if (l.bias) store.find(l.bias->name)->value.fill(0.0);
}

Tensor eval_block(const SgpaBlock& b, const Tensor& X, const Tensor& C, const Mask& sm = {},
                  const Mask& cm = {}) {
  Tape tape;
  return b(tape, tape.constant(X), tape.constant(C), sm, cm).value();
}

void expect_near(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
}

Adjacency permute_adjacency(const Adjacency& adj, const std::vector<std::size_t>& perm) {
  // New node i is old node perm[i].
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
  Adjacency out(adj.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    for (auto j : adj[perm[i]]) out[i].push_back(inv[j]);
  }
  return out;
}

}  // namespace

TEST(GcnLayerTest, ZeroInputGivesShift) {
  ParameterStore store;
  Rng rng(1);
  GcnStack s = GcnStack::make(store, "g", 3, 4, 1, skeleton_adjacency(), rng);
  store.find("g.0.bn.beta")->value = Tensor::row({0.1, -0.2, 0.3, 0.4});
  Tape tape;
  Tensor out = gcn_layer_forward(tape, tape.constant(Tensor({2 * kJoints, 3})), s.adj,
                                 s.layers[0], true)
                   .value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    EXPECT_DOUBLE_EQ(out.at(r, 0), 0.1);
    EXPECT_DOUBLE_EQ(out.at(r, 3), 0.4);
  }
}

TEST(GcnLayerTest, TwoNodeHandExample) {
  ParameterStore store;
  Rng rng(1);
  Adjacency full = {{0, 1}, {0, 1}};
  GcnStack s = GcnStack::make(store, "g", 1, 1, 1, full, rng);
  store.find("g.0.weight")->value = Tensor::matrix({{1.0}});
  Tape tape;
  Var H = tape.constant(Tensor::matrix({{1.0}, {3.0}}));
  Var pre = matmul(graph_propagate(H, full), tape.param(*s.layers[0].weight));
  EXPECT_DOUBLE_EQ(pre.value()[0], 4.0);
  EXPECT_DOUBLE_EQ(pre.value()[1], 4.0);
  EXPECT_NEAR(tanh(pre).value()[0], 0.99933, 1e-5);
  Tensor out = gcn_layer_forward(tape, H, full, s.layers[0], true).value();
  EXPECT_DOUBLE_EQ(out[0], 0.0);
  EXPECT_DOUBLE_EQ(out[1], 0.0);
}

TEST(GcnLayerTest, NodePermutationEquivariance) {
  Rng rng(4);
  const std::size_t J = 5;
  Adjacency adj(J);
  for (std::size_t i = 0; i < J; ++i) adj[i].push_back(i);
  for (std::size_t i = 0; i < J; ++i)
    for (std::size_t j = i + 1; j < J; ++j)
      if (rng.bernoulli(0.5)) adj[i].push_back(j), adj[j].push_back(i);
  ParameterStore store;
  GcnStack s = GcnStack::make(store, "g", 3, 4, 1, adj, rng);
  const Tensor H = uniform_tensor({J, 3}, 1.0, rng);
  const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  Tensor Hp({J, 3});
  for (std::size_t i = 0; i < J; ++i)
    for (std::size_t c = 0; c < 3; ++c) Hp.at(i, c) = H.at(perm[i], c);
  Tape tape;
  Tensor out = gcn_layer_forward(tape, tape.constant(H), adj, s.layers[0], true).value();
  Tensor outp = gcn_layer_forward(tape, tape.constant(Hp), permute_adjacency(adj, perm),
                                  s.layers[0], true)
                    .value();
  for (std::size_t i = 0; i < J; ++i)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(outp.at(i, c), out.at(perm[i], c), 1e-12);
}

TEST(SpatialEncodeTest, IdenticalTimestepsGiveIdenticalRows) {
  Rng rng(2);
  ParameterStore store;
  GcnStack s = GcnStack::make(store, "g", kJointFeatures, 8, 3, skeleton_adjacency(), rng);
  Tensor grid = uniform_tensor({3, kJoints, kJointFeatures}, 1.0, rng);
  const std::size_t cells = kJoints * kJointFeatures;
  std::copy_n(grid.data(), cells, grid.data() + 2 * cells);
  for (bool training : {true, false}) {
    Tape tape;
    Tensor out = spatial_encode(tape, {&grid}, s, training).front().value();
    ASSERT_EQ(out.shape(), (Shape{3, 8}));
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(out.at(0, c), out.at(2, c));
  }
}

TEST(SpatialEncodeTest, JointPermutationInvariance) {
  Rng rng(3);
  const Adjacency adj = skeleton_adjacency();
  std::vector<std::size_t> perm(kJoints);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm.begin(), perm.end());
  ParameterStore s1, s2;
  Rng r1(9), r2(9);
  GcnStack a = GcnStack::make(s1, "g", kJointFeatures, 6, 2, adj, r1);
  GcnStack b = GcnStack::make(s2, "g", kJointFeatures, 6, 2, permute_adjacency(adj, perm), r2);
  const Tensor grid = uniform_tensor({4, kJoints, kJointFeatures}, 1.0, rng);
  Tensor permuted(grid.shape());
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t j = 0; j < kJoints; ++j)
      for (std::size_t c = 0; c < kJointFeatures; ++c)
        permuted[(t * kJoints + j) * kJointFeatures + c] =
            grid[(t * kJoints + perm[j]) * kJointFeatures + c];
  Tape tape;
  Tensor x = spatial_encode(tape, {&grid}, a, true).front().value();
  Tensor y = spatial_encode(tape, {&permuted}, b, true).front().value();
  expect_near(x, y, 1e-12);
}

TEST(SpatialEncodeTest, SingleJointMatchesDirectEvaluation) {
  Rng rng(5);
  ParameterStore store;
  GcnStack s = GcnStack::make(store, "g", 3, 2, 1, Adjacency{{0}}, rng);
  store.find("g.0.bn.gamma")->value = Tensor::row({1.5, -0.5});
  store.find("g.0.bn.beta")->value = Tensor::row({0.25, 0.75});
  const Tensor grid = uniform_tensor({4, 1, 3}, 1.0, rng);
  Tape tape;
  Tensor out = spatial_encode(tape, {&grid}, s, false).front().value();
  const Mat W = to_mat(s.layers[0].weight->value);
  const double inv = 1.0 / std::sqrt(1.0 + 1e-5);  // running mean 0, running var 1
  for (std::size_t t = 0; t < 4; ++t) {
    Eigen::RowVectorXd x(3);
    for (int c = 0; c < 3; ++c) x(c) = grid[t * 3 + c];
    const Eigen::RowVectorXd h = (x * W).array().tanh();
    EXPECT_NEAR(out.at(t, 0), 1.5 * h(0) * inv + 0.25, 1e-12);
    EXPECT_NEAR(out.at(t, 1), -0.5 * h(1) * inv + 0.75, 1e-12);
  }
}

TEST(SpatialEncodeTest, BatchedGridsShareStatistics) {
  Rng rng(6);
  ParameterStore store;
  GcnStack s = GcnStack::make(store, "g", kJointFeatures, 4, 2, skeleton_adjacency(), rng);
  const Tensor a = uniform_tensor({3, kJoints, kJointFeatures}, 1.0, rng);
  const Tensor b = uniform_tensor({5, kJoints, kJointFeatures}, 1.0, rng);
  Tape tape;
  auto both = spatial_encode(tape, {&a, &b}, s, false);
  ASSERT_EQ(both.size(), 2u);
  EXPECT_EQ(both[0].rows(), 3u);
  EXPECT_EQ(both[1].rows(), 5u);
  // Evaluation mode uses running statistics, so batching is irrelevant.
  expect_near(spatial_encode(tape, {&b}, s, false).front().value(), both[1].value(), 1e-14);
  Tensor bad({3, kJoints, 5});
  EXPECT_THROW(spatial_encode(tape, {&bad}, s, false), DimensionError);
}

TEST(SgpaTest, RejectsIndivisibleHeads) {
  ParameterStore store;
  Rng rng(1);
  EXPECT_THROW(SgpaBlock::make(store, "s", 5, 2, rng), ValidationError);
}

TEST(SgpaTest, SingleStepUsesValueRows) {
  ParameterStore store;
  Rng rng(7);
  SgpaBlock b = SgpaBlock::make(store, "s", 4, 2, rng);
  zero_linear(store, b.gate_self);
  zero_linear(store, b.gate_cross);
  const Tensor X = uniform_tensor({1, 4}, 1.0, rng), C = uniform_tensor({1, 4}, 1.0, rng);
  const Mat expect = 0.5 * (apply_linear(b.v_self, to_mat(X)) + apply_linear(b.v_cross, to_mat(C)));
  expect_near(eval_block(b, X, C), to_tensor(expect), 1e-12);
}

TEST(SgpaTest, ZeroGatesAverageBothPaths) {
  ParameterStore store;
  Rng rng(8);
  SgpaBlock b = SgpaBlock::make(store, "s", 4, 1, rng);
  const Tensor X = uniform_tensor({3, 4}, 1.0, rng), C = uniform_tensor({2, 4}, 1.0, rng);
  // With zero gates each path enters with weight 0.5; compare against the
  // sum of the single-path outputs obtained by zeroing the other values.
  zero_linear(store, b.gate_self);
  zero_linear(store, b.gate_cross);
  const Tensor both = eval_block(b, X, C);
  ParameterStore s2;
  Rng rng2(8);
  SgpaBlock b2 = SgpaBlock::make(s2, "s", 4, 1, rng2);
  zero_linear(s2, b2.gate_self);
  zero_linear(s2, b2.gate_cross);
  zero_linear(s2, b2.v_cross);
  const Tensor self_only = eval_block(b2, X, C);
  const Mat ms = 2.0 * to_mat(self_only);
  const Mat q = apply_linear(b.q_self, to_mat(X));
  const Mat w = row_softmax(q * apply_linear(b.k_cross, to_mat(C)).transpose() / 2.0);
  const Mat mc = w * apply_linear(b.v_cross, to_mat(C));
  expect_near(both, to_tensor(0.5 * (ms + mc)), 1e-12);
}

TEST(SgpaTest, MatchesDenseOracle) {
  for (std::size_t heads : {1u, 2u}) {
    ParameterStore store;
    Rng rng(10 + heads);
    SgpaBlock b = SgpaBlock::make(store, "s", 2, heads, rng);
    for (auto& p : store.all()) p.value = uniform_tensor(p.value.shape(), 1.0, rng);
    const Tensor X = uniform_tensor({2, 2}, 1.0, rng), C = uniform_tensor({2, 2}, 1.0, rng);
    expect_near(eval_block(b, X, C), to_tensor(sgpa_oracle(b, to_mat(X), to_mat(C))), 1e-12);
  }
  ParameterStore store;
  Rng rng(30);
  SgpaBlock b = SgpaBlock::make(store, "s", 6, 3, rng);
  const Tensor X = uniform_tensor({5, 6}, 1.0, rng), C = uniform_tensor({3, 6}, 1.0, rng);
  expect_near(eval_block(b, X, C), to_tensor(sgpa_oracle(b, to_mat(X), to_mat(C))), 1e-12);
}

TEST(SgpaTest, PaddedRowsNeverChangeValidOutputs) {
  ParameterStore store;
  Rng rng(11);
  SgpaBlock b = SgpaBlock::make(store, "s", 4, 2, rng);
  const Tensor X = uniform_tensor({3, 4}, 1.0, rng), C = uniform_tensor({2, 4}, 1.0, rng);
  const Tensor base = eval_block(b, X, C);
  Tensor Xp({5, 4}), Cp({4, 4});
  std::copy_n(X.data(), X.size(), Xp.data());
  std::copy_n(C.data(), C.size(), Cp.data());
  for (std::size_t i = X.size(); i < Xp.size(); ++i) Xp[i] = 100.0 + static_cast<double>(i);
  for (std::size_t i = C.size(); i < Cp.size(); ++i) Cp[i] = -50.0 + static_cast<double>(i);
  const Tensor padded = eval_block(b, Xp, Cp, {1, 1, 1, 0, 0}, {1, 1, 0, 0});
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR(padded[i], base[i], 1e-12);
}

TEST(SgpaTest, AllMaskedContextIsDegenerate) {
  ParameterStore store;
  Rng rng(12);
  SgpaBlock b = SgpaBlock::make(store, "s", 4, 2, rng);
  const Tensor X = uniform_tensor({3, 4}, 1.0, rng), C = uniform_tensor({2, 4}, 1.0, rng);
  EXPECT_THROW(eval_block(b, X, C, {}, {0, 0}), DegenerateRowError);
}

TEST(AttentionTest, RowsSumToOneAndSkipMaskedKeys) {
  Rng rng(13);
  Tape tape;
  const std::size_t T = 4;
  Tensor eye({T, T});
  for (std::size_t i = 0; i < T; ++i) eye.at(i, i) = 1.0;
  Var q = tape.constant(uniform_tensor({3, 4}, 2.0, rng));
  Var k = tape.constant(uniform_tensor({T, 4}, 2.0, rng));
  Tensor w = multi_head_attention(q, k, tape.constant(eye), 1, {1, 0, 1, 1}).value();
  for (std::size_t r = 0; r < 3; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < T; ++c) s += w.at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_EQ(w.at(r, 1), 0.0);
  }
}

class StackTest : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(20);
    for (int i = 0; i < 2; ++i) {
      p.blocks.push_back(SgpaBlock::make(store, "sgpa." + std::to_string(i), 4, 2, rng));
    }
    M = uniform_tensor({5, 4}, 1.0, rng);
    Q = uniform_tensor({3, 4}, 1.0, rng);
  }
  ParameterStore store;
  EncoderParams p;
  Tensor M, Q;
};

TEST_F(StackTest, EmptyStackIsIdentity) {
  EncoderParams empty;
  Tape tape;
  EXPECT_EQ(temporal_encode(tape, tape.constant(M), tape.constant(Q), empty).value(), M);
  EXPECT_EQ(encode_query(tape, tape.constant(Q), tape.constant(M), empty).value(), Q);
}

TEST_F(StackTest, OneBlockEqualsBlockAndShapes) {
  EncoderParams one;
  one.blocks = {p.blocks[0]};
  Tape tape;
  EXPECT_EQ(temporal_encode(tape, tape.constant(M), tape.constant(Q), one).value(),
            eval_block(p.blocks[0], M, Q));
  EXPECT_EQ(temporal_encode(tape, tape.constant(M), tape.constant(Q), p).value().shape(),
            (Shape{5, 4}));
  EXPECT_EQ(encode_query(tape, tape.constant(Q), tape.constant(M), p).value().shape(),
            (Shape{3, 4}));
}

TEST_F(StackTest, QueryPathSharesWeights) {
  Tape t1;
  const Tensor before = encode_query(t1, t1.constant(Q), t1.constant(M), p).value();
  store.find("sgpa.1.v_self.weight")->value[0] += 0.5;
  Tape t2;
  const Tensor after = encode_query(t2, t2.constant(Q), t2.constant(M), p).value();
  EXPECT_NE(before, after);
}

TEST_F(StackTest, SingleTokenAttendsToItself) {
  EncoderParams one;
  one.blocks = {p.blocks[0]};
  const SgpaBlock& b = p.blocks[0];
  zero_linear(store, b.gate_self);
  zero_linear(store, b.gate_cross);
  zero_linear(store, b.v_cross);
  Tensor word({1, 4});
  std::copy_n(Q.data(), 4, word.data());
  Tape tape;
  const Tensor out = encode_query(tape, tape.constant(word), tape.constant(M), one).value();
  expect_near(out, to_tensor(0.5 * apply_linear(b.v_self, to_mat(word))), 1e-12);
}

TEST_F(StackTest, SymmetricInputsGiveEqualOutputs) {
  Tape tape;
  Var x = tape.constant(M);
  const Tensor a = temporal_encode(tape, x, x, p).value();
  EXPECT_EQ(a, encode_query(tape, x, x, p).value());
}

TEST_F(StackTest, TinyGradientCheck) {
  Rng rng(21);
  Parameter m{"M", uniform_tensor({3, 4}, 1.0, rng), Tensor(), true};
  Parameter q{"Q", uniform_tensor({2, 4}, 1.0, rng), Tensor(), true};
  std::vector<Parameter*> params = {&m, &q};
  for (auto& x : store.all()) params.push_back(&x);
  auto res = finite_diff_check(
      [&](Tape& t) {
        Var a = temporal_encode(t, t.param(m), t.param(q), p);
        Var b = encode_query(t, t.param(q), t.param(m), p);
        return add(sum(mul(a, a)), sum(tanh(b)));
      },
      params);
  EXPECT_LE(res.max_rel_error, 1e-4) << res.worst;
}
