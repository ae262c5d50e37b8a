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

#include <cmath>

#include "tslm/errors.hpp"
#include "tslm/fusion.hpp"
#include "tslm/gradcheck.hpp"
#include "tslm/nn.hpp"

using namespace tslm;
using namespace tslm::ad;

namespace {

struct Fixture {
  explicit Fixture(std::size_t d, std::uint64_t seed = 1) : rng(seed) {
    f = FusionParams::make(store, "f", d, rng);
  }
  Tensor& value(const std::string& name) { return store.find("f." + name)->value; }
  // Makes the fusion FFN copy block `k` of its 4d input.
  void select_block(std::size_t k) {
    const std::size_t d = value("fuse.weight").cols();
    Tensor w({4 * d, d});
    for (std::size_t i = 0; i < d; ++i) w.at(k * d + i, i) = 1.0;
    value("fuse.weight") = w;
    value("fuse.bias").fill(0.0);
  }
  Tensor fuse(const Tensor& M, const Tensor& Q, const Mask& mm = {}, const Mask& qm = {}) {
    Tape t;
    return cqa_fuse(t, t.constant(M), t.constant(Q), f, mm, qm).value();
  }
  Tensor pool(const Tensor& Q, const Mask& qm = {}) {
    Tape t;
    return additive_attention_pool(t, t.constant(Q), f, qm).value();
  }
  ParameterStore store;
  Rng rng;
  FusionParams f;
};

void expect_near(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
}

}  // namespace

TEST(CqaTest, SingleWordIsReplicated) {
  Fixture fx(3);
  fx.select_block(1);  // A_MQ
  const Tensor M = uniform_tensor({4, 3}, 1.0, fx.rng), Q = uniform_tensor({1, 3}, 1.0, fx.rng);
  const Tensor out = fx.fuse(M, Q);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(out.at(t, c), Q.at(0, c), 1e-14);
}

TEST(CqaTest, ScalarHandEvaluation) {
  Fixture fx(1);
  fx.value("fuse.weight") = Tensor::column({0.5, -1.0, 2.0, 0.25});
  fx.value("fuse.bias") = Tensor::row({0.1});
  const double m = 0.8, q = -0.6;
  // T = N = 1: both softmaxes are [1], so A_MQ = q and A_QM = m.
  const Tensor out = fx.fuse(Tensor::matrix({{m}}), Tensor::matrix({{q}}));
  EXPECT_NEAR(out[0], 0.5 * m - 1.0 * q + 2.0 * m * q + 0.25 * m * m + 0.1, 1e-14);
}

TEST(CqaTest, UniformSimilarityAveragesWords) {
  Fixture fx(3);
  fx.value("sim_m").fill(0.0);
  fx.value("sim_q").fill(0.0);
  fx.value("sim_mq").fill(0.0);
  fx.select_block(1);
  const Tensor M = uniform_tensor({2, 3}, 1.0, fx.rng), Q = uniform_tensor({4, 3}, 1.0, fx.rng);
  const Tensor out = fx.fuse(M, Q, {}, {1, 0, 1, 1});
  for (std::size_t c = 0; c < 3; ++c) {
    const double mean = (Q.at(0, c) + Q.at(2, c) + Q.at(3, c)) / 3.0;
    EXPECT_NEAR(out.at(0, c), mean, 1e-14);
    EXPECT_NEAR(out.at(1, c), mean, 1e-14);
  }
}

TEST(CqaTest, SimilarityIsTrilinear) {
  Fixture fx(2);
  fx.value("sim_m") = Tensor::column({1.0, 2.0});
  fx.value("sim_q") = Tensor::row({-1.0, 0.5});
  fx.value("sim_mq") = Tensor::row({3.0, -2.0});
  Tape t;
  const Tensor S = similarity(t, t.constant(Tensor::matrix({{1, 2}, {0, -1}})),
                              t.constant(Tensor::matrix({{2, 1}})), fx.f)
                       .value();
  // m.w_m + q.w_q + (m*q).w_mq
  EXPECT_NEAR(S.at(0, 0), (1 + 4) + (-2 + 0.5) + (6 - 4), 1e-14);
  EXPECT_NEAR(S.at(1, 0), (0 - 2) + (-2 + 0.5) + (0 + 2), 1e-14);
}

TEST(CqaTest, TimePermutationEquivariance) {
  Fixture fx(3, 5);
  const Tensor M = uniform_tensor({4, 3}, 1.0, fx.rng), Q = uniform_tensor({3, 3}, 1.0, fx.rng);
  const std::vector<std::size_t> perm = {2, 0, 3, 1};
  Tensor Mp({4, 3});
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t c = 0; c < 3; ++c) Mp.at(t, c) = M.at(perm[t], c);
  const Tensor a = fx.fuse(M, Q), b = fx.fuse(Mp, Q);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(b.at(t, c), a.at(perm[t], c), 1e-13);
}

TEST(CqaTest, PaddingNeverLeaks) {
  Fixture fx(3, 6);
  const Tensor M = uniform_tensor({3, 3}, 1.0, fx.rng), Q = uniform_tensor({2, 3}, 1.0, fx.rng);
  const Tensor base = fx.fuse(M, Q);
  Tensor Mp({4, 3}, 9.0), Qp({4, 3}, -7.0);
  std::copy_n(M.data(), M.size(), Mp.data());
  std::copy_n(Q.data(), Q.size(), Qp.data());
  const Tensor padded = fx.fuse(Mp, Qp, {1, 1, 1, 0}, {1, 1, 0, 0});
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR(padded[i], base[i], 1e-13);

  const Tensor q = fx.pool(Q);
  expect_near(fx.pool(Qp, {1, 1, 0, 0}), q, 1e-14);
}

TEST(CqaTest, DegenerateMasksAndWidths) {
  Fixture fx(3);
  const Tensor M = uniform_tensor({3, 3}, 1.0, fx.rng), Q = uniform_tensor({2, 3}, 1.0, fx.rng);
  EXPECT_THROW(fx.fuse(M, Q, {}, {0, 0}), DegenerateRowError);
  EXPECT_THROW(fx.fuse(M, Q, {0, 0, 0}, {}), DegenerateRowError);
  EXPECT_THROW(fx.fuse(M, uniform_tensor({2, 2}, 1.0, fx.rng)), DimensionError);
}

TEST(PoolTest, SingleAndIdenticalWords) {
  Fixture fx(4);
  const Tensor w = uniform_tensor({1, 4}, 1.0, fx.rng);
  expect_near(fx.pool(w), w, 1e-15);
  Tensor same({3, 4});
  for (std::size_t r = 0; r < 3; ++r) std::copy_n(w.data(), 4, same.data() + 4 * r);
  expect_near(fx.pool(same), w, 1e-15);
}

TEST(PoolTest, TwoWordsHandWeights) {
  Fixture fx(1);
  fx.value("pool_w.weight") = Tensor::matrix({{2.0}});
  fx.value("pool_v.weight") = Tensor::matrix({{1.5}});
  const double a = 0.3, b = -0.4;
  const double sa = 1.5 * std::tanh(2 * a), sb = 1.5 * std::tanh(2 * b);
  const double wa = 1.0 / (1.0 + std::exp(sb - sa));
  EXPECT_NEAR(fx.pool(Tensor::matrix({{a}, {b}}))[0], wa * a + (1 - wa) * b, 1e-15);
}

TEST(AttachTest, ConstructedProjections) {
  Fixture fx(2);
  const Tensor Mq = uniform_tensor({3, 2}, 1.0, fx.rng), q = uniform_tensor({1, 2}, 1.0, fx.rng);
  fx.value("attach.weight") = Tensor::matrix({{1, 0}, {0, 1}, {0, 0}, {0, 0}});
  fx.value("attach.bias").fill(0.0);
  Tape t;
  expect_near(attach_sentence(t, t.constant(Mq), t.constant(q), fx.f).value(), Mq, 1e-15);
  fx.value("attach.weight") = Tensor::matrix({{0.3, -1}, {2, 0.5}, {0, 0}, {0, 0}});
  Tape t2;
  const Tensor a = attach_sentence(t2, t2.constant(Mq), t2.constant(q), fx.f).value();
  const Tensor b =
      attach_sentence(t2, t2.constant(Mq), t2.constant(Tensor({1, 2})), fx.f).value();
  EXPECT_EQ(a, b);
}

TEST(AttachTest, MatchesDirectEvaluation) {
  Fixture fx(2, 9);
  const Tensor Mq = uniform_tensor({2, 2}, 1.0, fx.rng), q = uniform_tensor({1, 2}, 1.0, fx.rng);
  const Tensor& W = fx.value("attach.weight");
  fx.value("attach.bias") = Tensor::row({0.1, -0.2});
  Tape t;
  const Tensor out = attach_sentence(t, t.constant(Mq), t.constant(q), fx.f).value();
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 2; ++c) {
      const double v = Mq.at(r, 0) * W.at(0, c) + Mq.at(r, 1) * W.at(1, c) +
                       q[0] * W.at(2, c) + q[1] * W.at(3, c) + (c == 0 ? 0.1 : -0.2);
      EXPECT_NEAR(out.at(r, c), v, 1e-15);
    }
  }
}

TEST(FusionGradTest, SmallConfiguration) {
  Fixture fx(3, 11);
  Parameter M{"M", uniform_tensor({2, 3}, 1.0, fx.rng), Tensor(), true};
  Parameter Q{"Q", uniform_tensor({2, 3}, 1.0, fx.rng), Tensor(), true};
  std::vector<Parameter*> params = {&M, &Q};
  for (auto& p : fx.store.all()) params.push_back(&p);
  auto res = finite_diff_check(
      [&](Tape& t) {
        Var mq = cqa_fuse(t, t.param(M), t.param(Q), fx.f);
        Var q = additive_attention_pool(t, t.param(Q), fx.f);
        return sum(tanh(attach_sentence(t, mq, q, fx.f)));
      },
      params);
  EXPECT_LE(res.max_rel_error, 1e-4) << res.worst;
}
