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
#include "tslm/matcher.hpp"
#include "tslm/nn.hpp"

using namespace tslm;
using namespace tslm::ad;

namespace {

struct Fixture {
  explicit Fixture(std::size_t d, std::size_t T_max = 16) : rng(3) {
    m = MatcherParams::make(store, "m", d, T_max, rng);
  }
  Tensor& labels() { return store.find("m.labels")->value; }
  Tensor row(std::size_t r) {
    Tensor out({1, labels().cols()});
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = labels().at(r, c);
    return out;
  }
  ParameterStore store;
  Rng rng;
  MatcherParams m;
};

void expect_rows(const Tensor& t, const std::vector<Tensor>& rows) {
  ASSERT_EQ(t.rows(), rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) EXPECT_EQ(t.at(r, c), rows[r][c]);
}

}  // namespace

TEST(LabelEmbeddingTest, Lookup) {
  Fixture fx(3);
  Tape t;
  const Tensor bg = fx.row(kBackground), fg = fx.row(kForeground);
  expect_rows(build_label_embeddings(t, {0, 0, 0}, fx.m).value(), {bg, bg, bg});
  expect_rows(build_label_embeddings(t, {1, 1}, fx.m).value(), {fg, fg});
  expect_rows(build_label_embeddings(t, {0, 1, 1, 0}, fx.m).value(), {bg, fg, fg, bg});
}

TEST(LabelEmbeddingTest, HighlightLabels) {
  EXPECT_EQ(highlight_labels(5, 1, 3), (Labels{0, 1, 1, 1, 0}));
  EXPECT_EQ(highlight_labels(3, 2, 2), (Labels{0, 0, 1}));
  EXPECT_THROW(highlight_labels(3, 2, 1), ValidationError);
  EXPECT_THROW(highlight_labels(3, 0, 3), ValidationError);
}

TEST(PerturbationMaskTest, Extremes) {
  Rng rng(1);
  EXPECT_EQ(perturbation_mask(7, 0.0, rng), Labels(7, 0));
  EXPECT_EQ(perturbation_mask(7, 1.0, rng), Labels(7, 1));
  EXPECT_THROW(perturbation_mask(7, 1.5, rng), ValidationError);
}

TEST(PerturbationMaskTest, StartIsUniform) {
  Rng rng(2);
  std::vector<double> counts(3, 0.0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const Labels m = perturbation_mask(10, 0.8, rng);
    std::size_t start = 0;
    while (!m[start]) ++start;
    ASSERT_LE(start, 2u);
    counts[start] += 1;
  }
  double chi2 = 0;
  for (double c : counts) chi2 += (c - n / 3.0) * (c - n / 3.0) / (n / 3.0);
  EXPECT_LT(chi2, 13.82);  // 2 degrees of freedom, p = 0.001
}

TEST(PerturbationMaskTest, PopcountAndContiguityProperty) {
  Rng rng(3);
  for (int k = 0; k < 3000; ++k) {
    const std::size_t T = 1 + rng.index(256);
    const double alpha = rng.uniform();
    const Labels m = perturbation_mask(T, alpha, rng);
    std::size_t ones = 0, runs = 0;
    for (std::size_t i = 0; i < T; ++i) {
      ones += m[i];
      runs += m[i] && (i == 0 || !m[i - 1]);
    }
    EXPECT_EQ(ones, static_cast<std::size_t>(std::llround(alpha * static_cast<double>(T))));
    EXPECT_LE(runs, 1u);
  }
}

TEST(PerturbEmbeddingsTest, Blend) {
  Fixture fx(2);
  Tape t;
  Var E = t.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  Var pad = t.constant(Tensor::row({-1, -2}));
  expect_rows(perturb_embeddings(E, {1, 1}, pad).value(),
              {Tensor::row({-1, -2}), Tensor::row({-1, -2})});
  expect_rows(perturb_embeddings(E, {0, 0}, pad).value(), {Tensor::row({1, 2}), Tensor::row({3, 4})});
  expect_rows(perturb_embeddings(E, {1, 0}, pad).value(), {Tensor::row({-1, -2}), Tensor::row({3, 4})});
  EXPECT_THROW(perturb_embeddings(E, {1}, pad), DimensionError);
}

TEST(HighlightScoresTest, ZeroConvGivesHalf) {
  Fixture fx(4);
  fx.store.find("m.conv.weight")->value.fill(0.0);
  fx.store.find("m.conv.bias")->value.fill(0.0);
  Tape t;
  const Tensor s = highlight_scores(t, t.constant(uniform_tensor({5, 4}, 1.0, fx.rng)),
                                    pad_embeddings(t, 5, fx.m), fx.m)
                       .value();
  EXPECT_EQ(s.shape(), (Shape{5, 1}));
  for (double v : s.storage()) EXPECT_EQ(v, 0.5);
}

TEST(HighlightScoresTest, DoublingWeightDoublesLogits) {
  Fixture fx(4);
  fx.store.find("m.conv.bias")->value.fill(0.0);
  const Tensor Mq = uniform_tensor({5, 4}, 1.0, fx.rng);
  auto logits = [&]() {
    Tape t;
    Tensor s = highlight_scores(t, t.constant(Mq), pad_embeddings(t, 5, fx.m), fx.m).value();
    for (auto& v : s.storage()) v = std::log(v / (1 - v));
    return s;
  };
  const Tensor a = logits();
  for (auto& w : fx.store.find("m.conv.weight")->value.storage()) w *= 2;
  const Tensor b = logits();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i], 2 * a[i], 1e-9);
}

TEST(HighlightScoresTest, ScalarHandCase) {
  Fixture fx(1);
  fx.store.find("m.conv.weight")->value = Tensor::matrix({{0.7}});
  fx.store.find("m.conv.bias")->value = Tensor::row({-0.2});
  Tape t;
  const Tensor s = highlight_scores(t, t.constant(Tensor::column({0.5, -1.0})),
                                    t.constant(Tensor::column({0.25, 0.75})), fx.m)
                       .value();
  // d = 1: the positional table holds sin(t).
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  EXPECT_NEAR(s[0], sig(0.7 * (0.5 + 0.25 + 0.0) - 0.2), 1e-15);
  EXPECT_NEAR(s[1], sig(0.7 * (-1.0 + 0.75 + std::sin(1.0)) - 0.2), 1e-15);
}

TEST(HighlightScoresTest, RejectsSequencesPastTable) {
  Fixture fx(2, 4);
  Tape t;
  EXPECT_THROW(highlight_scores(t, t.constant(Tensor({5, 2})), pad_embeddings(t, 5, fx.m), fx.m),
               DimensionError);
}

TEST(HighlightScoresTest, InferenceIgnoresGroundTruthRows) {
  Fixture fx(3);
  const Tensor Mq = uniform_tensor({6, 3}, 1.0, fx.rng);
  auto infer = [&]() {
    Tape t;
    return highlight_scores(t, t.constant(Mq), pad_embeddings(t, 6, fx.m), fx.m).value();
  };
  const Tensor a = infer();
  for (std::size_t c = 0; c < 3; ++c) {
    fx.labels().at(kBackground, c) += 5.0;
    fx.labels().at(kForeground, c) -= 3.0;
  }
  EXPECT_EQ(infer(), a);
}

TEST(PositionsTest, SinusoidalTable) {
  const Tensor pe = sinusoidal_positions(10, 6);
  for (std::size_t pos = 0; pos < 10; ++pos) {
    for (std::size_t i = 0; i < 3; ++i) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, 2.0 * i / 6.0);
      EXPECT_NEAR(pe.at(pos, 2 * i), std::sin(angle), 1e-14);
      EXPECT_NEAR(pe.at(pos, 2 * i + 1), std::cos(angle), 1e-14);
    }
  }
}

TEST(SeqLossTest, ClosedForms) {
  Tape t;
  EXPECT_NEAR(seq_loss(t.constant(Tensor::column({0.5, 0.5, 0.5})), {1, 0, 1}).value().item(),
              std::log(2.0), 1e-15);
  EXPECT_NEAR(seq_loss(t.constant(Tensor::column({0.9, 0.1})), {1, 0}).value().item(), 0.1054,
              5e-5);
  EXPECT_LT(seq_loss(t.constant(Tensor::column({1 - 1e-12, 1e-12})), {1, 0}).value().item(), 1e-9);
}

TEST(ApplyHighlightTest, Scaling) {
  Tape t;
  const Tensor M = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
  EXPECT_EQ(apply_highlight(t.constant(Tensor({3, 1}, 1.0)), t.constant(M)).value(), M);
  EXPECT_EQ(apply_highlight(t.constant(Tensor({3, 1}, 0.0)), t.constant(M)).value(),
            Tensor({3, 2}));
  const Tensor half = apply_highlight(t.constant(Tensor::column({1, 0.5, 1})), t.constant(M)).value();
  EXPECT_EQ(half, Tensor::matrix({{1, 2}, {1.5, 2}, {5, 6}}));
}

TEST(PerturbRateTest, RampThenConstant) {
  double prev = 0;
  for (std::size_t step = 0; step < 300; ++step) {
    const double a = perturb_rate(0.8, step, 100);
    EXPECT_GE(a, prev);
    if (step >= 100) EXPECT_EQ(a, 0.8);
    prev = a;
  }
  EXPECT_EQ(perturb_rate(0.8, 0, 100), 0.0);
  EXPECT_DOUBLE_EQ(perturb_rate(0.8, 50, 100), 0.4);
  EXPECT_EQ(perturb_rate(0.6, 0, 0), 0.6);
}
