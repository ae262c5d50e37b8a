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

#include <algorithm>

#include "tslm/errors.hpp"
#include "tslm/eval.hpp"
#include "tslm/rng.hpp"

using namespace tslm;

namespace {

QuerySample sample(const std::string& motion, const std::string& text, double s, double e) {
  QuerySample q;
  q.motion_id = motion;
  q.text = text;
  q.t_s = s;
  q.t_e = e;
  q.split = Split::kTest;
  return q;
}

// Motion "a" holds a query and two near-duplicates, motion "b" an unrelated one.
Dataset triple() {
  Dataset ds;
  ds.samples = {sample("a", "wave right hand", 0, 2), sample("a", "wave right hand", 4, 6),
                sample("a", "Wave right HAND", 7, 9), sample("a", "jump up", 4, 6),
                sample("b", "wave right hand", 4, 6)};
  return ds;
}

// Fixed similarity table keyed by text.
class TableOracle : public SimilarityOracle {
 public:
  explicit TableOracle(double sibling) : sibling_(sibling) {}
  double score(const std::string& a, const std::string& b) const override {
    return a == b ? 1.0 : sibling_;
  }

 private:
  double sibling_;
};

}  // namespace

TEST(IouTest, Examples) {
  EXPECT_EQ(iou({2, 4}, {2, 4}), 1.0);
  EXPECT_EQ(iou({0, 1}, {2, 3}), 0.0);
  EXPECT_DOUBLE_EQ(iou({0, 10}, {5, 15}), 1.0 / 3.0);
  EXPECT_EQ(iou({0, 1}, {1, 2}), 0.0);
  EXPECT_EQ(iou({3, 3}, {3, 3}), 1.0);
  EXPECT_EQ(iou({3, 3}, {2, 4}), 0.0);
  EXPECT_THROW(iou({2, 1}, {0, 3}), ValidationError);
}

TEST(IouTest, SymmetricAndBounded) {
  Rng rng(1);
  for (int k = 0; k < 2000; ++k) {
    double a = rng.uniform(0, 10), b = rng.uniform(0, 10), c = rng.uniform(0, 10),
           d = rng.uniform(0, 10);
    const Span x{std::min(a, b), std::max(a, b)}, y{std::min(c, d), std::max(c, d)};
    const double v = iou(x, y);
    EXPECT_EQ(v, iou(y, x));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(TokenJaccardTest, Contract) {
  TokenJaccard j;
  EXPECT_EQ(j.score("walk forward", "walk forward"), 1.0);
  EXPECT_EQ(j.score("Walk Forward", "walk forward"), 1.0);
  EXPECT_DOUBLE_EQ(j.score("walk forward", "walk back"), 1.0 / 3.0);
  EXPECT_EQ(j.score("a b", "c d"), 0.0);
  EXPECT_EQ(j.score("", ""), 1.0);
  EXPECT_EQ(j.score("raise the arm", "the arm raise"), 1.0);
  EXPECT_DOUBLE_EQ(j.score("x y z", "y z w"), j.score("y z w", "x y z"));
}

TEST(AssignTest, SiblingsAboveThreshold) {
  const Dataset ds = triple();
  const auto c = assign_false_negatives(ds, 0, TableOracle(0.99), 0.8);
  ASSERT_EQ(c.size(), 4u);  // own, two near-duplicates, and "jump up" at 0.99
  EXPECT_EQ(c[0].s, 0.0);
  const auto strict = assign_false_negatives(ds, 0, TokenJaccard(), 0.8);
  ASSERT_EQ(strict.size(), 3u);
  EXPECT_EQ(strict[1].s, 4.0);
  EXPECT_EQ(strict[2].s, 7.0);
}

TEST(AssignTest, BelowThresholdKeepsOwn) {
  const Dataset ds = triple();
  const auto c = assign_false_negatives(ds, 3, TokenJaccard(), 0.8);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].s, 4.0);
  EXPECT_EQ(c[0].e, 6.0);
}

TEST(EvaluateTest, ExactAndHalfDisjoint) {
  Dataset ds;
  for (int i = 0; i < 4; ++i) ds.samples.push_back(sample("m" + std::to_string(i), "q", 1, 3));
  EvalConfig cfg;
  const std::vector<std::size_t> idx = {0, 1, 2, 3};
  EvalReport all = evaluate_protocol({{1, 3}, {1, 3}, {1, 3}, {1, 3}}, idx, ds, cfg, TokenJaccard());
  EXPECT_EQ(all.miou, 1.0);
  for (double r : all.recall) EXPECT_EQ(r, 100.0);
  EvalReport half = evaluate_protocol({{1, 3}, {5, 6}, {1, 3}, {5, 6}}, idx, ds, cfg, TokenJaccard());
  EXPECT_EQ(half.miou, 0.5);
  for (double r : half.recall) EXPECT_EQ(r, 50.0);
  EXPECT_THROW(evaluate_protocol({{1, 3}}, idx, ds, cfg, TokenJaccard()), ValidationError);
}

TEST(EvaluateTest, StrictThreshold) {
  Dataset ds;
  ds.samples.push_back(sample("m", "q", 0, 2));
  EvalConfig cfg;
  // IoU exactly 0.5 is not counted.
  EvalReport r = evaluate_protocol({{0, 1}}, {0}, ds, cfg, TokenJaccard());
  EXPECT_EQ(r.miou, 0.5);
  EXPECT_EQ(r.recall[0], 0.0);
}

TEST(EvaluateTest, AssignedTakesMaxOverCandidates) {
  const Dataset ds = triple();
  EvalConfig normal, assigned;
  assigned.protocol = Protocol::kAssigned;
  const std::vector<Span> preds = {{7, 9}};
  EXPECT_EQ(evaluate_protocol(preds, {0}, ds, normal, TokenJaccard()).miou, 0.0);
  EXPECT_EQ(evaluate_protocol(preds, {0}, ds, assigned, TokenJaccard()).miou, 1.0);
  // Motion "b" shares the text but is another motion.
  EXPECT_EQ(evaluate_protocol({{0, 2}}, {4}, ds, assigned, TokenJaccard()).miou, 0.0);
}

TEST(EvaluateTest, RecallMonotoneAndAssignedDominates) {
  Rng rng(5);
  const Dataset ds = triple();
  std::vector<std::size_t> idx = {0, 1, 2, 3, 4};
  EvalConfig normal, assigned;
  normal.thresholds = {0.1, 0.3, 0.5, 0.7, 0.9, 1.0};
  assigned.thresholds = normal.thresholds;
  assigned.protocol = Protocol::kAssigned;
  for (int k = 0; k < 300; ++k) {
    std::vector<Span> preds;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const double a = rng.uniform(0, 10), b = rng.uniform(0, 10);
      preds.push_back({std::min(a, b), std::max(a, b)});
    }
    const EvalReport n = evaluate_protocol(preds, idx, ds, normal, TokenJaccard());
    const EvalReport a = evaluate_protocol(preds, idx, ds, assigned, TokenJaccard());
    for (std::size_t m = 1; m < n.recall.size(); ++m) {
      EXPECT_LE(n.recall[m], n.recall[m - 1]);
      EXPECT_LE(a.recall[m], a.recall[m - 1]);
    }
    for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_GE(a.per_sample[i], n.per_sample[i]);
    EXPECT_GE(n.miou, 0.0);
    EXPECT_LE(a.miou, 1.0);
  }
}

TEST(EvaluateTest, RejectsBadThreshold) {
  Dataset ds;
  ds.samples.push_back(sample("m", "q", 0, 2));
  EvalConfig cfg;
  cfg.thresholds = {0.0};
  EXPECT_THROW(evaluate_protocol({{0, 1}}, {0}, ds, cfg, TokenJaccard()), ValidationError);
}

TEST(ReportTest, JsonAndTable) {
  Dataset ds;
  ds.samples.push_back(sample("m", "q", 0, 2));
  EvalReport r = evaluate_protocol({{0, 2}}, {0}, ds, EvalConfig(), TokenJaccard());
  EXPECT_EQ(report_json(r),
            R"({"IoU@0.5":100.0,"IoU@0.7":100.0,"IoU@0.9":100.0,"count":1,"mIoU":1.0,"protocol":"normal"})");
  const std::string table = report_table({r});
  EXPECT_NE(table.find("IoU@0.5"), std::string::npos);
  EXPECT_NE(table.find("normal"), std::string::npos);
  EXPECT_NE(table.find("1.0000"), std::string::npos);
}
