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
#include <map>

#include "tslm/cmr.hpp"
#include "tslm/errors.hpp"

using namespace tslm;

namespace {

MotionSequence motion(const std::string& id, double duration) {
  MotionSequence m;
  m.motion_id = id;
  m.duration = duration;
  return m;
}

// Similarity peaks for the window starting at `peak` seconds.
class PeakRetrieval : public RetrievalProvider {
 public:
  std::map<std::string, double> peak, height;
  double similarity(const CmrQuery&, const MotionSequence& m, Span chunk) const override {
    return height.at(m.motion_id) / (1.0 + std::abs(chunk.s - peak.at(m.motion_id)));
  }
};

class TableLocalizer : public Localizer {
 public:
  std::map<std::string, LocatedMoment> table;
  LocatedMoment locate(const CmrQuery&, const MotionSequence& m) const override {
    return table.at(m.motion_id);
  }
};

}  // namespace

TEST(ChunkTest, Examples) {
  CmrConfig cfg;
  auto ten = chunk_motion(10, cfg);
  ASSERT_EQ(ten.size(), 1u);
  EXPECT_EQ(ten[0].s, 0.0);
  EXPECT_EQ(ten[0].e, 10.0);
  auto twelve = chunk_motion(12, cfg);
  ASSERT_EQ(twelve.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(twelve[i].s, static_cast<double>(i), 1e-12);
    EXPECT_NEAR(twelve[i].e, static_cast<double>(i) + 10, 1e-12);
  }
  auto five = chunk_motion(5, cfg);
  ASSERT_EQ(five.size(), 1u);
  EXPECT_EQ(five[0].e, 5.0);
  EXPECT_EQ(chunk_motion(12.5, cfg).size(), 3u);
  EXPECT_THROW(chunk_motion(0, cfg), ValidationError);
  cfg.overlap = 1.0;
  EXPECT_THROW(chunk_motion(12, cfg), ValidationError);
}

TEST(ChunkTest, WindowsFitAndStride) {
  CmrConfig cfg;
  for (double D = 0.5; D < 40; D += 0.37) {
    const auto w = chunk_motion(D, cfg);
    ASSERT_FALSE(w.empty());
    for (const auto& s : w) EXPECT_LE(s.e, D + 1e-9);
    if (D >= 10) {
      EXPECT_EQ(w.size(), static_cast<std::size_t>(std::floor(D - 10 + 1e-9)) + 1);
      EXPECT_GT(w.back().e + 1.0, D);
    }
  }
}

TEST(RetrievalScoreTest, MaxOverWindows) {
  PeakRetrieval p;
  p.peak["m"] = 3;
  p.height["m"] = 0.8;
  CmrConfig cfg;
  EXPECT_NEAR(retrieval_score({}, motion("m", 20), p, cfg), 0.8, 1e-12);
  p.peak["m"] = 30;  // beyond the last window start of 10
  EXPECT_DOUBLE_EQ(retrieval_score({}, motion("m", 20), p, cfg), 0.8 / 21.0);
  p.peak["m"] = 0;
  EXPECT_DOUBLE_EQ(retrieval_score({}, motion("m", 4), p, cfg), 0.8);
}

TEST(CmrScoreTest, Examples) {
  EXPECT_EQ(cmr_score(0.37, 0.0, 5), 0.37);
  EXPECT_NEAR(cmr_score(0.5, 0.2, 5), 1.3591, 5e-5);
  EXPECT_NEAR(cmr_score(0.5, 0.1, 10), 1.3591, 5e-5);
  EXPECT_THROW(cmr_score(1.2, 0.1, 5), ValidationError);
  EXPECT_THROW(cmr_score(-0.1, 0.1, 5), ValidationError);
}

TEST(CmrScoreTest, StrictlyMonotone) {
  Rng rng(3);
  for (int k = 0; k < 1000; ++k) {
    const double p = rng.uniform(0.01, 0.9), r = rng.uniform(-1, 1), lam = rng.uniform(0.1, 10);
    EXPECT_LT(cmr_score(p, r, lam), cmr_score(p + 0.05, r, lam));
    EXPECT_LT(cmr_score(p, r, lam), cmr_score(p, r + 0.05, lam));
  }
}

TEST(RankTest, SingleMotion) {
  PeakRetrieval p;
  p.peak["x"] = 0;
  p.height["x"] = 0.1;
  TableLocalizer loc;
  loc.table["x"] = {{1, 2}, 0.3, 4};
  const auto out = rank_corpus({}, {motion("x", 12)}, loc, p, CmrConfig());
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].motion_id, "x");
  EXPECT_EQ(out[0].span.s, 1.0);
  EXPECT_DOUBLE_EQ(out[0].score, 0.3 * std::exp(0.5));
  EXPECT_THROW(rank_corpus({}, {}, loc, p, CmrConfig()), ValidationError);
}

TEST(RankTest, TopKAndOrder) {
  PeakRetrieval p;
  TableLocalizer loc;
  std::vector<MotionSequence> corpus;
  const double heights[] = {0.2, 0.9, 0.5, 0.7};
  const double pse[] = {0.9, 0.1, 0.5, 0.4};
  for (int i = 0; i < 4; ++i) {
    const std::string id = "m" + std::to_string(i);
    corpus.push_back(motion(id, 15));
    p.peak[id] = 2;
    p.height[id] = heights[i];
    loc.table[id] = {{0, 1}, pse[i], 0};
  }
  CmrConfig cfg;
  cfg.top_k = 2;
  cfg.lambda = 1.0;
  const auto out = rank_corpus({}, corpus, loc, p, cfg);
  ASSERT_EQ(out.size(), 2u);  // m1 and m3 survive retrieval
  EXPECT_EQ(out[0].motion_id, "m3");
  EXPECT_EQ(out[1].motion_id, "m1");
  EXPECT_DOUBLE_EQ(out[1].retrieval, 0.9);
}

TEST(RankTest, DominantRetrievalRanksFirst) {
  PeakRetrieval p;
  TableLocalizer loc;
  std::vector<MotionSequence> corpus;
  for (int i = 0; i < 5; ++i) {
    const std::string id = "m" + std::to_string(i);
    corpus.push_back(motion(id, 11));
    p.peak[id] = 0;
    p.height[id] = 0.3;
    loc.table[id] = {{0, 1}, 0.5, 0};
  }
  p.height["m3"] = 0.31;
  for (double lam : {0.01, 1.0, 5.0, 50.0}) {
    CmrConfig cfg;
    cfg.lambda = lam;
    EXPECT_EQ(rank_corpus({}, corpus, loc, p, cfg).front().motion_id, "m3");
  }
}

TEST(RankTest, TiesBreakById) {
  PeakRetrieval p;
  TableLocalizer loc;
  std::vector<MotionSequence> corpus;
  for (const char* id : {"c", "a", "b"}) {
    corpus.push_back(motion(id, 10));
    p.peak[id] = 0;
    p.height[id] = 0.4;
    loc.table[id] = {{0, 1}, 0.5, 0};
  }
  const auto out = rank_corpus({}, corpus, loc, p, CmrConfig());
  EXPECT_EQ(out[0].motion_id, "a");
  EXPECT_EQ(out[1].motion_id, "b");
  EXPECT_EQ(out[2].motion_id, "c");
}

TEST(RankTest, ScaleInvariantOrder) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    PeakRetrieval p;
    TableLocalizer a, b;
    std::vector<MotionSequence> corpus;
    for (int i = 0; i < 8; ++i) {
      const std::string id = "m" + std::to_string(i);
      corpus.push_back(motion(id, 10 + rng.uniform(0, 5)));
      p.peak[id] = rng.uniform(0, 5);
      p.height[id] = rng.uniform(0, 1);
      const double pse = rng.uniform(0.01, 0.9);
      a.table[id] = {{0, 1}, pse, 0};
      b.table[id] = {{0, 1}, pse / 3.0, 0};  // every fused score shrinks by 3
    }
    const auto ra = rank_corpus({}, corpus, a, p, CmrConfig());
    const auto rb = rank_corpus({}, corpus, b, p, CmrConfig());
    ASSERT_EQ(ra.size(), rb.size());
    for (std::size_t i = 0; i < ra.size(); ++i) EXPECT_EQ(ra[i].motion_id, rb[i].motion_id);
  }
}

TEST(DcgTest, Examples) {
  EXPECT_EQ(dcg_at_n({1, 0, 0}, 3), 1.0);
  EXPECT_NEAR(dcg_at_n({1, 1, 1}, 3), 2.1309, 5e-5);
  EXPECT_EQ(dcg_at_n({}, 5), 0.0);
  EXPECT_EQ(dcg_at_n({0.5, 1}, 1), 0.5);
  EXPECT_THROW(dcg_at_n({1}, 0), ValidationError);
  EXPECT_THROW(dcg_at_n({1.5}, 1), ValidationError);
}

TEST(DcgTest, BruteForceSummation) {
  Rng rng(4);
  for (int k = 0; k < 500; ++k) {
    std::vector<double> rel(rng.index(30));
    for (auto& r : rel) r = rng.uniform();
    const std::size_t n = 1 + rng.index(40);
    double expect = 0;
    for (std::size_t i = 1; i <= n && i <= rel.size(); ++i) {
      expect += rel[i - 1] * std::log(2.0) / std::log(static_cast<double>(i) + 1.0);
    }
    EXPECT_NEAR(dcg_at_n(rel, n), expect, 1e-12);
  }
}

TEST(PlantedProvidersTest, CoverageAndIou) {
  Dataset ds;
  ds.motions.push_back(motion("m", 20));
  QuerySample s;
  s.motion_id = "m";
  s.text = "kick left leg";
  s.t_s = 4;
  s.t_e = 8;
  ds.samples.push_back(s);
  ds.reindex();
  CmrQuery q{{}, "kick left leg"};
  PlantedRetrieval r(ds);
  EXPECT_DOUBLE_EQ(r.similarity(q, ds.motions[0], {0, 10}), 1.0);
  EXPECT_DOUBLE_EQ(r.similarity(q, ds.motions[0], {6, 16}), 0.5);
  EXPECT_DOUBLE_EQ(r.similarity({{}, "kick right leg"}, ds.motions[0], {0, 10}), 0.5);
  EXPECT_DOUBLE_EQ(retrieval_score(q, ds.motions[0], r, CmrConfig()), 1.0);
  PlantedRelevance rel(ds);
  EXPECT_DOUBLE_EQ(rel.relevance(q, "m", {4, 8}), 1.0);
  EXPECT_DOUBLE_EQ(rel.relevance(q, "m", {6, 8}), 0.5);
  EXPECT_EQ(rel.relevance(q, "other", {4, 8}), 0.0);
}
