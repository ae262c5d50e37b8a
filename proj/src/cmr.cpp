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

#include "tslm/cmr.hpp"

#include <algorithm>
#include <cmath>

#include "tslm/errors.hpp"

namespace tslm {

namespace {

// Guards against 0.1 * 10 style rounding when counting windows.
constexpr double kWindowSlack = 1e-9;

}  // namespace

void CmrConfig::validate() const {
  if (!(chunk_seconds > 0)) throw ValidationError("chunk length must be positive");
  if (!(overlap > 0 && overlap < 1)) throw ValidationError("chunk overlap must lie in (0, 1)");
  if (top_k < 1) throw ValidationError("top-k must be at least 1");
  if (!std::isfinite(lambda)) throw ValidationError("fusion lambda must be finite");
  for (auto n : dcg_cutoffs) {
    if (n < 1) throw ValidationError("DCG cutoff must be at least 1");
  }
}

std::vector<Span> chunk_motion(double duration, const CmrConfig& cfg) {
  cfg.validate();
  if (!(duration > 0)) throw ValidationError("motion duration must be positive");
  if (duration < cfg.chunk_seconds) return {{0.0, duration}};
  const double stride = cfg.stride();
  const auto count = static_cast<std::size_t>(
      std::floor((duration - cfg.chunk_seconds) / stride + kWindowSlack)) + 1;
  std::vector<Span> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double s = static_cast<double>(i) * stride;
    out.push_back({s, s + cfg.chunk_seconds});
  }
  return out;
}

double PlantedRetrieval::similarity(const CmrQuery& q, const MotionSequence& motion,
                                    Span chunk) const {
  TokenJaccard jac;
  double best = 0.0;
  for (const auto& s : ds_.samples) {
    if (s.motion_id != motion.motion_id) continue;
    const double len = s.t_e - s.t_s;
    if (len <= 0) continue;
    const double covered =
        std::max(0.0, std::min(chunk.e, s.t_e) - std::max(chunk.s, s.t_s)) / len;
    best = std::max(best, jac.score(q.text, s.text) * covered);
  }
  return best;
}

double PlantedRelevance::relevance(const CmrQuery& q, const std::string& motion_id,
                                   Span moment) const {
  TokenJaccard jac;
  double best = 0.0;
  for (const auto& s : ds_.samples) {
    if (s.motion_id != motion_id) continue;
    best = std::max(best, jac.score(q.text, s.text) * iou(moment, {s.t_s, s.t_e}));
  }
  return best;
}

LocatedMoment ModelLocalizer::locate(const CmrQuery& q, const MotionSequence& motion) const {
  const Tensor grid = model_.prepare_motion(motion);
  const std::size_t T = grid.shape()[0];
  const Localization loc = model_.locate(grid, q.tokens);
  LocatedMoment out;
  out.span = {index_to_time(loc.span.i_s, motion.duration, T),
              index_to_time(loc.span.i_e, motion.duration, T)};
  out.p_se = loc.span.p_se;
  out.start_index = loc.span.i_s;
  return out;
}

double retrieval_score(const CmrQuery& q, const MotionSequence& motion,
                       const RetrievalProvider& provider, const CmrConfig& cfg) {
  double best = -INFINITY;
  for (const Span& w : chunk_motion(motion.duration, cfg)) {
    best = std::max(best, provider.similarity(q, motion, w));
  }
  return best;
}

double cmr_score(double p_se, double r, double lambda) {
  if (!(p_se >= 0 && p_se <= 1)) throw ValidationError("p_se must lie in [0, 1]");
  return p_se * std::exp(lambda * r);
}

std::vector<RankedMoment> rank_corpus(const CmrQuery& q,
                                      const std::vector<MotionSequence>& corpus,
                                      const Localizer& localizer,
                                      const RetrievalProvider& retrieval, const CmrConfig& cfg) {
  cfg.validate();
  if (corpus.empty()) throw ValidationError("empty corpus");
  std::vector<std::pair<double, std::size_t>> by_r;
  by_r.reserve(corpus.size());
  for (std::size_t m = 0; m < corpus.size(); ++m) {
    by_r.emplace_back(retrieval_score(q, corpus[m], retrieval, cfg), m);
  }
  std::sort(by_r.begin(), by_r.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return corpus[a.second].motion_id < corpus[b.second].motion_id;
  });
  by_r.resize(std::min(by_r.size(), cfg.top_k));

  std::vector<RankedMoment> out;
  out.reserve(by_r.size());
  for (const auto& [r, m] : by_r) {
    const LocatedMoment loc = localizer.locate(q, corpus[m]);
    RankedMoment rm;
    rm.motion_id = corpus[m].motion_id;
    rm.span = loc.span;
    rm.start_index = loc.start_index;
    rm.p_se = loc.p_se;
    rm.retrieval = r;
    rm.score = cmr_score(loc.p_se, r, cfg.lambda);
    out.push_back(std::move(rm));
  }
  std::sort(out.begin(), out.end(), [](const RankedMoment& a, const RankedMoment& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.motion_id != b.motion_id) return a.motion_id < b.motion_id;
    return a.start_index < b.start_index;
  });
  return out;
}

double dcg_at_n(const std::vector<double>& rels, std::size_t n) {
  if (n < 1) throw ValidationError("DCG cutoff must be at least 1");
  double sum = 0.0;
  for (std::size_t i = 0; i < std::min(n, rels.size()); ++i) {
    if (!(rels[i] >= 0 && rels[i] <= 1)) throw ValidationError("relevance outside [0, 1]");
    sum += rels[i] / std::log2(static_cast<double>(i) + 2.0);
  }
  return sum;
}

}  // namespace tslm
