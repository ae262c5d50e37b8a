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

#include <memory>
#include <string>
#include <vector>

#include "tslm/dataset.hpp"
#include "tslm/eval.hpp"
#include "tslm/model.hpp"

namespace tslm {

struct CmrConfig {
  double chunk_seconds = 10.0;
  double overlap = 0.9;
  std::size_t top_k = 100;
  double lambda = 5.0;
  std::vector<std::size_t> dcg_cutoffs = {10, 50, 100};

  double stride() const { return (1.0 - overlap) * chunk_seconds; }
  void validate() const;
};

/// Windows [i*stride, i*stride + chunk] that fit inside [0, D]; a motion
/// shorter than one chunk yields the single window [0, D].
std::vector<Span> chunk_motion(double duration, const CmrConfig& cfg);

struct CmrQuery {
  std::vector<std::size_t> tokens;
  std::string text;
};

class RetrievalProvider {
 public:
  virtual ~RetrievalProvider() = default;
  virtual double similarity(const CmrQuery& q, const MotionSequence& motion,
                            Span chunk) const = 0;
};

class RelevanceProvider {
 public:
  virtual ~RelevanceProvider() = default;
  /// Relevance in [0, 1] of a retrieved moment to the query.
  virtual double relevance(const CmrQuery& q, const std::string& motion_id,
                           Span moment) const = 0;
};

/// Scores a chunk by its best planted annotation: token Jaccard between the
/// query and the annotation text times the fraction of the annotated span
/// covered by the chunk.
class PlantedRetrieval : public RetrievalProvider {
 public:
  explicit PlantedRetrieval(const Dataset& ds) : ds_(ds) {}
  double similarity(const CmrQuery& q, const MotionSequence& motion, Span chunk) const override;

 private:
  const Dataset& ds_;
};

/// Text-to-text relevance: max over annotations of the same motion of token
/// Jaccard against the query times IoU with the retrieved moment.
class PlantedRelevance : public RelevanceProvider {
 public:
  explicit PlantedRelevance(const Dataset& ds) : ds_(ds) {}
  double relevance(const CmrQuery& q, const std::string& motion_id, Span moment) const override;

 private:
  const Dataset& ds_;
};

struct LocatedMoment {
  Span span;
  double p_se = 0.0;
  std::size_t start_index = 0;
};

class Localizer {
 public:
  virtual ~Localizer() = default;
  virtual LocatedMoment locate(const CmrQuery& q, const MotionSequence& motion) const = 0;
};

/// Recall@1 moment of a trained model.
class ModelLocalizer : public Localizer {
 public:
  explicit ModelLocalizer(const Model& model) : model_(model) {}
  LocatedMoment locate(const CmrQuery& q, const MotionSequence& motion) const override;

 private:
  const Model& model_;
};

/// Maximum chunk similarity over the windows of the motion.
double retrieval_score(const CmrQuery& q, const MotionSequence& motion,
                       const RetrievalProvider& provider, const CmrConfig& cfg);

/// p_se * exp(lambda * r).
double cmr_score(double p_se, double r, double lambda);

struct RankedMoment {
  std::string motion_id;
  Span span;
  std::size_t start_index = 0;
  double p_se = 0.0;
  double retrieval = 0.0;
  double score = 0.0;
};

/// Retrieval over the whole corpus, localisation of the top-k motions, and a
/// descending sort by cmr_score (ties by motion id, then start index).
std::vector<RankedMoment> rank_corpus(const CmrQuery& q,
                                      const std::vector<MotionSequence>& corpus,
                                      const Localizer& localizer,
                                      const RetrievalProvider& retrieval, const CmrConfig& cfg);

/// sum_{i=1}^{n} rel_i / log2(i + 1); positions past the list contribute 0.
double dcg_at_n(const std::vector<double>& rels, std::size_t n);

}  // namespace tslm
