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

#include <string>
#include <vector>

#include "tslm/dataset.hpp"

namespace tslm {

struct Span {
  double s = 0.0;
  double e = 0.0;
};

/// |a n b| / |a u b|. Zero-length spans score 0 unless identical; a reversed
/// span is a ValidationError.
double iou(Span a, Span b);

class SimilarityOracle {
 public:
  virtual ~SimilarityOracle() = default;
  /// Symmetric score in [0, 1] with score(x, x) = 1.
  virtual double score(const std::string& a, const std::string& b) const = 0;
};

/// Jaccard index of lowercase whitespace-separated token sets.
class TokenJaccard : public SimilarityOracle {
 public:
  double score(const std::string& a, const std::string& b) const override;
};

/// Own span first, then spans of same-motion samples whose text scores at
/// least `threshold` against the sample's text.
std::vector<Span> assign_false_negatives(const Dataset& ds, std::size_t sample,
                                         const SimilarityOracle& oracle, double threshold);

enum class Protocol { kNormal, kAssigned };

std::string protocol_name(Protocol p);

struct EvalConfig {
  std::vector<double> thresholds = {0.5, 0.7, 0.9};
  Protocol protocol = Protocol::kNormal;
  double similarity_threshold = 0.8;
};

struct EvalReport {
  Protocol protocol = Protocol::kNormal;
  std::size_t count = 0;
  std::vector<double> thresholds;
  std::vector<double> recall;  // percent with IoU > threshold
  double miou = 0.0;
  std::vector<double> per_sample;
};

/// preds[k] is the Recall@1 moment of sample samples[k].
EvalReport evaluate_protocol(const std::vector<Span>& preds,
                             const std::vector<std::size_t>& samples, const Dataset& ds,
                             const EvalConfig& cfg, const SimilarityOracle& oracle);

std::string report_json(const EvalReport& r);
/// Fixed-width table with columns IoU@0.5 IoU@0.7 IoU@0.9 mIoU.
std::string report_table(const std::vector<EvalReport>& reports);

}  // namespace tslm
