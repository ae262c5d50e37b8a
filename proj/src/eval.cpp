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

#include "tslm/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tslm/errors.hpp"

namespace tslm {

namespace {

std::set<std::string> lower_tokens(const std::string& s) {
  std::set<std::string> out;
  std::istringstream is(s);
  for (std::string w; is >> w;) {
    std::transform(w.begin(), w.end(), w.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.insert(w);
  }
  return out;
}

}  // namespace

double iou(Span a, Span b) {
  if (a.s > a.e || b.s > b.e) {
    throw ValidationError("reversed span in IoU: [" + std::to_string(a.s) + ", " +
                          std::to_string(a.e) + "] vs [" + std::to_string(b.s) + ", " +
                          std::to_string(b.e) + "]");
  }
  if (a.s == b.s && a.e == b.e) return 1.0;
  const double inter = std::max(0.0, std::min(a.e, b.e) - std::max(a.s, b.s));
  const double uni = std::max(a.e, b.e) - std::min(a.s, b.s);
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

double TokenJaccard::score(const std::string& a, const std::string& b) const {
  const auto ta = lower_tokens(a), tb = lower_tokens(b);
  if (ta.empty() && tb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& w : ta) inter += tb.count(w);
  return static_cast<double>(inter) / static_cast<double>(ta.size() + tb.size() - inter);
}

std::vector<Span> assign_false_negatives(const Dataset& ds, std::size_t sample,
                                         const SimilarityOracle& oracle, double threshold) {
  const auto& own = ds.samples.at(sample);
  std::vector<Span> out = {{own.t_s, own.t_e}};
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    if (i == sample || s.motion_id != own.motion_id) continue;
    if (oracle.score(own.text, s.text) >= threshold) out.push_back({s.t_s, s.t_e});
  }
  return out;
}

std::string protocol_name(Protocol p) {
  return p == Protocol::kNormal ? "normal" : "assigned";
}

EvalReport evaluate_protocol(const std::vector<Span>& preds,
                             const std::vector<std::size_t>& samples, const Dataset& ds,
                             const EvalConfig& cfg, const SimilarityOracle& oracle) {
  if (preds.size() != samples.size()) {
    throw ValidationError("evaluation got " + std::to_string(preds.size()) +
                          " predictions for " + std::to_string(samples.size()) + " samples");
  }
  for (double mu : cfg.thresholds) {
    if (!(mu > 0.0 && mu <= 1.0)) throw ValidationError("IoU threshold outside (0, 1]");
  }
  EvalReport r;
  r.protocol = cfg.protocol;
  r.count = samples.size();
  r.thresholds = cfg.thresholds;
  r.recall.assign(cfg.thresholds.size(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto& s = ds.samples.at(samples[k]);
    double best = iou(preds[k], {s.t_s, s.t_e});
    if (cfg.protocol == Protocol::kAssigned) {
      for (const auto& c :
           assign_false_negatives(ds, samples[k], oracle, cfg.similarity_threshold)) {
        best = std::max(best, iou(preds[k], c));
      }
    }
    r.per_sample.push_back(best);
    total += best;
    for (std::size_t m = 0; m < cfg.thresholds.size(); ++m) {
      if (best > cfg.thresholds[m]) r.recall[m] += 1.0;
    }
  }
  if (r.count > 0) {
    for (auto& v : r.recall) v = 100.0 * v / static_cast<double>(r.count);
    r.miou = total / static_cast<double>(r.count);
  }
  return r;
}

std::string report_json(const EvalReport& r) {
  nlohmann::json j;
  j["protocol"] = protocol_name(r.protocol);
  j["count"] = r.count;
  for (std::size_t m = 0; m < r.thresholds.size(); ++m) {
    char key[32];
    std::snprintf(key, sizeof key, "IoU@%.1f", r.thresholds[m]);
    j[key] = r.recall[m];
  }
  j["mIoU"] = r.miou;
  return j.dump();
}

std::string report_table(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %8s", "protocol", "count");
  os << line;
  if (!reports.empty()) {
    for (double mu : reports.front().thresholds) {
      std::snprintf(line, sizeof line, " %8s", ("IoU@" + std::to_string(mu).substr(0, 3)).c_str());
      os << line;
    }
  }
  std::snprintf(line, sizeof line, " %8s\n", "mIoU");
  os << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-10s %8zu", protocol_name(r.protocol).c_str(), r.count);
    os << line;
    for (double v : r.recall) {
      std::snprintf(line, sizeof line, " %8.2f", v);
      os << line;
    }
    std::snprintf(line, sizeof line, " %8.4f\n", r.miou);
    os << line;
  }
  return os.str();
}

}  // namespace tslm
