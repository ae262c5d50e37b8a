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

#include "tslm/dataset.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "tslm/errors.hpp"

namespace tslm {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "tslm-ds";
constexpr int kVersion = 1;

json motion_to_json(const MotionSequence& m) {
  const std::size_t F = m.frames();
  json frames = json::array();
  const double* p = m.features.data();
  for (std::size_t f = 0; f < F; ++f) {
    json joints = json::array();
    for (std::size_t j = 0; j < kJoints; ++j) {
      joints.push_back(std::vector<double>(p, p + kJointFeatures));
      p += kJointFeatures;
    }
    frames.push_back(std::move(joints));
  }
  return json{{"motion_id", m.motion_id}, {"duration", m.duration}, {"features", frames}};
}

MotionSequence motion_from_json(const json& j) {
  MotionSequence m;
  m.motion_id = j.at("motion_id").get<std::string>();
  m.duration = j.at("duration").get<double>();
  const auto& frames = j.at("features");
  const std::size_t F = frames.size();
  std::vector<double> data;
  data.reserve(F * kJoints * kJointFeatures);
  for (const auto& frame : frames) {
    if (frame.size() != kJoints) {
      throw ValidationError("frame has " + std::to_string(frame.size()) +
                            " joints, expected 22");
    }
    for (const auto& joint : frame) {
      if (joint.size() != kJointFeatures) {
        throw ValidationError("joint has " + std::to_string(joint.size()) +
                              " features, expected 12");
      }
      for (const auto& v : joint) data.push_back(v.get<double>());
    }
  }
  m.features = Tensor({F, kJoints, kJointFeatures}, std::move(data));
  return m;
}

json sample_to_json(const QuerySample& s) {
  return json{{"motion_id", s.motion_id},
              {"tokens", s.tokens},
              {"text", s.text},
              {"span", {s.t_s, s.t_e}},
              {"split", split_name(s.split)}};
}

QuerySample sample_from_json(const json& j) {
  QuerySample s;
  s.motion_id = j.at("motion_id").get<std::string>();
  s.tokens = j.at("tokens").get<std::vector<std::size_t>>();
  s.text = j.at("text").get<std::string>();
  const auto& span = j.at("span");
  if (span.size() != 2) throw ValidationError("span must have two entries");
  s.t_s = span[0].get<double>();
  s.t_e = span[1].get<double>();
  s.split = parse_split(j.at("split").get<std::string>());
  return s;
}

}  // namespace

std::string split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw ValidationError("unknown split '" + s + "'");
}

std::size_t Dataset::motion_index(const std::string& motion_id) const {
  if (index_.size() == motions.size()) {
    auto it = index_.find(motion_id);
    if (it != index_.end()) return it->second;
  } else {
    for (std::size_t i = 0; i < motions.size(); ++i) {
      if (motions[i].motion_id == motion_id) return i;
    }
  }
  throw ValidationError("unknown motion_id '" + motion_id + "'");
}

std::vector<std::size_t> Dataset::split_indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].split == s) out.push_back(i);
  }
  return out;
}

void Dataset::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < motions.size(); ++i) {
    if (!index_.emplace(motions[i].motion_id, i).second) {
      throw ValidationError("duplicate motion_id '" + motions[i].motion_id + "'");
    }
  }
}

void Dataset::validate() const {
  if (!(fps > 0)) throw ValidationError("fps must be positive");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < motions.size(); ++i) {
    const auto& m = motions[i];
    const std::string where = "motion " + std::to_string(i) + " ('" + m.motion_id + "')";
    if (!ids.insert(m.motion_id).second) throw ValidationError(where + ": duplicate id");
    if (!(m.duration > 0)) throw ValidationError(where + ": duration must be positive");
    if (m.features.rank() != 3 || m.features.shape()[1] != kJoints ||
        m.features.shape()[2] != kJointFeatures || m.frames() == 0) {
      throw ValidationError(where + ": features must be [F x 22 x 12] with F >= 1");
    }
    const double expected = std::floor(m.duration * fps + 0.5);
    if (std::abs(static_cast<double>(m.frames()) - expected) > 1.0) {
      throw ValidationError(where + ": " + std::to_string(m.frames()) +
                            " frames do not match duration " + std::to_string(m.duration));
    }
    if (!m.features.all_finite()) throw ValidationError(where + ": non-finite feature");
  }
  std::map<std::string, Split> motion_split;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const std::string where = "sample " + std::to_string(i);
    if (!ids.count(s.motion_id)) {
      throw ValidationError(where + ": unknown motion_id '" + s.motion_id + "'");
    }
    const double D = motions[motion_index(s.motion_id)].duration;
    if (!(s.t_s >= 0 && s.t_s < s.t_e && s.t_e <= D)) {
      throw ValidationError(where + ": span [" + std::to_string(s.t_s) + ", " +
                            std::to_string(s.t_e) + "] violates 0 <= t_s < t_e <= " +
                            std::to_string(D));
    }
    if (s.tokens.empty()) throw ValidationError(where + ": empty token list");
    for (auto t : s.tokens) {
      if (t >= vocab.size()) {
        throw ValidationError(where + ": token id " + std::to_string(t) +
                              " outside vocabulary of " + std::to_string(vocab.size()));
      }
    }
    auto [it, fresh] = motion_split.emplace(s.motion_id, s.split);
    if (!fresh && it->second != s.split) {
      throw ValidationError(where + ": motion '" + s.motion_id +
                            "' appears in more than one split");
    }
  }
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  ds.validate();
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    json header{{"format", kFormat},         {"version", kVersion},
                {"fps", ds.fps},             {"joints", kJoints},
                {"feat_dim", kJointFeatures}, {"vocab", ds.vocab},
                {"motions", ds.motions.size()}, {"samples", ds.samples.size()}};
    os << header.dump() << '\n';
    for (const auto& m : ds.motions) os << motion_to_json(m).dump() << '\n';
    for (const auto& s : ds.samples) os << sample_to_json(s).dump() << '\n';
    if (!os) throw std::runtime_error("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open dataset " + path.string());
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  std::size_t want_motions = 0, want_samples = 0;
  bool have_counts = false;
  auto fail = [&](const std::string& msg) -> ParseError {
    return ParseError(path.string() + ": line " + std::to_string(line_no) + " (record " +
                      std::to_string(line_no == 0 ? 0 : line_no - 1) + "): " + msg);
  };
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw fail(std::string("malformed JSON: ") + e.what());
    }
    try {
      if (line_no == 1) {
        if (j.value("format", std::string()) != kFormat) throw fail("not a tslm-ds file");
        if (j.value("version", 0) != kVersion) {
          throw fail("unsupported version " + j.value("version", json()).dump() +
                     ", expected " + std::to_string(kVersion));
        }
        if (j.at("joints").get<std::size_t>() != kJoints ||
            j.at("feat_dim").get<std::size_t>() != kJointFeatures) {
          throw fail("header joints/feat_dim must be 22/12");
        }
        ds.fps = j.at("fps").get<double>();
        ds.vocab = j.at("vocab").get<std::vector<std::string>>();
        if (j.contains("motions") && j.contains("samples")) {
          have_counts = true;
          want_motions = j["motions"].get<std::size_t>();
          want_samples = j["samples"].get<std::size_t>();
        }
      } else if (j.contains("features")) {
        ds.motions.push_back(motion_from_json(j));
      } else if (j.contains("tokens")) {
        ds.samples.push_back(sample_from_json(j));
      } else {
        throw fail("record is neither a motion nor a sample");
      }
    } catch (const json::exception& e) {
      throw fail(e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ": line " + std::to_string(line_no) +
                            " (record " + std::to_string(line_no - 1) + "): " + e.what());
    }
  }
  if (line_no == 0) throw fail("empty file");
  if (have_counts && (ds.motions.size() != want_motions || ds.samples.size() != want_samples)) {
    throw ParseError(path.string() + ": truncated after record " +
                     std::to_string(line_no - 1) + " (header announces " +
                     std::to_string(want_motions) + " motions and " +
                     std::to_string(want_samples) + " samples)");
  }
  ds.reindex();
  ds.validate();
  return ds;
}

std::string tokens_text(const std::vector<std::string>& vocab,
                        const std::vector<std::size_t>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i] < vocab.size() ? vocab[tokens[i]] : "<unk>";
  }
  return out;
}

}  // namespace tslm
