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

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tslm/motion.hpp"

namespace tslm {

enum class Split { kTrain, kVal, kTest };

std::string split_name(Split s);
/// Throws ValidationError for anything other than train, val or test.
Split parse_split(const std::string& s);

struct MotionSequence {
  std::string motion_id;
  double duration = 0.0;
  /// [F x 22 x 12]
  Tensor features;

  std::size_t frames() const { return features.rank() ? features.shape()[0] : 0; }
  bool operator==(const MotionSequence&) const = default;
};

struct QuerySample {
  std::string motion_id;
  std::vector<std::size_t> tokens;
  std::string text;
  double t_s = 0.0;
  double t_e = 0.0;
  Split split = Split::kTrain;

  bool operator==(const QuerySample&) const = default;
};

struct Dataset {
  double fps = kDefaultFps;
  std::vector<std::string> vocab;
  std::vector<MotionSequence> motions;
  std::vector<QuerySample> samples;

  /// Index of a motion by id; throws ValidationError when absent.
  std::size_t motion_index(const std::string& motion_id) const;
  const MotionSequence& motion(const std::string& motion_id) const {
    return motions[motion_index(motion_id)];
  }
  /// Sample indices belonging to one split, in file order.
  std::vector<std::size_t> split_indices(Split s) const;
  /// Checks every invariant of the format; throws ValidationError naming the
  /// offending record.
  void validate() const;
  /// Rebuilds the id lookup after motions were added by hand.
  void reindex();

  bool operator==(const Dataset& o) const {
    return fps == o.fps && vocab == o.vocab && motions == o.motions && samples == o.samples;
  }

 private:
  std::map<std::string, std::size_t> index_;
};

void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Space separated rendering of token ids.
std::string tokens_text(const std::vector<std::string>& vocab,
                        const std::vector<std::size_t>& tokens);

}  // namespace tslm
