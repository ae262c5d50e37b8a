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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tslm/dataset.hpp"
#include "tslm/rng.hpp"

namespace tslm {

/// One sinusoidal joint-angle drive: angle(t) = offset + amplitude * sin(2 pi hz t + phase).
struct JointDrive {
  std::size_t joint = 0;
  int axis = 0;  // 0 pitch (about x), 1 roll (about z), 2 yaw (about y)
  double offset = 0.0;
  double amplitude = 0.0;
  double hz = 0.0;
  double phase = 0.0;
};

struct ActionType {
  std::string name;
  /// Query phrase; "{side}" is replaced by left or right for sided actions.
  std::string phrase;
  bool sided = false;
  std::vector<JointDrive> drives;  // written for the right side
  double forward_speed = 0.0;      // m/s along the facing direction
  double yaw_rate = 0.0;           // rad/s of the root
  double height_offset = 0.0;      // m
  double bounce = 0.0;             // m, vertical oscillation amplitude
  double bounce_hz = 0.0;
};

const std::vector<ActionType>& default_action_library();

struct SyntheticConfig {
  std::uint64_t seed = 7;
  std::size_t train_samples = 500;
  std::size_t val_samples = 50;
  std::size_t test_samples = 100;
  std::size_t min_primitives = 3;
  std::size_t max_primitives = 8;
  double min_seconds = 2.0;
  double max_seconds = 5.0;
  double fps = kDefaultFps;
  double noise = 0.01;
  /// Chance that a primitive repeats an earlier one of the same motion verbatim.
  double repeat_probability = 0.05;
  double blend_seconds = 0.25;
  std::vector<ActionType> library = default_action_library();
};

/// Reads a generator config from JSON; absent keys keep their defaults.
SyntheticConfig synthetic_config_from_json(const std::string& text);

/// Planted primitive of a generated motion.
struct Primitive {
  std::size_t action = 0;
  int side = 0;   // 0 right, 1 left
  int speed = 1;  // 0 slowly, 1 normal, 2 quickly
  double t_s = 0.0;
  double t_e = 0.0;
};

/// Query text of a primitive, e.g. "wave left hand quickly".
std::string primitive_text(const ActionType& action, const Primitive& p);

/// Sorted vocabulary of every word a library can emit.
std::vector<std::string> library_vocab(const std::vector<ActionType>& library);

/// Joint-grid features [F x 22 x 12] for a primitive sequence.
Tensor render_motion(const std::vector<Primitive>& prims, const SyntheticConfig& cfg,
                     Rng& rng);

Dataset generate_synthetic_dataset(const SyntheticConfig& cfg);

/// Recovers the action a token sequence names, or nullopt when none matches.
std::optional<std::size_t> identify_action(const std::vector<std::size_t>& tokens,
                                           const std::vector<std::string>& vocab,
                                           const std::vector<ActionType>& library);

}  // namespace tslm
