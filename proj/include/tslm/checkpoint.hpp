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
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tslm/tape.hpp"

namespace tslm::ad {

inline constexpr char kCheckpointMagic[4] = {'M', 'L', 'P', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary snapshot: magic "MLPC", u32 format version, u64 manifest length,
/// a text manifest, then the tensor payload as little-endian f64 arrays.
///
/// Manifest lines:
///   meta <key> <value...>
///   tensor <name> <rank> <dim>... <byte offset> <element count>
/// Offsets are relative to the first payload byte.
struct CheckpointData {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::filesystem::path& path);

/// Adds every parameter and buffer of `store` under its own name.
void append_parameters(CheckpointData& data, const ParameterStore& store);
/// Copies tensors back by name; every store entry must be present with the
/// same shape.
void restore_parameters(const CheckpointData& data, ParameterStore& store);

}  // namespace tslm::ad
