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

#include <array>
#include <cstddef>
#include <filesystem>
#include <vector>

#include "tslm/ops.hpp"

namespace tslm {

using ad::Tensor;

inline constexpr std::size_t kJoints = 22;
inline constexpr std::size_t kJointFeatures = 12;  // position 3, rotation 6, velocity 3
inline constexpr std::size_t kRawPoseDim = 263;
inline constexpr double kDefaultFps = 20.0;

/// i = round_half_up(t / D * T), clamped to [0, T-1].
std::size_t time_to_index(double t, double duration, std::size_t T);
/// t = i / T * D.
double index_to_time(std::size_t i, double duration, std::size_t T);

/// Averages [F x d] frames into T = min(F, S) bins with boundaries floor(kF/T).
Tensor snippetize(const Tensor& frames, std::size_t S);
/// snippetize for [F x J x c] joint grids; returns [T x J x c].
Tensor snippetize_joints(const Tensor& grid, std::size_t S);

/// Kinematic chains of the 22-joint body skeleton.
const std::vector<std::vector<std::size_t>>& skeleton_chains();
/// Parent joint per joint; the root's parent is itself.
const std::array<std::size_t, kJoints>& skeleton_parents();
/// Neighbour lists of the skeleton graph, self-loops included.
ad::Adjacency skeleton_adjacency();
/// Dense 0/1 matrix of an adjacency list.
Tensor dense_adjacency(const ad::Adjacency& adj);

/// Mapping from the 263-channel pose vector to the 22 x 12 joint grid.
/// table[j][s] is the raw channel feeding slot s of joint j, or -1 for zero.
struct JointLayout {
  std::size_t raw_dim = kRawPoseDim;
  std::vector<std::array<int, kJointFeatures>> table;
  std::vector<int> dropped;

  /// Throws ValidationError when the table is inconsistent with raw_dim.
  void validate() const;
  bool operator==(const JointLayout&) const = default;
};

/// Root channels, root-relative positions, 6D rotations, local velocities
/// and foot contacts, in that order.
JointLayout conventional_layout_263();
JointLayout load_joint_layout(const std::filesystem::path& path);
void save_joint_layout(const JointLayout& layout, const std::filesystem::path& path);
/// Location of the layout table shipped with the sources.
std::filesystem::path default_layout_path();

/// [F x raw_dim] -> [F x 22 x 12]; unmapped channels (foot contact) are dropped.
Tensor recover_joints(const Tensor& raw, const JointLayout& layout);
/// Inverse placement of recover_joints; channels without a slot stay zero.
Tensor scatter_joints(const Tensor& grid, const JointLayout& layout);

}  // namespace tslm
