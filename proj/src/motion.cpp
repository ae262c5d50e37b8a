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

#include "tslm/motion.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "tslm/errors.hpp"

#ifndef TSLM_DATA_DIR
#define TSLM_DATA_DIR "data"
#endif

namespace tslm {

std::size_t time_to_index(double t, double duration, std::size_t T) {
  if (T == 0) throw ValidationError("time_to_index: T must be positive");
  if (!(duration > 0.0)) throw ValidationError("time_to_index: duration must be positive");
  if (!(t >= 0.0 && t <= duration)) {
    throw RangeError("time " + std::to_string(t) + " outside [0, " +
                     std::to_string(duration) + "]");
  }
  const double raw = std::floor(t / duration * static_cast<double>(T) + 0.5);
  const auto i = static_cast<std::size_t>(raw);
  return i > T - 1 ? T - 1 : i;
}

double index_to_time(std::size_t i, double duration, std::size_t T) {
  if (i >= T) {
    throw RangeError("index " + std::to_string(i) + " outside [0, " +
                     std::to_string(T) + ")");
  }
  return static_cast<double>(i) / static_cast<double>(T) * duration;
}

Tensor snippetize(const Tensor& frames, std::size_t S) {
  const std::size_t F = frames.rows();
  const std::size_t d = frames.cols();
  if (F == 0 || frames.empty()) throw ValidationError("snippetize: empty motion");
  if (S == 0) throw ValidationError("snippetize: S must be positive");
  if (F <= S) return Tensor({F, d}, frames.storage());
  const std::size_t T = S;
  Tensor out({T, d});
  for (std::size_t k = 0; k < T; ++k) {
    const std::size_t lo = k * F / T;
    const std::size_t hi = (k + 1) * F / T;
    for (std::size_t f = lo; f < hi; ++f) {
      for (std::size_t c = 0; c < d; ++c) out.at(k, c) += frames.at(f, c);
    }
    const double inv = 1.0 / static_cast<double>(hi - lo);
    for (std::size_t c = 0; c < d; ++c) out.at(k, c) *= inv;
  }
  return out;
}

Tensor snippetize_joints(const Tensor& grid, std::size_t S) {
  if (grid.rank() != 3) {
    throw DimensionError("snippetize_joints expects [F x J x c], got " +
                         ad::shape_str(grid.shape()));
  }
  const std::size_t F = grid.shape()[0], J = grid.shape()[1], c = grid.shape()[2];
  Tensor flat = snippetize(grid.reshaped({F, J * c}), S);
  return flat.reshaped({flat.rows(), J, c});
}

const std::vector<std::vector<std::size_t>>& skeleton_chains() {
  static const std::vector<std::vector<std::size_t>> chains = {
      {0, 2, 5, 8, 11}, {0, 1, 4, 7, 10}, {0, 3, 6, 9, 12, 15},
      {9, 14, 17, 19, 21}, {9, 13, 16, 18, 20}};
  return chains;
}

const std::array<std::size_t, kJoints>& skeleton_parents() {
  static const std::array<std::size_t, kJoints> parents = [] {
    std::array<std::size_t, kJoints> p{};
    p[0] = 0;
    for (const auto& chain : skeleton_chains()) {
      for (std::size_t i = 1; i < chain.size(); ++i) p[chain[i]] = chain[i - 1];
    }
    return p;
  }();
  return parents;
}

ad::Adjacency skeleton_adjacency() {
  std::vector<std::set<std::size_t>> sets(kJoints);
  for (std::size_t j = 0; j < kJoints; ++j) sets[j].insert(j);
  for (const auto& chain : skeleton_chains()) {
    for (std::size_t i = 1; i < chain.size(); ++i) {
      sets[chain[i]].insert(chain[i - 1]);
      sets[chain[i - 1]].insert(chain[i]);
    }
  }
  ad::Adjacency adj(kJoints);
  for (std::size_t j = 0; j < kJoints; ++j) adj[j].assign(sets[j].begin(), sets[j].end());
  return adj;
}

Tensor dense_adjacency(const ad::Adjacency& adj) {
  const std::size_t J = adj.size();
  Tensor a({J, J});
  for (std::size_t i = 0; i < J; ++i) {
    for (auto j : adj[i]) a.at(i, j) = 1.0;
  }
  return a;
}

void JointLayout::validate() const {
  if (table.size() != kJoints) {
    throw ValidationError("joint layout needs " + std::to_string(kJoints) +
                          " joints, got " + std::to_string(table.size()));
  }
  std::vector<int> owner(raw_dim, 0);
  for (int ch : dropped) {
    if (ch < 0 || static_cast<std::size_t>(ch) >= raw_dim) {
      throw ValidationError("dropped channel " + std::to_string(ch) + " out of range");
    }
    owner[ch] += 1;
  }
  for (std::size_t j = 0; j < table.size(); ++j) {
    for (std::size_t s = 0; s < kJointFeatures; ++s) {
      const int ch = table[j][s];
      if (ch == -1) continue;
      if (ch < -1 || static_cast<std::size_t>(ch) >= raw_dim) {
        throw ValidationError("layout channel " + std::to_string(ch) + " at joint " +
                              std::to_string(j) + " slot " + std::to_string(s) +
                              " is outside the " + std::to_string(raw_dim) +
                              "-dim pose");
      }
      owner[ch] += 1;
    }
  }
  for (std::size_t ch = 0; ch < raw_dim; ++ch) {
    if (owner[ch] > 1) {
      throw ValidationError("layout channel " + std::to_string(ch) + " used twice");
    }
  }
}

JointLayout conventional_layout_263() {
  JointLayout l;
  l.table.assign(kJoints, {});
  for (auto& row : l.table) row.fill(-1);
  // root: height in the y position slot, rotation velocity and planar
  // velocity in the first three rotation slots.
  l.table[0][1] = 3;
  l.table[0][3] = 0;
  l.table[0][4] = 1;
  l.table[0][5] = 2;
  for (std::size_t j = 1; j < kJoints; ++j) {
    for (int k = 0; k < 3; ++k) l.table[j][k] = static_cast<int>(4 + 3 * (j - 1) + k);
    for (int k = 0; k < 6; ++k) l.table[j][3 + k] = static_cast<int>(67 + 6 * (j - 1) + k);
  }
  for (std::size_t j = 0; j < kJoints; ++j) {
    for (int k = 0; k < 3; ++k) l.table[j][9 + k] = static_cast<int>(193 + 3 * j + k);
  }
  l.dropped = {259, 260, 261, 262};
  return l;
}

JointLayout load_joint_layout(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open joint layout " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("joint layout " + path.string() + ": " + e.what());
  }
  JointLayout l;
  try {
    l.raw_dim = j.at("raw_dim").get<std::size_t>();
    if (j.at("joints").get<std::size_t>() != kJoints ||
        j.at("slots").get<std::size_t>() != kJointFeatures) {
      throw ValidationError("joint layout must be 22 joints x 12 slots");
    }
    for (const auto& row : j.at("table")) {
      if (row.size() != kJointFeatures) {
        throw ValidationError("joint layout row needs 12 slots");
      }
      std::array<int, kJointFeatures> r{};
      for (std::size_t s = 0; s < kJointFeatures; ++s) r[s] = row[s].get<int>();
      l.table.push_back(r);
    }
    l.dropped = j.value("dropped", std::vector<int>{});
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("joint layout " + path.string() + ": " + e.what());
  }
  l.validate();
  return l;
}

void save_joint_layout(const JointLayout& layout, const std::filesystem::path& path) {
  layout.validate();
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "{\n  \"raw_dim\": " << layout.raw_dim << ",\n  \"joints\": " << kJoints
     << ",\n  \"slots\": " << kJointFeatures << ",\n  \"slot_names\": "
     << R"(["px","py","pz","r0","r1","r2","r3","r4","r5","vx","vy","vz"])"
     << ",\n  \"dropped\": " << nlohmann::json(layout.dropped).dump()
     << ",\n  \"table\": [\n";
  for (std::size_t j = 0; j < layout.table.size(); ++j) {
    os << "    " << nlohmann::json(layout.table[j]).dump()
       << (j + 1 < layout.table.size() ? ",\n" : "\n");
  }
  os << "  ]\n}\n";
}

std::filesystem::path default_layout_path() {
  return std::filesystem::path(TSLM_DATA_DIR) / "joint_layout_263.json";
}

Tensor recover_joints(const Tensor& raw, const JointLayout& layout) {
  layout.validate();
  if (raw.cols() != layout.raw_dim) {
    throw ValidationError("raw pose has " + std::to_string(raw.cols()) +
                          " channels, layout expects " + std::to_string(layout.raw_dim));
  }
  const std::size_t F = raw.rows();
  Tensor out({F, kJoints, kJointFeatures});
  for (std::size_t f = 0; f < F; ++f) {
    double* dst = out.data() + f * kJoints * kJointFeatures;
    for (std::size_t j = 0; j < kJoints; ++j) {
      for (std::size_t s = 0; s < kJointFeatures; ++s) {
        const int ch = layout.table[j][s];
        dst[j * kJointFeatures + s] = ch < 0 ? 0.0 : raw.at(f, static_cast<std::size_t>(ch));
      }
    }
  }
  return out;
}

Tensor scatter_joints(const Tensor& grid, const JointLayout& layout) {
  layout.validate();
  if (grid.rank() != 3 || grid.shape()[1] != kJoints || grid.shape()[2] != kJointFeatures) {
    throw DimensionError("scatter_joints expects [F x 22 x 12], got " +
                         ad::shape_str(grid.shape()));
  }
  const std::size_t F = grid.shape()[0];
  Tensor raw({F, layout.raw_dim});
  for (std::size_t f = 0; f < F; ++f) {
    const double* src = grid.data() + f * kJoints * kJointFeatures;
    for (std::size_t j = 0; j < kJoints; ++j) {
      for (std::size_t s = 0; s < kJointFeatures; ++s) {
        const int ch = layout.table[j][s];
        if (ch >= 0) raw.at(f, static_cast<std::size_t>(ch)) = src[j * kJointFeatures + s];
      }
    }
  }
  return raw;
}

}  // namespace tslm
