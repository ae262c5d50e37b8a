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

#include "tslm/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <Eigen/Dense>
#include <json.hpp>

#include "tslm/errors.hpp"

namespace tslm {

namespace {

constexpr double kTwoPi = 6.283185307179586;
constexpr double kSpeedScale[3] = {0.6, 1.0, 1.6};
constexpr const char* kSpeedWord[3] = {"slowly", "", "quickly"};
constexpr const char* kSideWord[2] = {"right", "left"};

using Eigen::Matrix3d;
using Eigen::Vector3d;

// Rest offsets from parent, metres; y up, z forward, +x towards the left side.
const Vector3d kRestOffset[kJoints] = {
    {0.0, 0.95, 0.0},   {0.09, -0.08, 0.0},  {-0.09, -0.08, 0.0}, {0.0, 0.12, 0.0},
    {0.0, -0.40, 0.0},  {0.0, -0.40, 0.0},   {0.0, 0.14, 0.0},    {0.0, -0.42, 0.0},
    {0.0, -0.42, 0.0},  {0.0, 0.06, 0.0},    {0.0, -0.06, 0.12},  {0.0, -0.06, 0.12},
    {0.0, 0.22, 0.0},   {0.08, 0.12, 0.0},   {-0.08, 0.12, 0.0},  {0.0, 0.10, 0.03},
    {0.10, 0.03, 0.0},  {-0.10, 0.03, 0.0},  {0.0, -0.27, 0.0},   {0.0, -0.27, 0.0},
    {0.0, -0.25, 0.0},  {0.0, -0.25, 0.0}};

std::size_t mirror_joint(std::size_t j) {
  switch (j) {
    case 1: return 2;   case 2: return 1;   case 4: return 5;   case 5: return 4;
    case 7: return 8;   case 8: return 7;   case 10: return 11; case 11: return 10;
    case 13: return 14; case 14: return 13; case 16: return 17; case 17: return 16;
    case 18: return 19; case 19: return 18; case 20: return 21; case 21: return 20;
    default: return j;
  }
}

Matrix3d rot_x(double a) {
  Matrix3d m;
  m << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return m;
}
Matrix3d rot_y(double a) {
  Matrix3d m;
  m << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return m;
}
Matrix3d rot_z(double a) {
  Matrix3d m;
  m << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return m;
}

// Per-primitive draw that varies instances of the same action.
struct Instance {
  double amp_scale = 1.0;
  double phase = 0.0;
};

struct Pose {
  double angle[kJoints][3] = {};
  double forward_speed = 0.0;
  double yaw_rate = 0.0;
  double height = 0.0;
};

Pose pose_at(const ActionType& a, const Primitive& p, const Instance& inst, double t) {
  Pose pose;
  const double sp = kSpeedScale[p.speed];
  const double tau = t - p.t_s;
  for (const auto& d : a.drives) {
    const bool flip = a.sided && p.side == 1;
    const std::size_t j = flip ? mirror_joint(d.joint) : d.joint;
    const double sign = (flip && d.axis != 0) ? -1.0 : 1.0;
    const double v = d.offset + inst.amp_scale * d.amplitude *
                                    std::sin(kTwoPi * d.hz * sp * tau + d.phase + inst.phase);
    pose.angle[j][d.axis] += sign * v;
  }
  pose.forward_speed = a.forward_speed * sp;
  pose.yaw_rate = a.yaw_rate * sp;
  pose.height = a.height_offset +
                a.bounce * inst.amp_scale *
                    std::abs(std::sin(kTwoPi * a.bounce_hz * sp * tau * 0.5 + inst.phase));
  return pose;
}

Pose blend(const Pose& a, const Pose& b, double w) {
  Pose out;
  for (std::size_t j = 0; j < kJoints; ++j) {
    for (int k = 0; k < 3; ++k) out.angle[j][k] = (1 - w) * a.angle[j][k] + w * b.angle[j][k];
  }
  out.forward_speed = (1 - w) * a.forward_speed + w * b.forward_speed;
  out.yaw_rate = (1 - w) * a.yaw_rate + w * b.yaw_rate;
  out.height = (1 - w) * a.height + w * b.height;
  return out;
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

double quantize(double v) { return std::round(v * 1e4) / 1e4; }

}  // namespace

const std::vector<ActionType>& default_action_library() {
  static const std::vector<ActionType> lib = [] {
    std::vector<ActionType> v;
    // Walking and running swing hips and shoulders in antiphase.
    v.push_back({"walk", "walk forward", false,
                 {{1, 0, 0.0, 0.45, 0.9, 0.0}, {2, 0, 0.0, 0.45, 0.9, 3.14159},
                  {4, 0, 0.35, 0.35, 0.9, 1.57}, {5, 0, 0.35, 0.35, 0.9, 4.71},
                  {16, 0, 0.0, 0.3, 0.9, 3.14159}, {17, 0, 0.0, 0.3, 0.9, 0.0}},
                 1.2, 0.0, 0.0, 0.03, 1.8});
    v.push_back({"run", "run forward", false,
                 {{1, 0, -0.2, 0.8, 1.5, 0.0}, {2, 0, -0.2, 0.8, 1.5, 3.14159},
                  {4, 0, 0.9, 0.7, 1.5, 1.57}, {5, 0, 0.9, 0.7, 1.5, 4.71},
                  {16, 0, 0.0, 0.6, 1.5, 3.14159}, {17, 0, 0.0, 0.6, 1.5, 0.0},
                  {18, 0, -1.3, 0.0, 0.0, 0.0}, {19, 0, -1.3, 0.0, 0.0, 0.0},
                  {3, 0, 0.25, 0.0, 0.0, 0.0}},
                 3.0, 0.0, 0.0, 0.08, 3.0});
    v.push_back({"jump", "jump in place", false,
                 {{1, 0, -0.5, 0.5, 0.8, 0.0}, {2, 0, -0.5, 0.5, 0.8, 0.0},
                  {4, 0, 0.8, 0.8, 0.8, 0.0}, {5, 0, 0.8, 0.8, 0.8, 0.0},
                  {16, 0, -1.0, 1.0, 0.8, 3.14159}, {17, 0, -1.0, 1.0, 0.8, 3.14159}},
                 0.0, 0.0, 0.05, 0.35, 0.8});
    v.push_back({"wave", "wave {side} hand", true,
                 {{17, 2, 0.0, 0.0, 0.0, 0.0}, {17, 1, -2.5, 0.1, 0.5, 0.0},
                  {19, 1, -0.3, 0.7, 1.6, 0.0}, {21, 1, 0.0, 0.4, 1.6, 1.0}},
                 0.0, 0.0, 0.0, 0.0, 0.0});
    v.push_back({"kick", "kick {side} leg", true,
                 {{2, 0, -0.7, 0.7, 0.7, 0.0}, {5, 0, 0.5, 0.5, 0.7, 2.0},
                  {1, 0, 0.1, 0.0, 0.0, 0.0}, {16, 1, 0.4, 0.0, 0.0, 0.0},
                  {17, 1, -0.4, 0.0, 0.0, 0.0}},
                 0.0, 0.0, 0.0, 0.0, 0.0});
    v.push_back({"squat", "squat down", false,
                 {{1, 0, -1.2, 0.25, 0.4, 0.0}, {2, 0, -1.2, 0.25, 0.4, 0.0},
                  {4, 0, 1.8, 0.4, 0.4, 0.0}, {5, 0, 1.8, 0.4, 0.4, 0.0},
                  {7, 0, -0.6, 0.15, 0.4, 0.0}, {8, 0, -0.6, 0.15, 0.4, 0.0},
                  {16, 0, -1.4, 0.0, 0.0, 0.0}, {17, 0, -1.4, 0.0, 0.0, 0.0},
                  {3, 0, 0.3, 0.0, 0.0, 0.0}},
                 0.0, 0.0, -0.35, 0.0, 0.0});
    v.push_back({"turn", "turn around", false,
                 {{1, 0, 0.0, 0.2, 1.2, 0.0}, {2, 0, 0.0, 0.2, 1.2, 3.14159},
                  {3, 2, 0.0, 0.3, 0.6, 0.0}, {16, 1, 0.3, 0.0, 0.0, 0.0},
                  {17, 1, -0.3, 0.0, 0.0, 0.0}},
                 0.0, 1.6, 0.0, 0.0, 0.0});
    v.push_back({"punch", "punch with {side} fist", true,
                 {{17, 0, -1.3, 0.2, 1.8, 0.0}, {19, 0, -0.9, 0.9, 1.8, 0.0},
                  {16, 0, -1.0, 0.0, 0.0, 0.0}, {18, 0, -1.8, 0.0, 0.0, 0.0},
                  {9, 2, 0.0, 0.25, 1.8, 0.0}},
                 0.0, 0.0, 0.0, 0.0, 0.0});
    v.push_back({"bow", "bow politely", false,
                 {{3, 0, 0.45, 0.25, 0.5, 0.0}, {6, 0, 0.35, 0.2, 0.5, 0.0},
                  {9, 0, 0.2, 0.1, 0.5, 0.0}, {12, 0, 0.3, 0.0, 0.0, 0.0}},
                 0.0, 0.0, 0.0, 0.0, 0.0});
    v.push_back({"raise", "raise both arms", false,
                 {{16, 1, 2.6, 0.15, 0.6, 0.0}, {17, 1, -2.6, 0.15, 0.6, 0.0},
                  {18, 1, 0.2, 0.2, 0.6, 0.0}, {19, 1, -0.2, 0.2, 0.6, 0.0}},
                 0.0, 0.0, 0.02, 0.0, 0.0});
    v.push_back({"clap", "clap hands", false,
                 {{16, 0, -1.2, 0.0, 0.0, 0.0}, {17, 0, -1.2, 0.0, 0.0, 0.0},
                  {16, 2, -0.3, 0.45, 2.2, 0.0}, {17, 2, 0.3, 0.45, 2.2, 3.14159},
                  {18, 0, -0.8, 0.0, 0.0, 0.0}, {19, 0, -0.8, 0.0, 0.0, 0.0}},
                 0.0, 0.0, 0.0, 0.0, 0.0});
    return v;
  }();
  return lib;
}

SyntheticConfig synthetic_config_from_json(const std::string& text) {
  SyntheticConfig c;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("generator config: ") + e.what());
  }
  try {
    c.seed = j.value("seed", c.seed);
    c.train_samples = j.value("train_samples", c.train_samples);
    c.val_samples = j.value("val_samples", c.val_samples);
    c.test_samples = j.value("test_samples", c.test_samples);
    c.min_primitives = j.value("min_primitives", c.min_primitives);
    c.max_primitives = j.value("max_primitives", c.max_primitives);
    c.min_seconds = j.value("min_seconds", c.min_seconds);
    c.max_seconds = j.value("max_seconds", c.max_seconds);
    c.fps = j.value("fps", c.fps);
    c.noise = j.value("noise", c.noise);
    c.repeat_probability = j.value("repeat_probability", c.repeat_probability);
    c.blend_seconds = j.value("blend_seconds", c.blend_seconds);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("generator config: ") + e.what());
  }
  return c;
}

std::string primitive_text(const ActionType& action, const Primitive& p) {
  std::string phrase = action.phrase;
  const auto pos = phrase.find("{side}");
  if (pos != std::string::npos) phrase.replace(pos, 6, kSideWord[p.side]);
  if (*kSpeedWord[p.speed]) phrase += std::string(" ") + kSpeedWord[p.speed];
  return phrase;
}

std::vector<std::string> library_vocab(const std::vector<ActionType>& library) {
  std::set<std::string> words = {"left", "right", "slowly", "quickly"};
  for (const auto& a : library) {
    for (const auto& w : split_words(a.phrase)) {
      if (w != "{side}") words.insert(w);
    }
  }
  return {words.begin(), words.end()};
}

Tensor render_motion(const std::vector<Primitive>& prims, const SyntheticConfig& cfg,
                     Rng& rng) {
  if (prims.empty()) throw ValidationError("render_motion: no primitives");
  const double D = prims.back().t_e;
  const auto F = static_cast<std::size_t>(std::floor(D * cfg.fps + 0.5));
  std::vector<Instance> inst(prims.size());
  for (auto& i : inst) {
    i.amp_scale = rng.uniform(0.85, 1.15);
    i.phase = rng.uniform(0.0, kTwoPi);
  }

  std::vector<std::array<Vector3d, kJoints>> pos(F);
  std::vector<std::array<Matrix3d, kJoints>> local(F);
  std::vector<double> yaw(F), yaw_rate(F), height(F);
  std::vector<Vector3d> root_vel(F);
  double cur_yaw = 0.0;
  Vector3d root_xz(0, 0, 0);
  std::size_t k = 0;
  const auto& parents = skeleton_parents();
  for (std::size_t f = 0; f < F; ++f) {
    const double t = static_cast<double>(f) / cfg.fps;
    while (k + 1 < prims.size() && t >= prims[k].t_e) ++k;
    Pose pose = pose_at(cfg.library[prims[k].action], prims[k], inst[k], t);
    const double into = t - prims[k].t_s;
    if (k > 0 && into < cfg.blend_seconds) {
      const Pose prev = pose_at(cfg.library[prims[k - 1].action], prims[k - 1], inst[k - 1], t);
      pose = blend(prev, pose, into / cfg.blend_seconds);
    }
    const Matrix3d facing = rot_y(cur_yaw);
    const Vector3d vel = facing * Vector3d(0, 0, pose.forward_speed);
    yaw[f] = cur_yaw;
    yaw_rate[f] = pose.yaw_rate;
    height[f] = pose.height;
    root_vel[f] = vel;

    std::array<Matrix3d, kJoints> global;
    for (std::size_t j = 0; j < kJoints; ++j) {
      const Matrix3d r = rot_y(pose.angle[j][2]) * rot_x(pose.angle[j][0]) *
                         rot_z(pose.angle[j][1]);
      local[f][j] = r;
      if (j == 0) {
        global[0] = facing * r;
        pos[f][0] = Vector3d(root_xz.x(), kRestOffset[0].y() + pose.height, root_xz.z());
      } else {
        const std::size_t p = parents[j];
        global[j] = global[p] * r;
        pos[f][j] = pos[f][p] + global[p] * kRestOffset[j];
      }
    }
    cur_yaw += pose.yaw_rate / cfg.fps;
    root_xz += vel / cfg.fps;
  }

  Tensor out({F, kJoints, kJointFeatures});
  for (std::size_t f = 0; f < F; ++f) {
    const Matrix3d to_facing = rot_y(yaw[f]).transpose();
    const Vector3d root_plane(pos[f][0].x(), 0.0, pos[f][0].z());
    const std::size_t fa = f == 0 ? (F > 1 ? 1 : 0) : f;
    const std::size_t fb = fa == 0 ? 0 : fa - 1;
    double* row = out.data() + f * kJoints * kJointFeatures;
    for (std::size_t j = 0; j < kJoints; ++j) {
      double* s = row + j * kJointFeatures;
      const Vector3d v = to_facing * (pos[fa][j] - pos[fb][j]) * cfg.fps;
      if (j == 0) {
        const Vector3d lin = to_facing * root_vel[f];
        s[1] = height[f];
        s[3] = yaw_rate[f];
        s[4] = lin.x();
        s[5] = lin.z();
      } else {
        const Vector3d rel = to_facing * (pos[f][j] - root_plane);
        for (int c = 0; c < 3; ++c) s[c] = rel[c];
        for (int c = 0; c < 3; ++c) {
          s[3 + c] = local[f][j](c, 0);
          s[6 + c] = local[f][j](c, 1);
        }
      }
      for (int c = 0; c < 3; ++c) s[9 + c] = v[c];
    }
  }
  for (auto& x : out.values()) x = quantize(x + cfg.noise * rng.normal());
  return out;
}

Dataset generate_synthetic_dataset(const SyntheticConfig& cfg) {
  if (cfg.library.empty()) throw ValidationError("synthetic generator: empty primitive library");
  if (cfg.min_primitives < 1 || cfg.min_primitives > cfg.max_primitives) {
    throw ValidationError("synthetic generator: bad primitives-per-motion range");
  }
  if (!(cfg.min_seconds > 0 && cfg.min_seconds <= cfg.max_seconds)) {
    throw ValidationError("synthetic generator: bad primitive duration range");
  }
  Dataset ds;
  ds.fps = cfg.fps;
  ds.vocab = library_vocab(cfg.library);
  std::map<std::string, std::size_t> word_id;
  for (std::size_t i = 0; i < ds.vocab.size(); ++i) word_id[ds.vocab[i]] = i;

  const std::pair<Split, std::size_t> quotas[] = {{Split::kTrain, cfg.train_samples},
                                                  {Split::kVal, cfg.val_samples},
                                                  {Split::kTest, cfg.test_samples}};
  const double frame = 1.0 / cfg.fps;
  std::size_t motion_no = 0;
  for (const auto& [split, quota] : quotas) {
    std::size_t made = 0;
    while (made < quota) {
      Rng rng = Rng::stream(cfg.seed, motion_no);
      const std::size_t n =
          cfg.min_primitives + rng.index(cfg.max_primitives - cfg.min_primitives + 1);
      std::vector<std::size_t> order(cfg.library.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      rng.shuffle(order.begin(), order.end());
      std::vector<Primitive> prims;
      double t = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        Primitive p;
        if (i > 0 && rng.bernoulli(cfg.repeat_probability)) {
          const Primitive& src = prims[rng.index(prims.size())];
          p.action = src.action;
          p.side = src.side;
          p.speed = src.speed;
        } else {
          p.action = order[i % order.size()];
          p.side = static_cast<int>(rng.index(2));
          p.speed = static_cast<int>(rng.index(3));
        }
        const double len =
            std::max(frame, std::round(rng.uniform(cfg.min_seconds, cfg.max_seconds) / frame) *
                                frame);
        p.t_s = t;
        p.t_e = t + len;
        t = p.t_e;
        prims.push_back(p);
      }
      char id[16];
      std::snprintf(id, sizeof id, "m%05zu", motion_no);
      MotionSequence m;
      m.motion_id = id;
      m.duration = prims.back().t_e;
      m.features = render_motion(prims, cfg, rng);
      for (const auto& p : prims) {
        if (made >= quota) break;
        QuerySample s;
        s.motion_id = m.motion_id;
        s.text = primitive_text(cfg.library[p.action], p);
        for (const auto& w : split_words(s.text)) s.tokens.push_back(word_id.at(w));
        s.t_s = p.t_s;
        s.t_e = p.t_e;
        s.split = split;
        ds.samples.push_back(std::move(s));
        ++made;
      }
      ds.motions.push_back(std::move(m));
      ++motion_no;
    }
  }
  ds.reindex();
  return ds;
}

std::optional<std::size_t> identify_action(const std::vector<std::size_t>& tokens,
                                           const std::vector<std::string>& vocab,
                                           const std::vector<ActionType>& library) {
  std::set<std::string> words;
  for (auto t : tokens) {
    if (t < vocab.size()) words.insert(vocab[t]);
  }
  std::optional<std::size_t> best;
  std::size_t best_len = 0;
  for (std::size_t a = 0; a < library.size(); ++a) {
    std::size_t len = 0;
    bool all = true;
    for (const auto& w : split_words(library[a].phrase)) {
      if (w == "{side}") continue;
      if (!words.count(w)) {
        all = false;
        break;
      }
      ++len;
    }
    if (all && len > best_len) {
      best = a;
      best_len = len;
    }
  }
  return best;
}

}  // namespace tslm
