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

#include "tslm/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tslm/checkpoint.hpp"
#include "tslm/errors.hpp"

namespace tslm {

using namespace ad;
using nlohmann::json;

namespace {

constexpr double kMinInputStd = 0.1;

void put_model_config(CheckpointData& data, const ModelConfig& m) {
  data.meta["model.d"] = std::to_string(m.d);
  data.meta["model.d_w"] = std::to_string(m.d_w);
  data.meta["model.heads"] = std::to_string(m.heads);
  data.meta["model.n_sgpa"] = std::to_string(m.n_sgpa);
  data.meta["model.gcn_layers"] = std::to_string(m.gcn_layers);
  data.meta["model.snippets"] = std::to_string(m.snippets);
  data.meta["model.vocab_size"] = std::to_string(m.vocab_size);
}

ModelConfig get_model_config(const CheckpointData& data) {
  auto get = [&](const std::string& k) -> std::size_t {
    auto it = data.meta.find("model." + k);
    if (it == data.meta.end()) throw ParseError("checkpoint lacks model." + k);
    return std::stoul(it->second);
  };
  ModelConfig m;
  m.d = get("d");
  m.d_w = get("d_w");
  m.heads = get("heads");
  m.n_sgpa = get("n_sgpa");
  m.gcn_layers = get("gcn_layers");
  m.snippets = get("snippets");
  m.vocab_size = get("vocab_size");
  return m;
}

std::string join_vocab(const std::vector<std::string>& vocab) {
  std::string out;
  for (std::size_t i = 0; i < vocab.size(); ++i) out += (i ? " " : "") + vocab[i];
  return out;
}

std::vector<std::string> split_vocab(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

std::string hex_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

json metrics_to_json(const MetricsRecord& r) {
  json j{{"epoch", r.epoch}, {"step", r.step},     {"L_Seq", r.L_Seq},
         {"L_Span", r.L_Span}, {"L_rec", r.L_rec}, {"L_Align", r.L_Align},
         {"total", r.total},   {"lr", r.lr}};
  if (r.val_miou) j["val_mIoU"] = *r.val_miou;
  return j;
}

MetricsRecord metrics_from_json(const json& j) {
  MetricsRecord r;
  r.epoch = j.at("epoch").get<std::size_t>();
  r.step = j.at("step").get<std::size_t>();
  r.L_Seq = j.at("L_Seq").get<double>();
  r.L_Span = j.at("L_Span").get<double>();
  r.L_rec = j.at("L_rec").get<double>();
  r.L_Align = j.at("L_Align").get<double>();
  r.total = j.at("total").get<double>();
  r.lr = j.at("lr").get<double>();
  if (j.contains("val_mIoU")) r.val_miou = j["val_mIoU"].get<double>();
  return r;
}

void check_finite(double v, const char* name) {
  if (!std::isfinite(v)) throw NumericalError(std::string("non-finite loss component ") + name);
}

}  // namespace

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::paper_scale() {
  TrainConfig c;
  c.model.d = 256;
  c.model.d_w = 768;
  c.model.heads = 4;
  c.model.n_sgpa = 4;
  c.model.gcn_layers = 7;
  c.model.snippets = 256;
  c.lr = 2e-4;
  c.decay_epoch = 51;
  c.epochs = 100;
  c.batch_size = 64;
  c.weight_decay = 0.01;
  c.alpha_max = 0.8;
  c.beta_flip = 0.1;
  return c;
}

std::string train_config_json(const TrainConfig& c) {
  json j{{"d", c.model.d},
         {"d_w", c.model.d_w},
         {"heads", c.model.heads},
         {"n_sgpa", c.model.n_sgpa},
         {"gcn_layers", c.model.gcn_layers},
         {"snippets", c.model.snippets},
         {"lambda", c.lambda},
         {"lr", c.lr},
         {"lr_decay", c.lr_decay},
         {"decay_epoch", c.decay_epoch},
         {"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"weight_decay", c.weight_decay},
         {"alpha_max", c.alpha_max},
         {"warmup_fraction", c.warmup_fraction},
         {"beta_flip", c.beta_flip},
         {"seed", c.seed},
         {"val_every", c.val_every}};
  return j.dump();
}

TrainConfig train_config_from_json(const std::string& text, TrainConfig c) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("train config: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("train config must be a JSON object");
  static const std::set<std::string> known = {
      "d",           "d_w",          "heads",        "n_sgpa",    "gcn_layers",
      "snippets",    "lambda",       "lr",           "lr_decay",  "decay_epoch",
      "epochs",      "batch_size",   "weight_decay", "alpha_max", "warmup_fraction",
      "beta_flip",   "seed",         "val_every"};
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ValidationError("train config: unknown key '" + k + "'");
  }
  try {
    c.model.d = j.value("d", c.model.d);
    c.model.d_w = j.value("d_w", c.model.d_w);
    c.model.heads = j.value("heads", c.model.heads);
    c.model.n_sgpa = j.value("n_sgpa", c.model.n_sgpa);
    c.model.gcn_layers = j.value("gcn_layers", c.model.gcn_layers);
    c.model.snippets = j.value("snippets", c.model.snippets);
    c.lambda = j.value("lambda", c.lambda);
    c.lr = j.value("lr", c.lr);
    c.lr_decay = j.value("lr_decay", c.lr_decay);
    c.decay_epoch = j.value("decay_epoch", c.decay_epoch);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.alpha_max = j.value("alpha_max", c.alpha_max);
    c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
    c.beta_flip = j.value("beta_flip", c.beta_flip);
    c.seed = j.value("seed", c.seed);
    c.val_every = j.value("val_every", c.val_every);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
  for (double l : c.lambda) {
    if (!(l > 0)) throw ValidationError("train config: lambda weights must be positive");
  }
  if (c.batch_size == 0 || c.epochs == 0 || !(c.lr > 0)) {
    throw ValidationError("train config: epochs, batch_size and lr must be positive");
  }
  if (!(c.alpha_max >= 0 && c.alpha_max <= 1) || !(c.beta_flip >= 0 && c.beta_flip <= 1)) {
    throw ValidationError("train config: alpha_max and beta_flip must lie in [0, 1]");
  }
  return c;
}

double learning_rate(const TrainConfig& cfg, std::size_t epoch) {
  return epoch >= cfg.decay_epoch ? cfg.lr * cfg.lr_decay : cfg.lr;
}

double total_loss(const LossComponents& c, const std::array<double, 4>& l) {
  check_finite(c.seq, "L_Seq");
  check_finite(c.span_s, "L_Span_s");
  check_finite(c.span_e, "L_Span_e");
  check_finite(c.rec_s, "L_rec_s");
  check_finite(c.rec_e, "L_rec_e");
  check_finite(c.align_s, "L_Align_s");
  check_finite(c.align_e, "L_Align_e");
  return l[0] * c.seq + l[1] * 0.5 * (c.span_s + c.span_e) + l[2] * 0.5 * (c.rec_s + c.rec_e) +
         l[3] * 0.5 * (c.align_s + c.align_e);
}

Var total_loss(const SampleLosses& s, const std::array<double, 4>& l) {
  Var out = scale(s.seq, l[0]);
  out = add(out, scale(add(s.span_s, s.span_e), 0.5 * l[1]));
  out = add(out, scale(add(s.rec_s, s.rec_e), 0.5 * l[2]));
  return add(out, scale(add(s.align_s, s.align_e), 0.5 * l[3]));
}

std::string metrics_json(const MetricsRecord& r) { return metrics_to_json(r).dump(); }

Span prediction_seconds(const SpanPrediction& p, double duration, std::size_t T) {
  return {index_to_time(p.i_s, duration, T), index_to_time(p.i_e, duration, T)};
}

std::vector<Localization> localize_samples(const Model& model, const Dataset& ds,
                                           const std::vector<std::size_t>& samples) {
  std::vector<Localization> out(samples.size());
  std::map<std::size_t, std::vector<std::size_t>> by_motion;
  std::vector<std::size_t> order;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const std::size_t m = ds.motion_index(ds.samples.at(samples[k]).motion_id);
    if (!by_motion.count(m)) order.push_back(m);
    by_motion[m].push_back(k);
  }
  for (std::size_t m : order) {
    const Tensor grid = model.prepare_motion(ds.motions[m]);
    Tape tape;
    Var M = spatial_encode(tape, {&grid}, model.encoder.gcn, false).front();
    for (std::size_t k : by_motion[m]) {
      out[k] = model.locate(tape, M, ds.samples[samples[k]].tokens);
    }
  }
  return out;
}

HighlightStats highlight_stats(const Model& model, const Dataset& ds,
                               const std::vector<std::size_t>& samples,
                               const std::vector<Localization>& locs) {
  double fg = 0, bg = 0;
  std::size_t nf = 0, nb = 0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto& s = ds.samples[samples[k]];
    const double D = ds.motion(s.motion_id).duration;
    const std::size_t T = locs[k].highlight.size();
    (void)model;
    const std::size_t i_s = time_to_index(s.t_s, D, T), i_e = time_to_index(s.t_e, D, T);
    for (std::size_t t = 0; t < T; ++t) {
      if (t >= i_s && t <= i_e) {
        fg += locs[k].highlight[t];
        ++nf;
      } else {
        bg += locs[k].highlight[t];
        ++nb;
      }
    }
  }
  return {nf ? fg / static_cast<double>(nf) : 0.0, nb ? bg / static_cast<double>(nb) : 0.0};
}

Trainer::Trainer(const Dataset& ds, const TrainConfig& cfg) : ds_(ds), cfg_(cfg) {
  cfg_.model.vocab_size = ds.vocab.size();
  train_ = ds.split_indices(Split::kTrain);
  val_ = ds.split_indices(Split::kVal);
  if (train_.empty()) throw ValidationError("training split is empty");
  if (cfg_.batch_size == 0) throw ValidationError("batch_size must be positive");
  model_ = std::make_unique<Model>(cfg_.model, Rng::mix(cfg_.seed));

  // Per-channel statistics over every frame of the training motions.
  const std::size_t cells = kJoints * kJointFeatures;
  std::vector<char> used(ds.motions.size(), 0);
  for (auto i : train_) used[ds.motion_index(ds.samples[i].motion_id)] = 1;
  std::vector<double> sum(cells, 0.0), sq(cells, 0.0);
  double n = 0;
  for (std::size_t m = 0; m < ds.motions.size(); ++m) {
    if (!used[m]) continue;
    const auto& f = ds.motions[m].features;
    for (std::size_t r = 0; r < ds.motions[m].frames(); ++r) {
      const double* row = f.data() + r * cells;
      for (std::size_t c = 0; c < cells; ++c) {
        sum[c] += row[c];
        sq[c] += row[c] * row[c];
      }
      n += 1;
    }
  }
  Tensor mean({1, cells}), sd({1, cells});
  for (std::size_t c = 0; c < cells; ++c) {
    mean[c] = sum[c] / n;
    sd[c] = std::max(kMinInputStd, std::sqrt(std::max(0.0, sq[c] / n - mean[c] * mean[c])));
  }
  model_->set_input_normalization(mean, sd);

  AdamWConfig acfg;
  acfg.weight_decay = cfg_.weight_decay;
  opt_ = std::make_unique<AdamW>(model_->store().trainable(), acfg);
  grids_.resize(ds.motions.size());
}

std::size_t Trainer::steps_per_epoch() const {
  return (train_.size() + cfg_.batch_size - 1) / cfg_.batch_size;
}

const Tensor& Trainer::grid(std::size_t motion) {
  if (!grids_[motion]) grids_[motion] = model_->prepare_motion(ds_.motions[motion]);
  return *grids_[motion];
}

LossComponents Trainer::train_step(const std::vector<std::size_t>& batch, double lr,
                                   double alpha) {
  Tape tape;
  std::vector<std::size_t> motions;
  std::map<std::size_t, std::size_t> slot;
  for (auto i : batch) {
    const std::size_t m = ds_.motion_index(ds_.samples[i].motion_id);
    if (slot.emplace(m, motions.size()).second) motions.push_back(m);
  }
  std::vector<const Tensor*> grids;
  for (auto m : motions) grids.push_back(&grid(m));
  const std::vector<Var> encoded = spatial_encode(tape, grids, model_->encoder.gcn, true);

  LossComponents mean;
  Var acc;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& s = ds_.samples[batch[b]];
    const std::size_t m = slot.at(ds_.motion_index(s.motion_id));
    const std::size_t T = grids[m]->shape()[0];
    const double D = ds_.motions[motions[m]].duration;
    SampleTargets y;
    y.i_s = time_to_index(s.t_s, D, T);
    y.i_e = time_to_index(s.t_e, D, T);
    Rng rng = Rng::stream(cfg_.seed, step_ + 1, batch[b]);
    y.perturb = perturbation_mask(T, alpha, rng);
    y.flipped_s = flip_index(y.i_s, T, cfg_.beta_flip, rng);
    y.flipped_e = flip_index(y.i_e, T, cfg_.beta_flip, rng);
    SampleLosses l = model_->losses(tape, encoded[m], s.tokens, y);
    LossComponents c{l.seq.value().item(),   l.span_s.value().item(), l.span_e.value().item(),
                     l.rec_s.value().item(), l.rec_e.value().item(),  l.align_s.value().item(),
                     l.align_e.value().item()};
    total_loss(c, cfg_.lambda);
    mean.seq += inv * c.seq;
    mean.span_s += inv * c.span_s;
    mean.span_e += inv * c.span_e;
    mean.rec_s += inv * c.rec_s;
    mean.rec_e += inv * c.rec_e;
    mean.align_s += inv * c.align_s;
    mean.align_e += inv * c.align_e;
    Var t = total_loss(l, cfg_.lambda);
    acc = acc.valid() ? add(acc, t) : t;
  }
  model_->store().zero_grad();
  tape.backward(scale(acc, inv));
  opt_->step(lr);
  ++step_;
  return mean;
}

void Trainer::train(const TrainOptions& opts) {
  if (opts.out_dir) std::filesystem::create_directories(*opts.out_dir);
  const std::size_t per_epoch = steps_per_epoch();
  const std::size_t total_steps = per_epoch * cfg_.epochs;
  const auto warmup = static_cast<std::size_t>(
      std::floor(cfg_.warmup_fraction * static_cast<double>(total_steps) + 0.5));
  const std::size_t last = std::min(cfg_.epochs, opts.stop_after_epoch.value_or(cfg_.epochs));
  while (epoch_ < last) {
    const std::size_t epoch = epoch_ + 1;
    const double lr = learning_rate(cfg_, epoch);
    std::vector<std::size_t> order = train_;
    Rng shuffle = Rng::stream(cfg_.seed, 0x5eed, epoch);
    shuffle.shuffle(order.begin(), order.end());

    MetricsRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::size_t lo = b * cfg_.batch_size;
      const std::size_t hi = std::min(order.size(), lo + cfg_.batch_size);
      std::vector<std::size_t> batch(order.begin() + lo, order.begin() + hi);
      const double alpha = perturb_rate(cfg_.alpha_max, step_, warmup);
      const LossComponents c = train_step(batch, lr, alpha);
      const double w = static_cast<double>(batch.size()) / static_cast<double>(order.size());
      rec.L_Seq += w * c.seq;
      rec.L_Span += w * 0.5 * (c.span_s + c.span_e);
      rec.L_rec += w * 0.5 * (c.rec_s + c.rec_e);
      rec.L_Align += w * 0.5 * (c.align_s + c.align_e);
      rec.total += w * total_loss(c, cfg_.lambda);
    }
    rec.step = step_;
    epoch_ = epoch;

    bool improved = false;
    if (!val_.empty() && cfg_.val_every > 0 &&
        (epoch % cfg_.val_every == 0 || epoch == cfg_.epochs)) {
      const auto locs = localize_samples(*model_, ds_, val_);
      std::vector<Span> preds;
      for (std::size_t k = 0; k < val_.size(); ++k) {
        const auto& s = ds_.samples[val_[k]];
        preds.push_back(prediction_seconds(locs[k].span, ds_.motion(s.motion_id).duration,
                                           locs[k].highlight.size()));
      }
      const auto report = evaluate_protocol(preds, val_, ds_, EvalConfig{}, TokenJaccard{});
      rec.val_miou = report.miou;
      if (!best_ || report.miou > *best_) {
        best_ = report.miou;
        improved = true;
      }
    }
    log_.push_back(rec);
    if (opts.out_dir) {
      // Rewritten from the in-memory log so resumed runs never duplicate lines.
      std::ofstream metrics(*opts.out_dir / "metrics.ndjson", std::ios::trunc);
      for (const auto& r : log_) metrics << metrics_json(r) << '\n';
      metrics.close();
      save_checkpoint(*opts.out_dir / "last.ckpt");
      if (improved || (val_.empty() && epoch_ == cfg_.epochs)) {
        save_checkpoint(*opts.out_dir / "best.ckpt");
      }
    }
    if (opts.on_epoch) opts.on_epoch(rec);
  }
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  CheckpointData data;
  data.meta["kind"] = "tslm-train";
  put_model_config(data, cfg_.model);
  data.meta["train_config"] = train_config_json(cfg_);
  data.meta["epoch"] = std::to_string(epoch_);
  data.meta["step"] = std::to_string(step_);
  data.meta["adam_t"] = std::to_string(opt_->state().t);
  data.meta["best_val_miou"] = best_ ? hex_double(*best_) : "none";
  data.meta["vocab"] = join_vocab(ds_.vocab);
  json log = json::array();
  for (const auto& r : log_) log.push_back(metrics_to_json(r));
  data.meta["log"] = log.dump();
  append_parameters(data, model_->store());
  const auto& params = opt_->params();
  const auto& st = opt_->state();
  for (std::size_t i = 0; i < st.m.size(); ++i) {
    data.tensors.emplace_back("adam.m." + params[i]->name, st.m[i]);
    data.tensors.emplace_back("adam.v." + params[i]->name, st.v[i]);
  }
  write_checkpoint(path, data);
}

void Trainer::load_checkpoint(const std::filesystem::path& path) {
  CheckpointData data = read_checkpoint(path);
  if (data.meta["kind"] != "tslm-train") throw ParseError(path.string() + " is not a training checkpoint");
  ModelConfig mc = get_model_config(data);
  if (!(mc == cfg_.model)) {
    throw ValidationError("checkpoint model configuration differs from the requested one");
  }
  if (split_vocab(data.meta["vocab"]) != ds_.vocab) {
    throw ValidationError("checkpoint vocabulary differs from the dataset vocabulary");
  }
  restore_parameters(data, model_->store());
  auto& st = opt_->state();
  const auto& params = opt_->params();
  st.t = std::stoull(data.meta.at("adam_t"));
  st.m.clear();
  st.v.clear();
  if (st.t > 0) {
    for (const auto* p : params) {
      const Tensor* m = data.find("adam.m." + p->name);
      const Tensor* v = data.find("adam.v." + p->name);
      if (!m || !v) throw ParseError("checkpoint lacks optimizer state for " + p->name);
      st.m.push_back(*m);
      st.v.push_back(*v);
    }
  }
  epoch_ = std::stoul(data.meta.at("epoch"));
  step_ = std::stoul(data.meta.at("step"));
  const std::string best = data.meta.at("best_val_miou");
  best_.reset();
  if (best != "none") best_ = std::strtod(best.c_str(), nullptr);
  log_.clear();
  for (const auto& r : json::parse(data.meta.at("log"))) log_.push_back(metrics_from_json(r));
}

void save_model(const Model& model, const std::vector<std::string>& vocab,
                const std::filesystem::path& path) {
  CheckpointData data;
  data.meta["kind"] = "tslm-model";
  put_model_config(data, model.config());
  data.meta["vocab"] = join_vocab(vocab);
  append_parameters(data, model.store());
  write_checkpoint(path, data);
}

std::unique_ptr<Model> load_model(const std::filesystem::path& path,
                                  std::vector<std::string>* vocab) {
  CheckpointData data = read_checkpoint(path);
  auto model = std::make_unique<Model>(get_model_config(data), 0);
  restore_parameters(data, model->store());
  if (vocab) *vocab = split_vocab(data.meta["vocab"]);
  return model;
}

}  // namespace tslm
