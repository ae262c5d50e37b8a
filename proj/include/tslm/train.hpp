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
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tslm/eval.hpp"
#include "tslm/model.hpp"
#include "tslm/optim.hpp"

namespace tslm {

struct TrainConfig {
  ModelConfig model;
  std::array<double, 4> lambda = {5.0, 1.0, 1.0, 1.0};
  double lr = 2e-3;
  double lr_decay = 0.1;
  std::size_t decay_epoch = 21;  // first epoch trained at lr * lr_decay
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double weight_decay = 0.01;
  double alpha_max = 0.8;
  double warmup_fraction = 0.1;
  double beta_flip = 0.1;
  std::uint64_t seed = 1;
  std::size_t val_every = 5;

  /// Small profile used by default and by every test.
  static TrainConfig desk();
  /// Published hyperparameters: d=256, S=256, 4 SGPA blocks, 7 GCN layers.
  static TrainConfig paper_scale();
};

std::string train_config_json(const TrainConfig& cfg);
/// Overrides fields of `base` with the keys present in `text`.
TrainConfig train_config_from_json(const std::string& text, TrainConfig base);

/// Learning rate used throughout 1-based `epoch`.
double learning_rate(const TrainConfig& cfg, std::size_t epoch);

struct LossComponents {
  double seq = 0, span_s = 0, span_e = 0, rec_s = 0, rec_e = 0, align_s = 0, align_e = 0;
};

/// l1 L_Seq + l2 (Ls + Le)/2 + l3 (rec_s + rec_e)/2 + l4 (align_s + align_e)/2.
/// Throws NumericalError naming the first non-finite component.
double total_loss(const LossComponents& c, const std::array<double, 4>& lambda);
ad::Var total_loss(const SampleLosses& l, const std::array<double, 4>& lambda);

struct MetricsRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double L_Seq = 0, L_Span = 0, L_rec = 0, L_Align = 0, total = 0, lr = 0;
  std::optional<double> val_miou;
  bool operator==(const MetricsRecord&) const = default;
};

std::string metrics_json(const MetricsRecord& r);

/// Recall@1 localisation of dataset samples, one spatial pass per motion.
std::vector<Localization> localize_samples(const Model& model, const Dataset& ds,
                                           const std::vector<std::size_t>& samples);
/// Seconds of a predicted span for a motion of duration D and T snippets.
Span prediction_seconds(const SpanPrediction& p, double duration, std::size_t T);

struct TrainOptions {
  /// When set, metrics.ndjson, last.ckpt and best.ckpt are written here.
  std::optional<std::filesystem::path> out_dir;
  /// Stop once this many epochs are complete (resumable later).
  std::optional<std::size_t> stop_after_epoch;
  std::function<void(const MetricsRecord&)> on_epoch;
};

class Trainer {
 public:
  Trainer(const Dataset& ds, const TrainConfig& cfg);

  /// Runs epochs until cfg.epochs (or opts.stop_after_epoch) are complete.
  void train(const TrainOptions& opts = {});
  /// One optimisation step on the given training samples; returns the mean
  /// loss components of the batch before the update.
  LossComponents train_step(const std::vector<std::size_t>& batch, double lr, double alpha);

  void save_checkpoint(const std::filesystem::path& path) const;
  void load_checkpoint(const std::filesystem::path& path);

  Model& model() { return *model_; }
  const Model& model() const { return *model_; }
  const TrainConfig& config() const { return cfg_; }
  const std::vector<MetricsRecord>& log() const { return log_; }
  std::size_t epochs_done() const { return epoch_; }
  std::size_t steps_done() const { return step_; }
  std::size_t steps_per_epoch() const;
  std::optional<double> best_val_miou() const { return best_; }
  const std::vector<std::size_t>& train_samples() const { return train_; }

 private:
  const Tensor& grid(std::size_t motion);

  const Dataset& ds_;
  TrainConfig cfg_;
  std::unique_ptr<Model> model_;
  std::unique_ptr<ad::AdamW> opt_;
  std::vector<std::size_t> train_, val_;
  std::vector<std::optional<Tensor>> grids_;
  std::vector<MetricsRecord> log_;
  std::size_t epoch_ = 0;
  std::size_t step_ = 0;
  std::optional<double> best_;
};

/// Writes a model-only checkpoint readable by load_model.
void save_model(const Model& model, const std::vector<std::string>& vocab,
                const std::filesystem::path& path);
/// Loads the parameters and model configuration of any training checkpoint.
std::unique_ptr<Model> load_model(const std::filesystem::path& path,
                                  std::vector<std::string>* vocab = nullptr);

/// Mean highlight score over foreground and background timesteps.
struct HighlightStats {
  double foreground = 0.0;
  double background = 0.0;
};
HighlightStats highlight_stats(const Model& model, const Dataset& ds,
                               const std::vector<std::size_t>& samples,
                               const std::vector<Localization>& locs);

}  // namespace tslm
