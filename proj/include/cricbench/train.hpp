// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cricbench/manifest.hpp"
#include "cricbench/metrics.hpp"
#include "cricbench/model_zoo.hpp"
#include "cricbench/pipeline.hpp"

namespace cricbench {

struct TrainConfig {
  ModelSpec model;
  std::string pipeline;  // must equal required_pipeline(model.arch_id)
  long max_epochs = 30;
  long batch_size = 4;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  long early_stop_patience = 5;
  std::uint64_t seed = 0;
  std::string device = "cpu";
  std::string run_dir;
  // stop as soon as a full epoch's running train accuracy reaches this value
  std::optional<double> stop_at_train_acc;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

struct EpochStats {
  long epoch = 0;  // 1-based
  double train_loss = 0, train_acc = 0, val_loss = 0, val_acc = 0;
};

struct TrainResult {
  double best_val_accuracy = 0;
  long best_epoch = 0;  // 1-based
  std::vector<EpochStats> history;
  std::string checkpoint_path;       // best validation accuracy (best.ckpt)
  std::string last_checkpoint_path;  // final weights (last.ckpt)
  double wall_time = 0;              // seconds
};

// Adam with decoupled weight decay over a ParamStore; frozen parameters are
// never touched.
class AdamW {
 public:
  AdamW(nn::ParamStore& store, double lr, double weight_decay, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8);
  void step();
  double lr;
  double weight_decay;

 private:
  nn::ParamStore& store_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;  // aligned with store_.params()
};

// Decides when training halts: stop after `patience` consecutive epochs
// without a strict improvement in validation accuracy.
struct EarlyStopper {
  long patience;
  double best = -1.0;
  long best_epoch = 0;
  long since_best = 0;
  // feed one epoch's val accuracy (1-based epoch); returns true if this is a
  // new best
  bool observe(long epoch, double val_acc) {
    if (val_acc > best) {
      best = val_acc;
      best_epoch = epoch;
      since_best = 0;
      return true;
    }
    ++since_best;
    return false;
  }
  bool should_stop() const { return since_best >= patience; }
};

// Decoded clips cached per path; preprocessed sequences cached when the
// pipeline is deterministic and the tensor is small enough to keep.
class ClipCache {
 public:
  const RawClip& raw(const std::string& path);
  // train-time sequence: random-sampling pipelines re-draw per epoch
  Tensor train_sequence(const ManifestEntry& e, const PipelineSpec& spec, std::uint64_t seed,
                        long epoch);
  // eval-time sequence: fixed draw independent of the training seed
  Tensor eval_sequence(const ManifestEntry& e, const PipelineSpec& spec);

 private:
  Tensor preprocess_clip(const ManifestEntry& e, const PipelineSpec& spec, Pcg32* rng);
  Tensor cached_deterministic(const ManifestEntry& e, const PipelineSpec& spec);
  std::map<std::string, RawClip> raw_;
  std::map<std::string, Tensor> seq_;
};

TrainResult train(const TrainConfig& config, const VideoManifest& manifest);
MetricsReport evaluate(const std::string& checkpoint_path, const VideoManifest& manifest,
                       Split split);
// evaluate with an already-loaded model (shared cache across splits)
MetricsReport evaluate_model(Model& model, const VideoManifest& manifest, Split split,
                             ClipCache& cache);

}  // namespace cricbench
