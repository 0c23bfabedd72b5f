// SPDX-License-Identifier: Apache-2.0
#include "cricbench/train.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace cricbench {

// ---- config ----------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (learning_rate <= 0) throw ConfigError("learning_rate must be > 0");
  if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (builtin_specs().find(pipeline) == builtin_specs().end())
    throw ConfigError("unknown pipeline: " + pipeline);
  if (required_pipeline(model.arch_id) != pipeline)
    throw SpecError("model " + model.arch_id + " requires pipeline '" +
                    required_pipeline(model.arch_id) + "', config says '" + pipeline + "'");
}

std::string TrainConfig::to_json() const {
  json j = {{"model", json::parse(model.to_json())},
            {"pipeline", pipeline},
            {"max_epochs", max_epochs},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"weight_decay", weight_decay},
            {"early_stop_patience", early_stop_patience},
            {"seed", seed},
            {"device", device},
            {"run_dir", run_dir}};
  if (stop_at_train_acc) j["stop_at_train_acc"] = *stop_at_train_acc;
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  TrainConfig c;
  c.model = ModelSpec::from_json(j.at("model").dump());
  c.pipeline = j.at("pipeline").get<std::string>();
  if (j.contains("max_epochs")) c.max_epochs = j["max_epochs"].get<long>();
  if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<long>();
  if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
  if (j.contains("weight_decay")) c.weight_decay = j["weight_decay"].get<double>();
  if (j.contains("early_stop_patience"))
    c.early_stop_patience = j["early_stop_patience"].get<long>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("device")) c.device = j["device"].get<std::string>();
  if (j.contains("run_dir")) c.run_dir = j["run_dir"].get<std::string>();
  if (j.contains("stop_at_train_acc")) c.stop_at_train_acc = j["stop_at_train_acc"].get<double>();
  return c;
}

// ---- optimizer -------------------------------------------------------------

AdamW::AdamW(nn::ParamStore& store, double lr_, double weight_decay_, double beta1,
             double beta2, double eps)
    : lr(lr_), weight_decay(weight_decay_), store_(store), beta1_(beta1), beta2_(beta2),
      eps_(eps) {
  for (auto& [name, v] : store_.params()) {
    m_.push_back(Tensor::zeros(v.value().shape()));
    v_.push_back(Tensor::zeros(v.value().shape()));
  }
}

void AdamW::step() {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, t_);
  double bc2 = 1.0 - std::pow(beta2_, t_);
  std::size_t i = 0;
  for (auto& [name, var] : store_.params()) {
    if (var.requires_grad()) {
      Tensor& p = var.value();
      const Tensor& g = var.grad();
      Tensor& m = m_[i];
      Tensor& v = v_[i];
      for (long k = 0; k < p.numel(); ++k) {
        double gk = g[k];
        double mk = beta1_ * m[k] + (1.0 - beta1_) * gk;
        double vk = beta2_ * v[k] + (1.0 - beta2_) * gk * gk;
        m[k] = static_cast<float>(mk);
        v[k] = static_cast<float>(vk);
        double update = (mk / bc1) / (std::sqrt(vk / bc2) + eps_);
        // decoupled weight decay: shrink the weight directly, not the gradient
        p[k] = static_cast<float>(p[k] - lr * update - lr * weight_decay * p[k]);
      }
    }
    ++i;
  }
}

// ---- clip cache ------------------------------------------------------------

namespace {
// keep deterministic preprocessed sequences up to this size in memory
constexpr long kSeqCacheBytes = 24L << 20;
// retain decoded clips only up to this size; larger ones are re-decoded on
// demand so the cache stays bounded on high-resolution sources
constexpr std::size_t kRawCacheBytes = 32u << 20;
}  // namespace

const RawClip& ClipCache::raw(const std::string& path) {
  auto it = raw_.find(path);
  if (it == raw_.end()) it = raw_.emplace(path, decode_video(path)).first;
  return it->second;
}

Tensor ClipCache::preprocess_clip(const ManifestEntry& e, const PipelineSpec& spec,
                                  Pcg32* rng) {
  auto it = raw_.find(e.path);
  if (it != raw_.end()) return preprocess(it->second, spec, rng).data;
  RawClip clip = decode_video(e.path);
  if (clip.frames.size() <= kRawCacheBytes)
    return preprocess(raw_.emplace(e.path, std::move(clip)).first->second, spec, rng).data;
  return preprocess(clip, spec, rng).data;
}

Tensor ClipCache::cached_deterministic(const ManifestEntry& e, const PipelineSpec& spec) {
  std::string key = spec.name + "|" + e.path;
  auto it = seq_.find(key);
  if (it != seq_.end()) return it->second;
  Tensor t = preprocess_clip(e, spec, nullptr);
  if (t.numel() * static_cast<long>(sizeof(float)) <= kSeqCacheBytes) seq_.emplace(key, t);
  return t;
}

Tensor ClipCache::train_sequence(const ManifestEntry& e, const PipelineSpec& spec,
                                 std::uint64_t seed, long epoch) {
  if (spec.sampling != Sampling::random_draw) return cached_deterministic(e, spec);
  // random sampling is an augmentation: re-draw each epoch
  Pcg32 rng(mix_seed(mix_seed(seed, hash_string(e.path)), static_cast<std::uint64_t>(epoch)));
  return preprocess_clip(e, spec, &rng);
}

Tensor ClipCache::eval_sequence(const ManifestEntry& e, const PipelineSpec& spec) {
  if (spec.sampling != Sampling::random_draw) return cached_deterministic(e, spec);
  // fixed draw, independent of any training seed, so evaluate() is deterministic
  Pcg32 rng(mix_seed(hash_string("eval-draw"), hash_string(e.path)));
  return preprocess_clip(e, spec, &rng);
}

// ---- batching --------------------------------------------------------------

namespace {

Tensor stack_sequences(const std::vector<Tensor>& seqs) {
  const auto& s0 = seqs.front().shape();  // [T,3,H,W]
  std::vector<long> shape = {static_cast<long>(seqs.size()), s0[0], s0[1], s0[2], s0[3]};
  Tensor out(shape);
  long per = seqs.front().numel();
  for (std::size_t i = 0; i < seqs.size(); ++i)
    std::copy_n(seqs[i].data(), per, out.data() + static_cast<long>(i) * per);
  return out;
}

struct EvalPass {
  double loss = 0;
  std::vector<int> y_true, y_pred;
  double accuracy() const {
    long ok = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) ok += y_true[i] == y_pred[i];
    return y_true.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(y_true.size());
  }
};

std::vector<int> argmax_rows(const Tensor& logits) {
  long N = logits.dim(0), C = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(N));
  for (long n = 0; n < N; ++n) {
    const float* row = logits.data() + n * C;
    out[static_cast<std::size_t>(n)] =
        static_cast<int>(std::max_element(row, row + C) - row);
  }
  return out;
}

EvalPass eval_split(Model& model, const VideoManifest& manifest,
                    const std::vector<const ManifestEntry*>& entries, const PipelineSpec& spec,
                    ClipCache& cache, long batch_size) {
  EvalPass pass;
  double loss_sum = 0;
  ag::NoGrad ng;
  nn::Ctx ctx;  // eval mode
  for (std::size_t off = 0; off < entries.size(); off += static_cast<std::size_t>(batch_size)) {
    std::size_t end = std::min(entries.size(), off + static_cast<std::size_t>(batch_size));
    std::vector<Tensor> seqs;
    std::vector<int> labels;
    for (std::size_t i = off; i < end; ++i) {
      seqs.push_back(cache.eval_sequence(*entries[i], spec));
      labels.push_back(manifest.label_index(entries[i]->label));
    }
    ag::Var logits = model.forward(ag::Var(stack_sequences(seqs)), ctx);
    loss_sum += ag::cross_entropy(logits, labels).value()[0] * static_cast<double>(labels.size());
    auto preds = argmax_rows(logits.value());
    pass.y_true.insert(pass.y_true.end(), labels.begin(), labels.end());
    pass.y_pred.insert(pass.y_pred.end(), preds.begin(), preds.end());
  }
  pass.loss = pass.y_true.empty() ? 0.0 : loss_sum / static_cast<double>(pass.y_true.size());
  return pass;
}

}  // namespace

// ---- train -----------------------------------------------------------------

TrainResult train(const TrainConfig& config, const VideoManifest& manifest) {
  auto t0 = std::chrono::steady_clock::now();
  config.validate();
  manifest.validate();
  const PipelineSpec& spec = builtin_specs().at(config.pipeline);

  auto train_entries = manifest.split_entries(Split::train);
  auto val_entries = manifest.split_entries(Split::val);
  if (train_entries.empty()) throw EmptySplitError("train split is empty");
  if (val_entries.empty()) throw EmptySplitError("val split is empty");

  fs::create_directories(config.run_dir);
  {
    std::ofstream f(fs::path(config.run_dir) / "config.json");
    if (!f) throw IoError("cannot write run dir: " + config.run_dir);
    f << config.to_json() << "\n";
  }

  auto model = build_model(config.model);
  AdamW opt(model->params(), config.learning_rate, config.weight_decay);
  ClipCache cache;
  Pcg32 dropout_rng(mix_seed(config.seed, hash_string("dropout")));
  std::string ckpt = (fs::path(config.run_dir) / "best.ckpt").string();

  std::ofstream hist(fs::path(config.run_dir) / "history.csv");
  hist << "epoch,train_loss,train_acc,val_loss,val_acc\n";

  TrainResult result;
  EarlyStopper stopper{config.early_stop_patience};

  for (long epoch = 1; epoch <= config.max_epochs; ++epoch) {
    // deterministic per-epoch shuffle of the train order
    std::vector<const ManifestEntry*> order = train_entries;
    Pcg32 shuffle_rng(mix_seed(config.seed, 0x9d2c5681u + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0;
    long seen = 0, correct = 0;
    nn::Ctx train_ctx{true, &dropout_rng};
    for (std::size_t off = 0; off < order.size();
         off += static_cast<std::size_t>(config.batch_size)) {
      std::size_t end =
          std::min(order.size(), off + static_cast<std::size_t>(config.batch_size));
      std::vector<Tensor> seqs;
      std::vector<int> labels;
      for (std::size_t i = off; i < end; ++i) {
        seqs.push_back(cache.train_sequence(*order[i], spec, config.seed, epoch));
        labels.push_back(manifest.label_index(order[i]->label));
      }
      model->params().zero_grad();
      ag::Var logits = model->forward(ag::Var(stack_sequences(seqs)), train_ctx);
      ag::Var loss = ag::cross_entropy(logits, labels);
      ag::backward(loss);
      opt.step();

      long n = static_cast<long>(labels.size());
      loss_sum += loss.value()[0] * static_cast<double>(n);
      auto preds = argmax_rows(logits.value());
      for (std::size_t i = 0; i < labels.size(); ++i) correct += preds[i] == labels[i];
      seen += n;
    }

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_sum / static_cast<double>(seen);
    st.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
    EvalPass val = eval_split(*model, manifest, val_entries, spec, cache, config.batch_size);
    st.val_loss = val.loss;
    st.val_acc = val.accuracy();
    result.history.push_back(st);
    hist << st.epoch << "," << st.train_loss << "," << st.train_acc << "," << st.val_loss << ","
         << st.val_acc << "\n";
    hist.flush();

    if (stopper.observe(epoch, st.val_acc)) model->save_checkpoint(ckpt);
    if (stopper.should_stop()) break;
    if (config.stop_at_train_acc && st.train_acc >= *config.stop_at_train_acc) {
      // the running accuracy is measured on a moving model (and with dropout
      // active), so confirm with a settled eval-mode pass before stopping
      EvalPass settled =
          eval_split(*model, manifest, train_entries, spec, cache, config.batch_size);
      if (settled.accuracy() >= *config.stop_at_train_acc) break;
    }
  }

  result.best_val_accuracy = stopper.best;
  result.best_epoch = stopper.best_epoch;
  result.checkpoint_path = ckpt;
  result.last_checkpoint_path = (fs::path(config.run_dir) / "last.ckpt").string();
  model->save_checkpoint(result.last_checkpoint_path);
  result.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// ---- evaluate --------------------------------------------------------------

MetricsReport evaluate_model(Model& model, const VideoManifest& manifest, Split split,
                             ClipCache& cache) {
  manifest.validate();
  auto entries = manifest.split_entries(split);
  if (entries.empty()) throw EmptySplitError("split '" + split_name(split) + "' is empty");
  const PipelineSpec& spec = builtin_specs().at(required_pipeline(model.spec().arch_id));
  EvalPass pass = eval_split(model, manifest, entries, spec, cache, 4);
  return compute_metrics(pass.y_true, pass.y_pred,
                         static_cast<int>(manifest.class_names.size()));
}

MetricsReport evaluate(const std::string& checkpoint_path, const VideoManifest& manifest,
                       Split split) {
  auto model = Model::load_checkpoint(checkpoint_path);
  ClipCache cache;
  return evaluate_model(*model, manifest, split, cache);
}

}  // namespace cricbench
