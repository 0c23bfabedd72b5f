// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cricbench/synth.hpp"
#include "cricbench/train.hpp"

namespace fs = std::filesystem;
using namespace cricbench;

namespace {

// small 720p dataset shared by the training tests (kumar crop needs >= 600x920
// sources); generated once
const VideoManifest& shared_split_manifest() {
  static VideoManifest m = [] {
    SyntheticSpec spec;
    spec.n_classes = 2;
    spec.clips_per_class = 5;
    spec.frames = 8;
    spec.height = 720;
    spec.width = 1280;
    spec.seed = 123;
    fs::path dir = fs::temp_directory_path() / "cricbench_train_test_data";
    fs::remove_all(dir);
    VideoManifest raw = generate_synthetic(spec, dir.string());
    return stratified_split(raw, {0.70, 0.15, 0.15}, 27);
  }();
  return m;
}

ModelSpec tiny_lrcn(int num_classes) {
  ModelSpec s;
  s.arch_id = "lrcn_kumar";
  s.num_classes = num_classes;
  s.hyper["backbone_scale"] = 0.125;
  s.hyper["lstm_hidden"] = 16;
  return s;
}

Tensor random_input(const std::vector<long>& shape, std::uint64_t seed) {
  Tensor t(shape);
  Pcg32 rng(seed);
  for (long i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

}  // namespace

TEST_CASE("initial loss on a 10-class problem is ln(10) +- 0.3") {
  auto model = build_model(tiny_lrcn(10));
  Tensor batch = random_input({4, 25, 3, 64, 64}, 3);
  nn::Ctx ctx;
  ag::Var loss = ag::cross_entropy(model->forward(ag::Var(batch), ctx), {0, 3, 7, 9});
  CHECK(std::abs(loss.value()[0] - std::log(10.0)) < 0.3);
}

TEST_CASE("one AdamW step at lr 1e-4 decreases loss on the same batch") {
  for (const char* arch : {"lrcn_kumar", "cnn_gru_sen"}) {
    CAPTURE(arch);
    ModelSpec s;
    s.arch_id = arch;
    s.num_classes = 4;
    s.hyper["backbone_scale"] = 0.125;
    s.hyper["gru_hidden"] = 16;
    s.hyper["lstm_hidden"] = 16;
    auto model = build_model(s);
    const PipelineSpec& p = builtin_specs().at(required_pipeline(arch));
    Tensor batch = random_input({2, p.seq_len, 3, p.target_h, p.target_w}, 9);
    std::vector<int> labels = {1, 2};
    nn::Ctx ctx{true, nullptr};  // no dropout so the comparison is exact
    AdamW opt(model->params(), 1e-4, 0.0);
    model->params().zero_grad();
    ag::Var loss0 = ag::cross_entropy(model->forward(ag::Var(batch), ctx), labels);
    ag::backward(loss0);
    opt.step();
    ag::NoGrad ng;
    ag::Var loss1 = ag::cross_entropy(model->forward(ag::Var(batch), ctx), labels);
    CHECK(loss1.value()[0] < loss0.value()[0]);
  }
}

TEST_CASE("AdamW: decoupled weight decay shrinks weights with zero gradient") {
  nn::ParamStore store(1);
  nn::Var w = store.param_const("w", {4}, 2.0f);
  AdamW opt(store, 0.1, 0.5);
  store.zero_grad();
  opt.step();  // grad = 0 -> update term 0, weight decay only
  for (long i = 0; i < 4; ++i)
    CHECK(w.value()[i] == doctest::Approx(2.0f - 0.1 * 0.5 * 2.0f).epsilon(1e-6));
}

TEST_CASE("early stopping: val peak at epoch 2 with patience 3 halts by epoch 5") {
  EarlyStopper st{3};
  std::vector<double> val_curve = {0.4, 0.8, 0.7, 0.6, 0.5, 0.9, 0.9};
  long halted_after = -1;
  for (std::size_t i = 0; i < val_curve.size(); ++i) {
    st.observe(static_cast<long>(i + 1), val_curve[i]);
    if (st.should_stop()) {
      halted_after = static_cast<long>(i + 1);
      break;
    }
  }
  CHECK(halted_after == 5);
  CHECK(st.best == 0.8);
  CHECK(st.best_epoch == 2);
}

TEST_CASE("train: run layout, determinism, and checkpoint round trip") {
  const VideoManifest& manifest = shared_split_manifest();
  TrainConfig cfg;
  cfg.model = tiny_lrcn(static_cast<int>(manifest.class_names.size()));
  cfg.pipeline = "kumar";
  cfg.max_epochs = 2;
  cfg.batch_size = 2;
  cfg.learning_rate = 1e-3;
  cfg.early_stop_patience = 5;
  cfg.seed = 5;
  fs::path run1 = fs::temp_directory_path() / "cricbench_run_a";
  fs::path run2 = fs::temp_directory_path() / "cricbench_run_b";
  fs::remove_all(run1);
  fs::remove_all(run2);

  cfg.run_dir = run1.string();
  TrainResult r1 = train(cfg, manifest);
  cfg.run_dir = run2.string();
  TrainResult r2 = train(cfg, manifest);

  // layout
  CHECK(fs::exists(run1 / "config.json"));
  CHECK(fs::exists(run1 / "history.csv"));
  CHECK(fs::exists(run1 / "best.ckpt"));

  // seeded determinism: identical histories
  REQUIRE(r1.history.size() == r2.history.size());
  CHECK(r1.history[0].train_loss == r2.history[0].train_loss);
  CHECK(r1.history.back().val_acc == r2.history.back().val_acc);

  // best_val_accuracy is the max of history
  double max_val = 0;
  for (const auto& e : r1.history) max_val = std::max(max_val, e.val_acc);
  CHECK(r1.best_val_accuracy == max_val);
  CHECK(r1.history.size() <= static_cast<std::size_t>(cfg.max_epochs));

  // checkpoint round trip: evaluate twice, bit-identical reports
  MetricsReport e1 = evaluate(r1.checkpoint_path, manifest, Split::val);
  MetricsReport e2 = evaluate(r1.checkpoint_path, manifest, Split::val);
  CHECK(e1.accuracy == e2.accuracy);
  CHECK(e1.confusion == e2.confusion);
  CHECK(e1.accuracy == r1.history[r1.best_epoch - 1].val_acc);

  // config round trip
  TrainConfig parsed = TrainConfig::from_json(cfg.to_json());
  CHECK(parsed.model == cfg.model);
  CHECK(parsed.learning_rate == cfg.learning_rate);
  CHECK(parsed.seed == cfg.seed);

  fs::remove_all(run1);
  fs::remove_all(run2);
}

TEST_CASE("train: error contracts") {
  const VideoManifest& manifest = shared_split_manifest();
  TrainConfig cfg;
  cfg.model = tiny_lrcn(2);
  cfg.pipeline = "bhat";  // mismatched with lrcn_kumar
  cfg.run_dir = (fs::temp_directory_path() / "cricbench_run_err").string();
  CHECK_THROWS_AS(train(cfg, manifest), SpecError);

  cfg.pipeline = "kumar";
  VideoManifest empty = manifest;
  for (auto& e : empty.entries) e.split = Split::test;
  CHECK_THROWS_AS(train(cfg, empty), EmptySplitError);

  TrainConfig bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(train(bad, manifest), ConfigError);
  bad = cfg;
  bad.learning_rate = 0;
  CHECK_THROWS_AS(train(bad, manifest), ConfigError);

  CHECK_THROWS_AS(evaluate((fs::temp_directory_path() / "missing.ckpt").string(), manifest,
                           Split::val),
                  IoError);
}

TEST_CASE("evaluate: constant predictor accuracy equals class share") {
  // a freshly built model with zeroed head outputs identical logits for every
  // input -> argmax is class 0 everywhere
  const VideoManifest& manifest = shared_split_manifest();
  auto model = build_model(tiny_lrcn(static_cast<int>(manifest.class_names.size())));
  for (auto& [name, v] : model->params().params())
    if (name.rfind("head.", 0) == 0)
      for (long i = 0; i < v.value().numel(); ++i) v.value()[i] = 0.0f;
  fs::path p = fs::temp_directory_path() / "cricbench_const.ckpt";
  model->save_checkpoint(p.string());
  MetricsReport r = evaluate(p.string(), manifest, Split::train);
  // 2 balanced classes -> predicting only class 0 scores 1/2
  CHECK(r.accuracy == doctest::Approx(0.5).epsilon(1e-12));
  long col0 = 0, elsewhere = 0;
  for (std::size_t t = 0; t < r.confusion.size(); ++t)
    for (std::size_t pcol = 0; pcol < r.confusion.size(); ++pcol)
      (pcol == 0 ? col0 : elsewhere) += r.confusion[t][pcol];
  CHECK(elsewhere == 0);
  CHECK(col0 == r.n_samples);
  fs::remove(p);
}
