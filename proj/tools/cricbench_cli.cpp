// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "cricbench/config.hpp"
#include "cricbench/hpo.hpp"
#include "cricbench/report.hpp"
#include "cricbench/synth.hpp"
#include "cricbench/train.hpp"

namespace fs = std::filesystem;
using namespace cricbench;

namespace {

// exit codes: 0 success, 2 config error, 3 data error, 4 run failure
int classify(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const SpecError*>(&e) ||
      dynamic_cast<const UnknownArchError*>(&e))
    return 2;
  if (dynamic_cast<const MissingClassError*>(&e) || dynamic_cast<const EmptyClassError*>(&e) ||
      dynamic_cast<const ClassTooSmallError*>(&e) || dynamic_cast<const DecodeError*>(&e) ||
      dynamic_cast<const EmptyVideoError*>(&e) || dynamic_cast<const EmptySplitError*>(&e) ||
      dynamic_cast<const InputError*>(&e) || dynamic_cast<const IoError*>(&e))
    return 3;
  return 4;
}

struct TrainFlags {
  std::string config_path, manifest_path, run_dir, arch;
  long epochs = -1, batch_size = -1, patience = -1;
  double lr = -1, weight_decay = -1, stop_at_train_acc = -1, seed = -1;
  std::vector<std::string> hyper;  // key=value
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--config", f.config_path, "YAML run config");
  cmd->add_option("--manifest", f.manifest_path, "manifest JSONL (split assigned)")
      ->required();
  cmd->add_option("--run-dir", f.run_dir, "output run directory");
  cmd->add_option("--arch", f.arch, "architecture id");
  cmd->add_option("--epochs", f.epochs, "max epochs");
  cmd->add_option("--batch-size", f.batch_size, "batch size");
  cmd->add_option("--lr", f.lr, "learning rate");
  cmd->add_option("--weight-decay", f.weight_decay, "weight decay");
  cmd->add_option("--patience", f.patience, "early-stop patience");
  cmd->add_option("--seed", f.seed, "training seed");
  cmd->add_option("--stop-at-train-acc", f.stop_at_train_acc,
                  "stop once train accuracy reaches this fraction");
  cmd->add_option("--hyper", f.hyper, "model hyperparameter key=value (repeatable)");
}

// precedence: CLI flag > config file > built-in default; env vars override the
// config-level run root and device tag
RunConfig resolve(const TrainFlags& f) {
  RunConfig cfg;
  if (!f.config_path.empty()) cfg = RunConfig::load_yaml(f.config_path);
  if (const char* v = std::getenv("CRICBENCH_RUN_ROOT")) cfg.run_root = v;
  if (const char* v = std::getenv("CRICBENCH_DEVICE")) cfg.train.device = v;
  if (!f.arch.empty()) cfg.train.model.arch_id = f.arch;
  if (f.epochs >= 0) cfg.train.max_epochs = f.epochs;
  if (f.batch_size >= 0) cfg.train.batch_size = f.batch_size;
  if (f.lr >= 0) cfg.train.learning_rate = f.lr;
  if (f.weight_decay >= 0) cfg.train.weight_decay = f.weight_decay;
  if (f.patience >= 0) cfg.train.early_stop_patience = f.patience;
  if (f.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(f.seed);
  if (f.stop_at_train_acc >= 0) cfg.train.stop_at_train_acc = f.stop_at_train_acc;
  for (const auto& kv : f.hyper) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--hyper expects key=value, got: " + kv);
    cfg.train.model.hyper[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
  }
  if (cfg.train.model.arch_id.empty())
    throw ConfigError("no architecture: pass --arch or set model.arch_id in the config");
  cfg.train.pipeline = required_pipeline(cfg.train.model.arch_id);
  if (cfg.train.run_dir.empty())
    cfg.train.run_dir = f.run_dir.empty()
                            ? (fs::path(cfg.run_root) / cfg.train.model.arch_id).string()
                            : f.run_dir;
  if (!f.run_dir.empty()) cfg.train.run_dir = f.run_dir;
  return cfg;
}

void write_split_metrics(const std::string& ckpt, const VideoManifest& manifest,
                         const std::string& run_dir) {
  auto model = Model::load_checkpoint(ckpt);
  ClipCache cache;
  for (Split s : {Split::val, Split::test}) {
    if (manifest.split_entries(s).empty()) continue;
    MetricsReport m = evaluate_model(*model, manifest, s, cache);
    m.save((fs::path(run_dir) / ("metrics_" + split_name(s) + ".json")).string());
  }
}

int run_train(const TrainFlags& flags) {
  RunConfig cfg = resolve(flags);
  VideoManifest manifest = VideoManifest::load(flags.manifest_path);
  cfg.train.model.num_classes = static_cast<int>(manifest.class_names.size());
  TrainResult r = train(cfg.train, manifest);
  write_split_metrics(r.checkpoint_path, manifest, cfg.train.run_dir);
  std::cout << "best_val_accuracy=" << r.best_val_accuracy << " best_epoch=" << r.best_epoch
            << " epochs_run=" << r.history.size() << " wall_time_s=" << r.wall_time << "\n"
            << "checkpoint=" << r.checkpoint_path << "\n";
  return 0;
}

int run_bench_all(const TrainFlags& flags, const std::string& out_dir) {
  RunConfig base = resolve(flags.arch.empty() ? [&] {
    TrainFlags f = flags;
    f.arch = all_arch_ids().front();  // placeholder; replaced per run below
    return f;
  }() : flags);
  VideoManifest manifest = VideoManifest::load(flags.manifest_path);
  base.train.model.num_classes = static_cast<int>(manifest.class_names.size());

  std::vector<std::string> run_dirs;
  bool any_failed = false;
  for (const std::string& arch : all_arch_ids()) {
    TrainConfig tc = base.train;
    tc.model.arch_id = arch;
    tc.pipeline = required_pipeline(arch);
    tc.run_dir = (fs::path(out_dir) / arch).string();
    run_dirs.push_back(tc.run_dir);
    try {
      TrainResult r = train(tc, manifest);
      write_split_metrics(r.checkpoint_path, manifest, tc.run_dir);
      std::cout << arch << ": best_val_accuracy=" << r.best_val_accuracy << "\n";
    } catch (const std::exception& e) {
      any_failed = true;
      fs::create_directories(tc.run_dir);
      std::ofstream marker(fs::path(tc.run_dir) / "FAILED");
      marker << e.what() << "\n";
      std::cerr << arch << ": FAILED: " << e.what() << "\n";
    }
  }
  auto rows = write_report(run_dirs, (fs::path(out_dir) / "summary").string());
  std::cout << render_markdown(rows);
  return any_failed ? 4 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cricket shot classification benchmark"};
  app.require_subcommand(1);

  // manifest
  auto* cmd_manifest = app.add_subcommand("manifest", "build a manifest from a dataset tree");
  std::string root, out_path;
  cmd_manifest->add_option("--root", root, "dataset root with one dir per class")->required();
  cmd_manifest->add_option("--out", out_path, "output manifest path")->required();

  // split
  auto* cmd_split = app.add_subcommand("split", "assign the stratified 70/15/15 split");
  std::string split_in, split_out;
  long split_seed = 27;
  std::vector<double> ratios = {0.70, 0.15, 0.15};
  cmd_split->add_option("--manifest", split_in, "input manifest")->required();
  cmd_split->add_option("--out", split_out, "output manifest")->required();
  cmd_split->add_option("--seed", split_seed, "split seed");
  cmd_split->add_option("--ratios", ratios, "train val test ratios")->expected(3);

  // synth
  auto* cmd_synth = app.add_subcommand("synth", "generate the synthetic motion dataset");
  SyntheticSpec synth_spec;
  std::string synth_out, synth_manifest;
  cmd_synth->add_option("--out", synth_out, "output directory")->required();
  cmd_synth->add_option("--classes", synth_spec.n_classes, "number of classes");
  cmd_synth->add_option("--clips", synth_spec.clips_per_class, "clips per class");
  cmd_synth->add_option("--frames", synth_spec.frames, "frames per clip");
  cmd_synth->add_option("--height", synth_spec.height, "frame height");
  cmd_synth->add_option("--width", synth_spec.width, "frame width");
  cmd_synth->add_option("--seed", synth_spec.seed, "generator seed");
  cmd_synth->add_option("--manifest-out", synth_manifest, "also write the manifest here");

  // train
  auto* cmd_train = app.add_subcommand("train", "train one model");
  TrainFlags train_flags;
  add_train_flags(cmd_train, train_flags);

  // evaluate
  auto* cmd_eval = app.add_subcommand("evaluate", "evaluate a checkpoint on a split");
  std::string eval_ckpt, eval_manifest, eval_split = "test", eval_out;
  cmd_eval->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  cmd_eval->add_option("--manifest", eval_manifest, "manifest path")->required();
  cmd_eval->add_option("--split", eval_split, "train|val|test");
  cmd_eval->add_option("--out", eval_out, "write metrics JSON here");

  // hpo
  auto* cmd_hpo = app.add_subcommand("hpo", "random hyperparameter search");
  TrainFlags hpo_flags;
  add_train_flags(cmd_hpo, hpo_flags);
  long hpo_trials = -1;
  std::string hpo_journal, hpo_best_out;
  cmd_hpo->add_option("--trials", hpo_trials, "number of trials");
  cmd_hpo->add_option("--journal", hpo_journal, "study journal path (JSONL)");
  cmd_hpo->add_option("--best-out", hpo_best_out, "write best-params YAML config here");

  // bench-all
  auto* cmd_bench = app.add_subcommand("bench-all", "train and report all ten architectures");
  TrainFlags bench_flags;
  add_train_flags(cmd_bench, bench_flags);
  std::string bench_out = "bench";
  cmd_bench->add_option("--out-dir", bench_out, "output directory for runs and summary");

  // report
  auto* cmd_report = app.add_subcommand("report", "emit the comparison table for run dirs");
  std::string report_out;
  std::vector<std::string> report_runs;
  cmd_report->add_option("--out", report_out, "output base path (writes .md and .csv)")
      ->required();
  cmd_report->add_option("runs", report_runs, "run directories")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cmd_manifest) {
      VideoManifest m = build_manifest(root);
      m.save(out_path);
      std::cout << m.entries.size() << " entries -> " << out_path << "\n";
    } else if (*cmd_split) {
      VideoManifest m = VideoManifest::load(split_in);
      VideoManifest s = stratified_split(m, {ratios[0], ratios[1], ratios[2]}, split_seed);
      s.save(split_out);
      std::cout << "split " << s.entries.size() << " entries with seed " << split_seed
                << " -> " << split_out << "\n";
    } else if (*cmd_synth) {
      VideoManifest m = generate_synthetic(synth_spec, synth_out);
      if (!synth_manifest.empty()) m.save(synth_manifest);
      std::cout << m.entries.size() << " clips -> " << synth_out << "\n";
    } else if (*cmd_train) {
      return run_train(train_flags);
    } else if (*cmd_eval) {
      MetricsReport m =
          evaluate(eval_ckpt, VideoManifest::load(eval_manifest), split_from_name(eval_split));
      if (!eval_out.empty()) m.save(eval_out);
      std::cout << m.to_json() << "\n";
    } else if (*cmd_hpo) {
      RunConfig cfg = resolve(hpo_flags);
      VideoManifest manifest = VideoManifest::load(hpo_flags.manifest_path);
      cfg.train.model.num_classes = static_cast<int>(manifest.class_names.size());
      long n = hpo_trials > 0 ? hpo_trials : cfg.hpo_trials;
      std::string journal = hpo_journal.empty()
                                ? (fs::path(cfg.run_root) / "hpo_journal.jsonl").string()
                                : hpo_journal;
      fs::create_directories(fs::path(journal).parent_path().empty()
                                 ? "."
                                 : fs::path(journal).parent_path().string());
      long trial_counter = 0;
      auto objective = [&](const std::map<std::string, double>& params) {
        TrainConfig tc = cfg.train;
        tc.run_dir =
            (fs::path(cfg.run_root) / ("hpo_trial_" + std::to_string(trial_counter++))).string();
        for (const auto& [k, v] : params) {
          if (k == "learning_rate")
            tc.learning_rate = v;
          else if (k == "weight_decay")
            tc.weight_decay = v;
          else
            tc.model.hyper[k] = v;
        }
        return train(tc, manifest).best_val_accuracy;
      };
      StudyResult res = run_study(default_search_space(), n, objective, cfg.hpo_seed, journal);
      std::cout << "best trial " << res.best.id << " objective=" << res.best.objective << "\n";
      if (!hpo_best_out.empty()) {
        std::ofstream f(hpo_best_out);
        f << "model:\n  arch_id: " << cfg.train.model.arch_id << "\n  hyper:\n";
        for (const auto& [k, v] : res.best.params)
          if (k != "learning_rate" && k != "weight_decay") f << "    " << k << ": " << v << "\n";
        f << "train:\n";
        auto it_lr = res.best.params.find("learning_rate");
        if (it_lr != res.best.params.end()) f << "  learning_rate: " << it_lr->second << "\n";
        auto it_wd = res.best.params.find("weight_decay");
        if (it_wd != res.best.params.end()) f << "  weight_decay: " << it_wd->second << "\n";
      }
    } else if (*cmd_bench) {
      return run_bench_all(bench_flags, bench_out);
    } else if (*cmd_report) {
      auto rows = write_report(report_runs, report_out);
      std::cout << render_markdown(rows);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return classify(e);
  }
  return 0;
}
