// SPDX-License-Identifier: Apache-2.0
#include "cricbench/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <yaml-cpp/yaml.h>

namespace cricbench {

namespace {

void require_keys(const YAML::Node& node, const std::set<std::string>& allowed,
                  const std::string& path, const std::string& origin) {
  if (!node.IsMap())
    throw ConfigError(origin + ": '" + path + "' must be a mapping");
  for (const auto& kv : node) {
    std::string key = kv.first.as<std::string>();
    if (!allowed.count(key))
      throw ConfigError(origin + ": unknown key '" + path + key + "' (line " +
                        std::to_string(kv.first.Mark().line + 1) + ")");
  }
}

template <typename T>
void read_into(const YAML::Node& node, const char* key, T& out, const std::string& path,
               const std::string& origin) {
  if (!node[key]) return;
  try {
    out = node[key].as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(origin + ": bad value for '" + path + key + "' (line " +
                      std::to_string(node[key].Mark().line + 1) + ")");
  }
}

}  // namespace

RunConfig RunConfig::parse_yaml(const std::string& text, const std::string& origin) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  RunConfig cfg;
  if (root.IsNull()) return cfg;
  require_keys(root, {"seed", "run_root", "device", "model", "train", "hpo"}, "", origin);

  read_into(root, "seed", cfg.train.seed, "", origin);
  read_into(root, "run_root", cfg.run_root, "", origin);
  read_into(root, "device", cfg.train.device, "", origin);

  if (root["model"]) {
    const YAML::Node& m = root["model"];
    require_keys(m, {"arch_id", "num_classes", "hyper"}, "model.", origin);
    read_into(m, "arch_id", cfg.train.model.arch_id, "model.", origin);
    read_into(m, "num_classes", cfg.train.model.num_classes, "model.", origin);
    if (m["hyper"]) {
      if (!m["hyper"].IsMap())
        throw ConfigError(origin + ": 'model.hyper' must be a mapping");
      for (const auto& kv : m["hyper"]) {
        try {
          cfg.train.model.hyper[kv.first.as<std::string>()] = kv.second.as<double>();
        } catch (const YAML::Exception&) {
          throw ConfigError(origin + ": bad numeric value for 'model.hyper." +
                            kv.first.as<std::string>() + "'");
        }
      }
    }
    if (!cfg.train.model.arch_id.empty())
      cfg.train.pipeline = required_pipeline(cfg.train.model.arch_id);
  }

  if (root["train"]) {
    const YAML::Node& t = root["train"];
    require_keys(t,
                 {"max_epochs", "batch_size", "learning_rate", "weight_decay",
                  "early_stop_patience", "stop_at_train_acc"},
                 "train.", origin);
    read_into(t, "max_epochs", cfg.train.max_epochs, "train.", origin);
    read_into(t, "batch_size", cfg.train.batch_size, "train.", origin);
    read_into(t, "learning_rate", cfg.train.learning_rate, "train.", origin);
    read_into(t, "weight_decay", cfg.train.weight_decay, "train.", origin);
    read_into(t, "early_stop_patience", cfg.train.early_stop_patience, "train.", origin);
    if (t["stop_at_train_acc"]) {
      double v = 0;
      read_into(t, "stop_at_train_acc", v, "train.", origin);
      cfg.train.stop_at_train_acc = v;
    }
  }

  if (root["hpo"]) {
    const YAML::Node& h = root["hpo"];
    require_keys(h, {"n_trials", "seed"}, "hpo.", origin);
    read_into(h, "n_trials", cfg.hpo_trials, "hpo.", origin);
    read_into(h, "seed", cfg.hpo_seed, "hpo.", origin);
  }
  return cfg;
}

RunConfig RunConfig::load_yaml(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_yaml(ss.str(), path);
}

}  // namespace cricbench
