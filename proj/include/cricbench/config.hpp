// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "cricbench/train.hpp"

namespace cricbench {

// Declarative run configuration: one YAML file covering model, training, and
// hpo settings. Every field can be overridden by a CLI flag; precedence is
// CLI flag > config file > built-in default.
struct RunConfig {
  TrainConfig train;
  std::string run_root = "runs";
  long hpo_trials = 50;
  std::uint64_t hpo_seed = 0;

  // parse + schema-validate; unknown keys are errors naming the key path
  static RunConfig load_yaml(const std::string& path);
  static RunConfig parse_yaml(const std::string& text, const std::string& origin);
};

}  // namespace cricbench
