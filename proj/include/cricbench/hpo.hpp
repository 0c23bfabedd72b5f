// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cricbench/rng.hpp"

namespace cricbench {

struct Distribution {
  enum class Kind { log_uniform, uniform, categorical, int_range };
  Kind kind = Kind::uniform;
  double lo = 0, hi = 0;            // continuous bounds / int_range bounds (inclusive)
  std::vector<double> values;       // categorical

  static Distribution log_uniform(double lo, double hi);
  static Distribution uniform(double lo, double hi);
  static Distribution categorical(std::vector<double> values);
  static Distribution int_range(long lo, long hi);
  void validate(const std::string& name) const;
  double draw(Pcg32& rng) const;
};

struct SearchSpace {
  std::map<std::string, Distribution> params;
  void validate() const;
};

// the §III-B4-style space: lr, weight decay, GRU depth/width, dropout
SearchSpace default_search_space();

enum class TrialStatus { complete, pruned, failed };
std::string trial_status_name(TrialStatus s);
TrialStatus trial_status_from_name(const std::string& s);

struct Trial {
  long id = 0;
  std::map<std::string, double> params;
  double objective = 0;  // valid only when status == complete
  TrialStatus status = TrialStatus::complete;

  std::string to_json() const;
  static Trial from_json(const std::string& text);
};

// Random-search baseline: each parameter drawn from its distribution with a
// stream determined by (seed, number of prior trials).
std::map<std::string, double> suggest(const SearchSpace& space, const std::vector<Trial>& history,
                                      std::uint64_t seed);

struct StudyResult {
  Trial best;
  std::vector<Trial> trials;
};

using Objective = std::function<double(const std::map<std::string, double>&)>;

// Runs (or resumes) a study journaled at journal_path (JSON lines, one Trial
// per line, appended after every completion).
StudyResult run_study(const SearchSpace& space, long n_trials, const Objective& train_fn,
                      std::uint64_t seed, const std::string& journal_path);

}  // namespace cricbench
