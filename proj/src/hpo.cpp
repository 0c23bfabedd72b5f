// SPDX-License-Identifier: Apache-2.0
#include "cricbench/hpo.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "cricbench/errors.hpp"

using nlohmann::json;

namespace cricbench {

// ---- distributions ---------------------------------------------------------

Distribution Distribution::log_uniform(double lo, double hi) {
  return {Kind::log_uniform, lo, hi, {}};
}
Distribution Distribution::uniform(double lo, double hi) { return {Kind::uniform, lo, hi, {}}; }
Distribution Distribution::categorical(std::vector<double> values) {
  return {Kind::categorical, 0, 0, std::move(values)};
}
Distribution Distribution::int_range(long lo, long hi) {
  return {Kind::int_range, static_cast<double>(lo), static_cast<double>(hi), {}};
}

void Distribution::validate(const std::string& name) const {
  switch (kind) {
    case Kind::log_uniform:
      if (lo <= 0) throw ConfigError("log_uniform bounds must be positive: " + name);
      [[fallthrough]];
    case Kind::uniform:
      if (!(lo < hi)) throw ConfigError("distribution requires lo < hi: " + name);
      break;
    case Kind::int_range:
      if (!(lo < hi)) throw ConfigError("int_range requires lo < hi: " + name);
      break;
    case Kind::categorical:
      if (values.empty()) throw ConfigError("categorical must be non-empty: " + name);
      break;
  }
}

double Distribution::draw(Pcg32& rng) const {
  switch (kind) {
    case Kind::log_uniform:
      return std::exp(rng.uniform(std::log(lo), std::log(hi)));
    case Kind::uniform:
      return rng.uniform(lo, hi);
    case Kind::categorical:
      return values[rng.bounded(static_cast<std::uint32_t>(values.size()))];
    case Kind::int_range: {
      auto span = static_cast<std::uint32_t>(static_cast<long>(hi) - static_cast<long>(lo) + 1);
      return lo + static_cast<double>(rng.bounded(span));
    }
  }
  throw ConfigError("unreachable distribution kind");
}

void SearchSpace::validate() const {
  if (params.empty()) throw ConfigError("search space is empty");
  for (const auto& [name, d] : params) d.validate(name);
}

SearchSpace default_search_space() {
  SearchSpace s;
  s.params["learning_rate"] = Distribution::log_uniform(1e-5, 1e-2);
  s.params["weight_decay"] = Distribution::log_uniform(1e-6, 1e-2);
  s.params["gru_layers"] = Distribution::categorical({1, 2, 3});
  s.params["gru_hidden"] = Distribution::categorical({128, 256, 512});
  s.params["dropout"] = Distribution::uniform(0.1, 0.5);
  return s;
}

// ---- trials ----------------------------------------------------------------

std::string trial_status_name(TrialStatus s) {
  switch (s) {
    case TrialStatus::complete: return "complete";
    case TrialStatus::pruned: return "pruned";
    case TrialStatus::failed: return "failed";
  }
  throw ConfigError("unreachable trial status");
}

TrialStatus trial_status_from_name(const std::string& s) {
  if (s == "complete") return TrialStatus::complete;
  if (s == "pruned") return TrialStatus::pruned;
  if (s == "failed") return TrialStatus::failed;
  throw ConfigError("unknown trial status: " + s);
}

std::string Trial::to_json() const {
  json j = {{"id", id}, {"params", params}, {"status", trial_status_name(status)}};
  if (status == TrialStatus::complete) j["objective"] = objective;
  return j.dump();
}

Trial Trial::from_json(const std::string& text) {
  json j = json::parse(text);
  Trial t;
  t.id = j.at("id").get<long>();
  t.params = j.at("params").get<std::map<std::string, double>>();
  t.status = trial_status_from_name(j.at("status").get<std::string>());
  if (j.contains("objective")) t.objective = j["objective"].get<double>();
  return t;
}

// ---- search ----------------------------------------------------------------

std::map<std::string, double> suggest(const SearchSpace& space,
                                      const std::vector<Trial>& history, std::uint64_t seed) {
  space.validate();
  // random search: the draw depends only on (seed, trial index), so a resumed
  // study continues the exact sequence the uninterrupted study would have run
  Pcg32 rng(mix_seed(seed, 0x6870ull + history.size()));
  std::map<std::string, double> out;
  for (const auto& [name, dist] : space.params) out[name] = dist.draw(rng);
  return out;
}

StudyResult run_study(const SearchSpace& space, long n_trials, const Objective& train_fn,
                      std::uint64_t seed, const std::string& journal_path) {
  if (n_trials < 1) throw ConfigError("n_trials must be >= 1");
  space.validate();

  std::vector<Trial> trials;
  {
    std::ifstream f(journal_path);
    std::string line;
    while (std::getline(f, line))
      if (!line.empty()) trials.push_back(Trial::from_json(line));
  }
  for (std::size_t i = 0; i < trials.size(); ++i)
    if (trials[i].id != static_cast<long>(i))
      throw IoError("journal ids not contiguous: " + journal_path);

  std::ofstream journal(journal_path, std::ios::app);
  if (!journal) throw IoError("cannot write journal: " + journal_path);

  while (static_cast<long>(trials.size()) < n_trials) {
    Trial t;
    t.id = static_cast<long>(trials.size());
    t.params = suggest(space, trials, seed);
    try {
      t.objective = train_fn(t.params);
      t.status = TrialStatus::complete;
    } catch (const std::exception&) {
      t.status = TrialStatus::failed;
    }
    journal << t.to_json() << "\n";
    journal.flush();
    trials.push_back(std::move(t));
  }

  const Trial* best = nullptr;
  for (const Trial& t : trials)
    if (t.status == TrialStatus::complete && (!best || t.objective > best->objective)) best = &t;
  if (!best) throw StudyFailedError("all " + std::to_string(n_trials) + " trials failed");
  return {*best, trials};
}

}  // namespace cricbench
