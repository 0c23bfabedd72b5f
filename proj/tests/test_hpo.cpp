// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cricbench/errors.hpp"
#include "cricbench/hpo.hpp"

namespace fs = std::filesystem;
using namespace cricbench;

namespace {

fs::path tmp_journal(const std::string& name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove(p);
  return p;
}

}  // namespace

TEST_CASE("suggest: bounds respected over 1000 draws") {
  SearchSpace space = default_search_space();
  std::vector<Trial> history;
  for (int i = 0; i < 1000; ++i) {
    auto params = suggest(space, history, 42);
    CHECK(params.at("learning_rate") >= 1e-5);
    CHECK(params.at("learning_rate") <= 1e-2);
    CHECK(params.at("weight_decay") >= 1e-6);
    CHECK(params.at("weight_decay") <= 1e-2);
    double layers = params.at("gru_layers");
    CHECK((layers == 1 || layers == 2 || layers == 3));
    double hidden = params.at("gru_hidden");
    CHECK((hidden == 128 || hidden == 256 || hidden == 512));
    CHECK(params.at("dropout") >= 0.1);
    CHECK(params.at("dropout") <= 0.5);
    Trial t;
    t.id = i;
    t.params = params;
    history.push_back(t);
  }
}

TEST_CASE("suggest: deterministic given (history, seed)") {
  SearchSpace space = default_search_space();
  CHECK(suggest(space, {}, 7) == suggest(space, {}, 7));
  CHECK(suggest(space, {}, 7) != suggest(space, {}, 8));
}

TEST_CASE("distributions: int_range and validation") {
  Pcg32 rng(1);
  Distribution d = Distribution::int_range(2, 5);
  for (int i = 0; i < 200; ++i) {
    double v = d.draw(rng);
    CHECK(v >= 2);
    CHECK(v <= 5);
    CHECK(v == std::floor(v));
  }
  CHECK_THROWS_AS(Distribution::uniform(2, 1).validate("x"), ConfigError);
  CHECK_THROWS_AS(Distribution::log_uniform(0, 1).validate("x"), ConfigError);
  CHECK_THROWS_AS(Distribution::categorical({}).validate("x"), ConfigError);
}

TEST_CASE("run_study: toy quadratic recovers lr 0.003 +- 0.002 in 50 trials") {
  fs::path journal = tmp_journal("cricbench_hpo_toy.jsonl");
  auto objective = [](const std::map<std::string, double>& p) {
    double lr = p.at("learning_rate");
    return 1.0 - (lr - 0.003) * (lr - 0.003);
  };
  StudyResult res = run_study(default_search_space(), 50, objective, 27, journal.string());
  CHECK(res.trials.size() == 50);
  CHECK(std::abs(res.best.params.at("learning_rate") - 0.003) <= 0.002);
  // monotone best over trial index
  double best = -1e9;
  for (const auto& t : res.trials) {
    if (t.status == TrialStatus::complete) best = std::max(best, t.objective);
    CHECK(best >= res.trials.front().objective - 1e-12);
  }
  CHECK(res.best.objective == best);
  fs::remove(journal);
}

TEST_CASE("run_study: n_trials=1 best is that trial") {
  fs::path journal = tmp_journal("cricbench_hpo_one.jsonl");
  StudyResult res = run_study(
      default_search_space(), 1, [](const std::map<std::string, double>&) { return 0.5; }, 3,
      journal.string());
  CHECK(res.trials.size() == 1);
  CHECK(res.best.id == 0);
  CHECK(res.best.objective == 0.5);
  fs::remove(journal);
}

TEST_CASE("run_study: resume reproduces the uninterrupted study exactly") {
  auto objective = [](const std::map<std::string, double>& p) {
    return p.at("dropout");  // deterministic in the params
  };
  fs::path full = tmp_journal("cricbench_hpo_full.jsonl");
  StudyResult want = run_study(default_search_space(), 30, objective, 9, full.string());

  // simulate a kill after 12 completed trials: keep the journal prefix
  fs::path part = tmp_journal("cricbench_hpo_part.jsonl");
  {
    std::ifstream in(full);
    std::ofstream out(part);
    std::string line;
    for (int i = 0; i < 12 && std::getline(in, line); ++i) out << line << "\n";
  }
  StudyResult got = run_study(default_search_space(), 30, objective, 9, part.string());
  REQUIRE(got.trials.size() == 30);
  for (std::size_t i = 0; i < 30; ++i) {
    CHECK(got.trials[i].id == static_cast<long>(i));
    CHECK(got.trials[i].params == want.trials[i].params);
    CHECK(got.trials[i].objective == want.trials[i].objective);
  }
  CHECK(got.best.id == want.best.id);
  fs::remove(full);
  fs::remove(part);
}

TEST_CASE("run_study: all trials failing raises StudyFailedError") {
  fs::path journal = tmp_journal("cricbench_hpo_fail.jsonl");
  auto objective = [](const std::map<std::string, double>&) -> double {
    throw std::runtime_error("boom");
  };
  CHECK_THROWS_AS(run_study(default_search_space(), 3, objective, 1, journal.string()),
                  StudyFailedError);
  // journal still records the failures
  std::ifstream f(journal);
  std::string line;
  int lines = 0;
  while (std::getline(f, line))
    if (!line.empty()) {
      CHECK(Trial::from_json(line).status == TrialStatus::failed);
      ++lines;
    }
  CHECK(lines == 3);
  fs::remove(journal);
}

TEST_CASE("run_study: partial failures are tolerated") {
  fs::path journal = tmp_journal("cricbench_hpo_partial.jsonl");
  int calls = 0;
  auto objective = [&](const std::map<std::string, double>& p) -> double {
    if (++calls % 2 == 0) throw std::runtime_error("flaky");
    return p.at("dropout");
  };
  StudyResult res = run_study(default_search_space(), 6, objective, 2, journal.string());
  CHECK(res.trials.size() == 6);
  long complete = 0, failed = 0;
  for (const auto& t : res.trials)
    (t.status == TrialStatus::complete ? complete : failed)++;
  CHECK(complete == 3);
  CHECK(failed == 3);
  CHECK(res.best.status == TrialStatus::complete);
  fs::remove(journal);
}

TEST_CASE("trial JSON round trip") {
  Trial t;
  t.id = 17;
  t.params = {{"learning_rate", 0.0042}, {"gru_layers", 2}};
  t.objective = 0.875;
  t.status = TrialStatus::complete;
  Trial r = Trial::from_json(t.to_json());
  CHECK(r.id == t.id);
  CHECK(r.params == t.params);
  CHECK(r.objective == t.objective);
  CHECK(r.status == t.status);
}
