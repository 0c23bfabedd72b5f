// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <map>

#include "cricbench/metrics.hpp"
#include "cricbench/rng.hpp"

using namespace cricbench;

namespace {

// definition-level brute-force oracle: no confusion matrix, just raw counting
// over the label lists
struct OracleResult {
  double accuracy = 0, wp = 0, wr = 0, wf1 = 0;
};

OracleResult metrics_oracle(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                            int num_classes) {
  OracleResult r;
  double n = static_cast<double>(y_true.size());
  for (std::size_t i = 0; i < y_true.size(); ++i) r.accuracy += y_true[i] == y_pred[i];
  r.accuracy /= n;
  for (int c = 0; c < num_classes; ++c) {
    double tp = 0, pred_c = 0, true_c = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      if (y_true[i] == c && y_pred[i] == c) tp += 1;
      if (y_pred[i] == c) pred_c += 1;
      if (y_true[i] == c) true_c += 1;
    }
    double p = pred_c > 0 ? tp / pred_c : 0.0;
    double rec = true_c > 0 ? tp / true_c : 0.0;
    double f1 = (p + rec) > 0 ? 2 * p * rec / (p + rec) : 0.0;
    r.wp += true_c * p;
    r.wr += true_c * rec;
    r.wf1 += true_c * f1;
  }
  r.wp /= n;
  r.wr /= n;
  r.wf1 /= n;
  return r;
}

}  // namespace

TEST_CASE("metrics: perfect predictions") {
  std::vector<int> y = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  MetricsReport r = compute_metrics(y, y, 10);
  CHECK(r.accuracy == 1.0);
  CHECK(r.weighted_f1 == 1.0);
  CHECK(r.weighted_precision == 1.0);
  CHECK(r.n_samples == 10);
  for (int c = 0; c < 10; ++c) CHECK(r.confusion[c][c] == 1);
}

TEST_CASE("metrics: worked 4-sample example") {
  // hand computation: accuracy 3/4; precision_0=1, recall_0=1/2, f1_0=2/3;
  // precision_1=2/3, recall_1=1, f1_1=4/5
  MetricsReport r = compute_metrics({0, 0, 1, 1}, {0, 1, 1, 1}, 2);
  CHECK(r.accuracy == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(r.weighted_precision == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(r.weighted_recall == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(r.weighted_f1 == doctest::Approx(11.0 / 15.0).epsilon(1e-12));
}

TEST_CASE("metrics: brute-force oracle agreement on 200 random instances") {
  Pcg32 rng(991);
  for (int trial = 0; trial < 200; ++trial) {
    int num_classes = 2 + static_cast<int>(rng.bounded(9));  // up to 10
    long n = 1 + static_cast<long>(rng.bounded(50));
    std::vector<int> y_true, y_pred;
    for (long i = 0; i < n; ++i) {
      y_true.push_back(static_cast<int>(rng.bounded(static_cast<std::uint32_t>(num_classes))));
      y_pred.push_back(static_cast<int>(rng.bounded(static_cast<std::uint32_t>(num_classes))));
    }
    MetricsReport got = compute_metrics(y_true, y_pred, num_classes);
    OracleResult want = metrics_oracle(y_true, y_pred, num_classes);
    CHECK(std::abs(got.accuracy - want.accuracy) < 1e-9);
    CHECK(std::abs(got.weighted_precision - want.wp) < 1e-9);
    CHECK(std::abs(got.weighted_recall - want.wr) < 1e-9);
    CHECK(std::abs(got.weighted_f1 - want.wf1) < 1e-9);
    // weighted recall is identically accuracy for single-label problems
    CHECK(got.weighted_recall == got.accuracy);
    // all metrics in [0, 1]
    for (double v : {got.accuracy, got.weighted_precision, got.weighted_recall, got.weighted_f1}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("metrics: permutation invariance") {
  Pcg32 rng(5);
  std::vector<int> y_true, y_pred;
  for (int i = 0; i < 40; ++i) {
    y_true.push_back(static_cast<int>(rng.bounded(4)));
    y_pred.push_back(static_cast<int>(rng.bounded(4)));
  }
  MetricsReport a = compute_metrics(y_true, y_pred, 4);
  std::vector<std::size_t> perm(y_true.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm);
  std::vector<int> t2, p2;
  for (std::size_t i : perm) {
    t2.push_back(y_true[i]);
    p2.push_back(y_pred[i]);
  }
  MetricsReport b = compute_metrics(t2, p2, 4);
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.weighted_precision == b.weighted_precision);
  CHECK(a.weighted_f1 == b.weighted_f1);
}

TEST_CASE("confusion matrix: counting oracle on 1000 random pairs") {
  Pcg32 rng(77);
  std::vector<int> y_true, y_pred;
  std::map<std::pair<int, int>, long> counts;
  for (int i = 0; i < 1000; ++i) {
    int t = static_cast<int>(rng.bounded(10)), p = static_cast<int>(rng.bounded(10));
    y_true.push_back(t);
    y_pred.push_back(p);
    counts[{t, p}]++;
  }
  auto m = confusion_matrix(y_true, y_pred, 10);
  long total = 0;
  for (int t = 0; t < 10; ++t)
    for (int p = 0; p < 10; ++p) {
      total += m[t][p];
      CHECK(m[t][p] == counts[{t, p}]);
    }
  CHECK(total == 1000);
}

TEST_CASE("confusion matrix: constant predictor has a single nonzero column") {
  std::vector<int> y_true = {0, 1, 2, 3, 4}, y_pred(5, 3);
  auto m = confusion_matrix(y_true, y_pred, 5);
  for (int t = 0; t < 5; ++t)
    for (int p = 0; p < 5; ++p) CHECK(m[t][p] == ((p == 3) ? 1 : 0));
}

TEST_CASE("metrics: error contracts and zero-division flag") {
  CHECK_THROWS_AS(compute_metrics({0, 1}, {0}, 2), InputError);
  CHECK_THROWS_AS(compute_metrics({}, {}, 2), InputError);
  CHECK_THROWS_AS(compute_metrics({0, 5}, {0, 1}, 2), InputError);
  // class 1 present but never predicted -> precision undefined -> 0 + flag
  MetricsReport r = compute_metrics({0, 1}, {0, 0}, 2);
  CHECK(r.zero_division_hit);
  CHECK(r.per_class[1].precision == 0.0);
}

TEST_CASE("metrics: JSON round trip preserves full precision") {
  Pcg32 rng(13);
  std::vector<int> y_true, y_pred;
  for (int i = 0; i < 30; ++i) {
    y_true.push_back(static_cast<int>(rng.bounded(3)));
    y_pred.push_back(static_cast<int>(rng.bounded(3)));
  }
  MetricsReport a = compute_metrics(y_true, y_pred, 3);
  MetricsReport b = MetricsReport::from_json(a.to_json());
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.weighted_precision == b.weighted_precision);
  CHECK(a.weighted_recall == b.weighted_recall);
  CHECK(a.weighted_f1 == b.weighted_f1);
  CHECK(a.confusion == b.confusion);
  CHECK(a.n_samples == b.n_samples);
  REQUIRE(a.per_class.size() == b.per_class.size());
  for (std::size_t c = 0; c < a.per_class.size(); ++c) {
    CHECK(a.per_class[c].precision == b.per_class[c].precision);
    CHECK(a.per_class[c].f1 == b.per_class[c].f1);
  }
}
