// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "cricbench/errors.hpp"

namespace cricbench {

struct PerClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long support = 0;
};

struct MetricsReport {
  double accuracy = 0.0;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  std::vector<std::vector<long>> confusion;  // rows = true, cols = predicted
  std::vector<PerClassMetrics> per_class;
  long n_samples = 0;
  bool zero_division_hit = false;  // some class had an undefined metric forced to 0

  std::string to_json() const;
  static MetricsReport from_json(const std::string& json_text);
  void save(const std::string& path) const;
  static MetricsReport load(const std::string& path);
};

std::vector<std::vector<long>> confusion_matrix(const std::vector<int>& y_true,
                                                const std::vector<int>& y_pred,
                                                int num_classes);

MetricsReport compute_metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                              int num_classes);

}  // namespace cricbench
