// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cricbench/metrics.hpp"

namespace cricbench {

struct ReportRow {
  std::string model;     // display name
  std::string run_name;  // tie-break key (run directory basename)
  bool failed = false;
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;  // fractions
};

// Reads one row per run dir: config.json for the model name and the first of
// metrics_test.json / metrics_val.json / metrics_train.json for the numbers.
// A FAILED marker file makes a failed row; a missing metrics file is a
// ReportError naming the run.
std::vector<ReportRow> collect_report_rows(const std::vector<std::string>& run_dirs);

// accuracy descending, ties broken by run name ascending
void sort_report_rows(std::vector<ReportRow>& rows);

// markdown table; percentages to 2 decimals
std::string render_markdown(const std::vector<ReportRow>& rows);
// CSV with columns Model,Accuracy,Precision,Recall,F1 at full precision
std::string emit_csv(const std::vector<ReportRow>& rows);
std::vector<ReportRow> parse_csv(const std::string& text);

// Writes <out_base>.md and <out_base>.csv plus, per run dir that has them,
// confusion_<run>.png and curves_<run>.png next to the report.
std::vector<ReportRow> write_report(const std::vector<std::string>& run_dirs,
                                    const std::string& out_base);

// plotting helpers (OpenCV-rendered PNGs)
void save_confusion_heatmap(const MetricsReport& report, const std::string& png_path);
void save_training_curves(const std::string& history_csv, const std::string& png_path);

}  // namespace cricbench
