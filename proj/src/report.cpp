// SPDX-License-Identifier: Apache-2.0
#include "cricbench/report.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <sstream>

#include "cricbench/model_zoo.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cricbench {

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string pct(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", fraction * 100.0);
  return buf;
}

std::string full(double fraction) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", fraction);
  return buf;
}

}  // namespace

std::vector<ReportRow> collect_report_rows(const std::vector<std::string>& run_dirs) {
  std::vector<ReportRow> rows;
  for (const auto& dir : run_dirs) {
    ReportRow row;
    row.run_name = fs::path(dir).filename().string();
    if (row.run_name.empty()) row.run_name = fs::path(dir).parent_path().filename().string();

    row.model = row.run_name;
    if (fs::exists(fs::path(dir) / "config.json")) {
      try {
        json cfg = json::parse(read_file(fs::path(dir) / "config.json"));
        row.model = arch_display_name(cfg.at("model").at("arch_id").get<std::string>());
      } catch (const std::exception&) {
        // keep the directory name when the config is unreadable
      }
    }

    if (fs::exists(fs::path(dir) / "FAILED")) {
      row.failed = true;
      rows.push_back(std::move(row));
      continue;
    }

    const char* candidates[] = {"metrics_test.json", "metrics_val.json", "metrics_train.json"};
    const char* found = nullptr;
    for (const char* c : candidates)
      if (fs::exists(fs::path(dir) / c)) {
        found = c;
        break;
      }
    if (!found) throw ReportError("no metrics file in run: " + dir);
    MetricsReport m = MetricsReport::load((fs::path(dir) / found).string());
    row.accuracy = m.accuracy;
    row.precision = m.weighted_precision;
    row.recall = m.weighted_recall;
    row.f1 = m.weighted_f1;
    rows.push_back(std::move(row));
  }
  return rows;
}

void sort_report_rows(std::vector<ReportRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
    if (a.failed != b.failed) return !a.failed;  // failures last
    if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
    return a.run_name < b.run_name;
  });
}

std::string render_markdown(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "| Model | Accuracy | Precision | Recall | F1 |\n";
  out << "|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    if (r.failed) {
      out << "| " << r.model << " | FAILED | - | - | - |\n";
    } else {
      out << "| " << r.model << " | " << pct(r.accuracy) << "% | " << pct(r.precision)
          << "% | " << pct(r.recall) << "% | " << pct(r.f1) << "% |\n";
    }
  }
  return out.str();
}

std::string emit_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "Model,Accuracy,Precision,Recall,F1\n";
  for (const auto& r : rows) {
    std::string model = r.model;
    if (model.find(',') != std::string::npos || model.find('"') != std::string::npos) {
      std::string quoted = "\"";
      for (char c : model) {
        if (c == '"') quoted += '"';
        quoted += c;
      }
      model = quoted + "\"";
    }
    if (r.failed)
      out << model << ",FAILED,,,\n";
    else
      out << model << "," << full(r.accuracy) << "," << full(r.precision) << ","
          << full(r.recall) << "," << full(r.f1) << "\n";
  }
  return out.str();
}

std::vector<ReportRow> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "Model,Accuracy,Precision,Recall,F1")
    throw ReportError("bad report CSV header");
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    // split respecting a quoted first field
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      char c = line[i];
      if (quoted) {
        if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else if (c == '"') {
          quoted = false;
        } else {
          cur += c;
        }
      } else if (c == '"' && cur.empty()) {
        quoted = true;
      } else if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    fields.push_back(cur);
    if (fields.size() != 5) throw ReportError("bad report CSV row: " + line);
    ReportRow r;
    r.model = fields[0];
    r.run_name = fields[0];
    if (fields[1] == "FAILED") {
      r.failed = true;
    } else {
      r.accuracy = std::stod(fields[1]);
      r.precision = std::stod(fields[2]);
      r.recall = std::stod(fields[3]);
      r.f1 = std::stod(fields[4]);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---- plots -----------------------------------------------------------------

void save_confusion_heatmap(const MetricsReport& report, const std::string& png_path) {
  long n = static_cast<long>(report.confusion.size());
  if (n == 0) throw ReportError("empty confusion matrix");
  long max_v = 1;
  for (const auto& row : report.confusion)
    for (long v : row) max_v = std::max(max_v, v);
  const int cell = 32;
  cv::Mat img(static_cast<int>(n) * cell, static_cast<int>(n) * cell, CV_8UC1);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j) {
      auto shade = static_cast<std::uint8_t>(
          255.0 * static_cast<double>(report.confusion[i][j]) / static_cast<double>(max_v));
      cv::rectangle(img,
                    cv::Rect(static_cast<int>(j) * cell, static_cast<int>(i) * cell, cell, cell),
                    cv::Scalar(shade), cv::FILLED);
    }
  cv::Mat color;
  cv::applyColorMap(img, color, cv::COLORMAP_VIRIDIS);
  if (!cv::imwrite(png_path, color)) throw ReportError("cannot write: " + png_path);
}

void save_training_curves(const std::string& history_csv, const std::string& png_path) {
  std::ifstream f(history_csv);
  if (!f) throw ReportError("cannot read history: " + history_csv);
  std::string line;
  std::getline(f, line);  // header
  std::vector<std::array<double, 4>> rows;  // train_loss, train_acc, val_loss, val_acc
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::array<double, 4> r{};
    long epoch;
    if (std::sscanf(line.c_str(), "%ld,%lf,%lf,%lf,%lf", &epoch, &r[0], &r[1], &r[2], &r[3]) !=
        5)
      throw ReportError("bad history row in " + history_csv + ": " + line);
    rows.push_back(r);
  }
  if (rows.empty()) throw ReportError("empty history: " + history_csv);

  const int W = 640, H = 480, margin = 40;
  cv::Mat img(H, W, CV_8UC3, cv::Scalar(255, 255, 255));
  cv::rectangle(img, cv::Rect(margin, margin, W - 2 * margin, H - 2 * margin),
                cv::Scalar(0, 0, 0));
  double max_loss = 1e-9;
  for (const auto& r : rows) max_loss = std::max({max_loss, r[0], r[2]});
  auto x_of = [&](std::size_t i) {
    double t = rows.size() == 1
                   ? 0.0
                   : static_cast<double>(i) / static_cast<double>(rows.size() - 1);
    return static_cast<int>(margin + t * (W - 2 * margin));
  };
  auto y_of = [&](double v, double vmax) {
    return static_cast<int>(H - margin - (v / vmax) * (H - 2 * margin));
  };
  auto draw = [&](int col, double vmax, cv::Scalar color) {
    for (std::size_t i = 1; i < rows.size(); ++i)
      cv::line(img, {x_of(i - 1), y_of(rows[i - 1][static_cast<std::size_t>(col)], vmax)},
               {x_of(i), y_of(rows[i][static_cast<std::size_t>(col)], vmax)}, color, 2);
  };
  draw(0, max_loss, {180, 119, 31});   // train loss
  draw(2, max_loss, {14, 127, 255});   // val loss
  draw(1, 1.0, {44, 160, 44});         // train acc
  draw(3, 1.0, {40, 39, 214});         // val acc
  cv::putText(img, "loss (blue/orange), accuracy (green/red)", {margin, margin - 10},
              cv::FONT_HERSHEY_SIMPLEX, 0.5, {0, 0, 0});
  if (!cv::imwrite(png_path, img)) throw ReportError("cannot write: " + png_path);
}

std::vector<ReportRow> write_report(const std::vector<std::string>& run_dirs,
                                    const std::string& out_base) {
  auto rows = collect_report_rows(run_dirs);
  sort_report_rows(rows);
  fs::path base(out_base);
  if (base.has_parent_path()) fs::create_directories(base.parent_path());
  {
    std::ofstream f(out_base + ".md");
    if (!f) throw ReportError("cannot write: " + out_base + ".md");
    f << render_markdown(rows);
  }
  {
    std::ofstream f(out_base + ".csv");
    if (!f) throw ReportError("cannot write: " + out_base + ".csv");
    f << emit_csv(rows);
  }
  fs::path plot_dir = base.has_parent_path() ? base.parent_path() : fs::path(".");
  for (const auto& dir : run_dirs) {
    std::string run = fs::path(dir).filename().string();
    const char* candidates[] = {"metrics_test.json", "metrics_val.json", "metrics_train.json"};
    for (const char* c : candidates)
      if (fs::exists(fs::path(dir) / c)) {
        MetricsReport m = MetricsReport::load((fs::path(dir) / c).string());
        if (!m.confusion.empty())
          save_confusion_heatmap(m, (plot_dir / ("confusion_" + run + ".png")).string());
        break;
      }
    if (fs::exists(fs::path(dir) / "history.csv"))
      save_training_curves((fs::path(dir) / "history.csv").string(),
                           (plot_dir / ("curves_" + run + ".png")).string());
  }
  return rows;
}

}  // namespace cricbench
