// SPDX-License-Identifier: Apache-2.0
#include "cricbench/metrics.hpp"

#include <fstream>
#include <json.hpp>

namespace cricbench {

using nlohmann::json;

std::vector<std::vector<long>> confusion_matrix(const std::vector<int>& y_true,
                                                const std::vector<int>& y_pred,
                                                int num_classes) {
  if (y_true.size() != y_pred.size())
    throw InputError("confusion_matrix: y_true and y_pred differ in length");
  if (y_true.empty()) throw InputError("confusion_matrix: empty input");
  std::vector<std::vector<long>> m(static_cast<std::size_t>(num_classes),
                                   std::vector<long>(static_cast<std::size_t>(num_classes), 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    int t = y_true[i], p = y_pred[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes)
      throw InputError("confusion_matrix: class index out of range");
    m[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)]++;
  }
  return m;
}

MetricsReport compute_metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                              int num_classes) {
  MetricsReport r;
  r.confusion = confusion_matrix(y_true, y_pred, num_classes);
  r.n_samples = static_cast<long>(y_true.size());

  long correct = 0;
  for (int c = 0; c < num_classes; ++c) correct += r.confusion[c][c];
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n_samples);

  r.per_class.resize(static_cast<std::size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    long tp = r.confusion[c][c], fp = 0, fn = 0;
    for (int k = 0; k < num_classes; ++k) {
      if (k != c) {
        fp += r.confusion[k][c];
        fn += r.confusion[c][k];
      }
    }
    auto& pc = r.per_class[static_cast<std::size_t>(c)];
    pc.support = tp + fn;
    if (tp + fp > 0) {
      pc.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    } else if (pc.support > 0) {
      r.zero_division_hit = true;  // class present but never predicted
    }
    if (tp + fn > 0) pc.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (pc.precision + pc.recall > 0.0)
      pc.f1 = 2.0 * pc.precision * pc.recall / (pc.precision + pc.recall);
    else if (pc.support > 0)
      r.zero_division_hit = true;

    r.weighted_precision += pc.support * pc.precision;
    r.weighted_recall += pc.support * pc.recall;
    r.weighted_f1 += pc.support * pc.f1;
  }
  r.weighted_precision /= r.n_samples;
  r.weighted_recall /= r.n_samples;
  r.weighted_f1 /= r.n_samples;
  return r;
}

std::string MetricsReport::to_json() const {
  json j;
  j["accuracy"] = accuracy;
  j["weighted_precision"] = weighted_precision;
  j["weighted_recall"] = weighted_recall;
  j["weighted_f1"] = weighted_f1;
  j["confusion"] = confusion;
  j["n_samples"] = n_samples;
  j["zero_division_hit"] = zero_division_hit;
  json pcs = json::array();
  for (const auto& pc : per_class)
    pcs.push_back({{"precision", pc.precision},
                   {"recall", pc.recall},
                   {"f1", pc.f1},
                   {"support", pc.support}});
  j["per_class"] = pcs;
  return j.dump(2);
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  json j = json::parse(text);
  MetricsReport r;
  r.accuracy = j.at("accuracy").get<double>();
  r.weighted_precision = j.at("weighted_precision").get<double>();
  r.weighted_recall = j.at("weighted_recall").get<double>();
  r.weighted_f1 = j.at("weighted_f1").get<double>();
  if (j.contains("confusion")) r.confusion = j["confusion"].get<std::vector<std::vector<long>>>();
  if (j.contains("n_samples")) r.n_samples = j["n_samples"].get<long>();
  if (j.contains("zero_division_hit")) r.zero_division_hit = j["zero_division_hit"].get<bool>();
  if (j.contains("per_class"))
    for (const auto& e : j["per_class"]) {
      PerClassMetrics pc;
      pc.precision = e.at("precision").get<double>();
      pc.recall = e.at("recall").get<double>();
      pc.f1 = e.at("f1").get<double>();
      pc.support = e.at("support").get<long>();
      r.per_class.push_back(pc);
    }
  return r;
}

void MetricsReport::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write metrics file: " + path);
  f << to_json() << "\n";
}

MetricsReport MetricsReport::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read metrics file: " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return from_json(text);
}

}  // namespace cricbench
