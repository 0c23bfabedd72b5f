// SPDX-License-Identifier: Apache-2.0
#include "cricbench/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <unordered_map>

#include "cricbench/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cricbench {

const std::vector<std::string>& default_class_names() {
  static const std::vector<std::string> names = {
      "Cover",  "Defense",    "Flick",    "Hook",  "Late Cut",
      "Lofted", "Pull",       "Square Cut", "Straight", "Sweep"};
  return names;
}

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    default: return "unassigned";
  }
}

Split split_from_name(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  if (s == "unassigned") return Split::unassigned;
  throw Error("unknown split name: " + s);
}

int VideoManifest::label_index(const std::string& label) const {
  for (std::size_t i = 0; i < class_names.size(); ++i)
    if (class_names[i] == label) return static_cast<int>(i);
  throw Error("label not in manifest class list: " + label);
}

void VideoManifest::validate() const {
  std::set<std::string> seen_classes(class_names.begin(), class_names.end());
  if (seen_classes.size() != class_names.size())
    throw Error("manifest class names are not unique");
  std::set<std::string> paths;
  for (const auto& e : entries) {
    if (!seen_classes.count(e.label))
      throw Error("entry label not in class list: " + e.label);
    if (!paths.insert(e.path).second) throw Error("duplicate entry path: " + e.path);
  }
}

std::vector<const ManifestEntry*> VideoManifest::split_entries(Split s) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == s) out.push_back(&e);
  return out;
}

void VideoManifest::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write manifest: " + path);
  json header = {{"seed", seed}, {"classes", class_names}};
  f << header.dump() << "\n";
  for (const auto& e : entries) {
    json j = {{"path", e.path},
              {"label", e.label},
              {"split", split_name(e.split)},
              {"num_frames", e.num_frames},
              {"width", e.width},
              {"height", e.height}};
    f << j.dump() << "\n";
  }
}

VideoManifest VideoManifest::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read manifest: " + path);
  VideoManifest m;
  std::string line;
  if (!std::getline(f, line)) throw IoError("manifest is empty: " + path);
  json header = json::parse(line);
  m.seed = header.at("seed").get<long>();
  m.class_names = header.at("classes").get<std::vector<std::string>>();
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    ManifestEntry e;
    e.path = j.at("path").get<std::string>();
    e.label = j.at("label").get<std::string>();
    e.split = split_from_name(j.at("split").get<std::string>());
    e.num_frames = j.value("num_frames", 0L);
    e.width = j.value("width", 0L);
    e.height = j.value("height", 0L);
    m.entries.push_back(std::move(e));
  }
  m.validate();
  return m;
}

VideoManifest build_manifest(const std::string& root_dir,
                             const std::vector<std::string>& class_names) {
  static const std::set<std::string> video_exts = {".mp4", ".avi", ".MP4", ".AVI"};
  VideoManifest m;
  m.class_names = class_names;
  for (const auto& cls : class_names) {
    fs::path dir = fs::path(root_dir) / cls;
    if (!fs::is_directory(dir))
      throw MissingClassError("missing class directory: " + cls + " (" + dir.string() + ")");
    std::vector<std::string> files;
    for (const auto& de : fs::directory_iterator(dir)) {
      if (de.is_regular_file() && video_exts.count(de.path().extension().string()))
        files.push_back(de.path().string());
    }
    if (files.empty()) throw EmptyClassError("no videos for class: " + cls);
    std::sort(files.begin(), files.end());
    for (auto& p : files) {
      ManifestEntry e;
      e.path = std::move(p);
      e.label = cls;
      m.entries.push_back(std::move(e));
    }
  }
  std::sort(m.entries.begin(), m.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.path < b.path; });
  m.validate();
  return m;
}

SplitCounts split_counts(long n, double train_ratio, double /*val_ratio*/,
                         double /*test_ratio*/) {
  SplitCounts c;
  c.train = static_cast<long>(std::floor(train_ratio * static_cast<double>(n)));
  long rem = n - c.train;
  c.val = (rem + 1) / 2;  // ceil(rem / 2)
  c.test = rem - c.val;
  return c;
}

VideoManifest stratified_split(const VideoManifest& manifest, std::array<double, 3> ratios,
                               long seed) {
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
    throw Error("split ratios must sum to 1.0");
  for (const auto& e : manifest.entries)
    if (e.split != Split::unassigned)
      throw Error("stratified_split requires an unassigned manifest");

  VideoManifest out = manifest;
  out.seed = seed;

  // entries grouped by class in canonical class order; within a class,
  // ordering is the manifest's (lexicographic) so the shuffle alone decides
  // the assignment
  for (std::size_t ci = 0; ci < out.class_names.size(); ++ci) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < out.entries.size(); ++i)
      if (out.entries[i].label == out.class_names[ci]) idx.push_back(i);
    long n = static_cast<long>(idx.size());
    if (n < 3)
      throw ClassTooSmallError("class '" + out.class_names[ci] + "' has only " +
                               std::to_string(n) + " samples; at least 3 required");
    // per-class stream so adding a class never perturbs the others
    Pcg32 rng(mix_seed(static_cast<std::uint64_t>(seed), hash_string(out.class_names[ci])));
    rng.shuffle(idx);
    SplitCounts c = split_counts(n, ratios[0], ratios[1], ratios[2]);
    for (long k = 0; k < n; ++k) {
      Split s = (k < c.train)            ? Split::train
                : (k < c.train + c.val)  ? Split::val
                                         : Split::test;
      out.entries[idx[static_cast<std::size_t>(k)]].split = s;
    }
  }
  return out;
}

}  // namespace cricbench
