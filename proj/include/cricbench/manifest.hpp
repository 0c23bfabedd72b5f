// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "cricbench/errors.hpp"

namespace cricbench {

enum class Split { train, val, test, unassigned };

std::string split_name(Split s);
Split split_from_name(const std::string& s);

// Canonical CricShot10 class order; every manifest defaults to it.
const std::vector<std::string>& default_class_names();

struct ManifestEntry {
  std::string path;
  std::string label;
  Split split = Split::unassigned;
  long num_frames = 0;  // 0 = not yet probed
  long width = 0;
  long height = 0;
};

struct SplitCounts {
  long train = 0;
  long val = 0;
  long test = 0;
};

// train = floor(0.70 n), val = ceil(remainder / 2), test = the rest
SplitCounts split_counts(long n, double train_ratio, double val_ratio, double test_ratio);

struct VideoManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> class_names = default_class_names();
  long seed = 0;

  int label_index(const std::string& label) const;
  void validate() const;
  void save(const std::string& path) const;
  static VideoManifest load(const std::string& path);

  std::vector<const ManifestEntry*> split_entries(Split s) const;
};

// One entry per video file under root_dir/<class>/; split = unassigned;
// entries ordered lexicographically by path.
VideoManifest build_manifest(const std::string& root_dir,
                             const std::vector<std::string>& class_names = default_class_names());

VideoManifest stratified_split(const VideoManifest& manifest,
                               std::array<double, 3> ratios, long seed);

}  // namespace cricbench
