// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "cricbench/manifest.hpp"

namespace cricbench {

// Desk-scale stand-in dataset: each class is a bright blob moving in a
// class-specific direction over a dark background, so classes are separable by
// frame-difference statistics by construction.
struct SyntheticSpec {
  long n_classes = 4;
  long clips_per_class = 10;
  long frames = 16;
  long height = 64;
  long width = 64;
  long seed = 0;

  void validate() const;
};

// Writes clips_per_class × n_classes videos under out_dir/<class>/ and returns
// the (unassigned) manifest. Identical spec → bit-identical files.
VideoManifest generate_synthetic(const SyntheticSpec& spec, const std::string& out_dir);

// Class names used for a synthetic dataset of n classes (first n canonical
// names, or generated names past 10).
std::vector<std::string> synthetic_class_names(long n_classes);

}  // namespace cricbench
