// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cricbench/rng.hpp"
#include "cricbench/tensor.hpp"
#include "cricbench/video.hpp"

namespace cricbench {

enum class Sampling { evenly_spaced, random_draw, uniform_segment };
enum class Normalization { unit_range, unit_range_imagenet, imagenet };

std::string sampling_name(Sampling s);
Sampling sampling_from_name(const std::string& s);
std::string normalization_name(Normalization n);
Normalization normalization_from_name(const std::string& s);

struct CropRect {
  long row_start = 0, row_end = 0, col_start = 0, col_end = 0;
};

struct PipelineSpec {
  std::string name;
  long target_h = 0, target_w = 0;
  long seq_len = 0;
  Sampling sampling = Sampling::evenly_spaced;
  std::optional<CropRect> crop;
  bool aspect_preserving = false;
  Normalization normalization = Normalization::unit_range;

  std::string to_json() const;
  static PipelineSpec from_json(const std::string& text);
};

struct FrameSequence {
  Tensor data;  // [T, 3, H, W] float32
  std::string pipeline_name;
  int label_index = -1;  // -1 = absent

  // raw little-endian float32 + a JSON shape sidecar at <path>.json
  void save(const std::string& path) const;
  static FrameSequence load(const std::string& path);
};

// t non-decreasing indices into [0, n_frames)
std::vector<long> sample_indices(long n_frames, long t, Sampling strategy,
                                 Pcg32* rng = nullptr);

FrameSequence preprocess(const RawClip& clip, const PipelineSpec& spec, Pcg32* rng = nullptr);

// the five Table-1 pipelines keyed by name
const std::map<std::string, PipelineSpec>& builtin_specs();

// ImageNet channel statistics applied by the two imagenet normalizations
inline constexpr float kImagenetMean[3] = {0.485f, 0.456f, 0.406f};
inline constexpr float kImagenetStd[3] = {0.229f, 0.224f, 0.225f};

// Separable triangle-kernel resize with antialiasing on downscale.
// src is H x W x C float, returns th x tw x C.
std::vector<float> resize_bilinear_aa(const std::vector<float>& src, long h, long w, long c,
                                      long th, long tw);

}  // namespace cricbench
