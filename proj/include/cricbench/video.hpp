// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cricbench/errors.hpp"

namespace cricbench {

// Decoded clip: N frames of H x W x 3 (RGB, uint8), temporal order.
struct RawClip {
  std::vector<std::uint8_t> frames;  // N*H*W*3
  long num_frames = 0;
  long height = 0;
  long width = 0;
  double fps = 0.0;
  std::string source_path;

  const std::uint8_t* frame(long i) const { return frames.data() + i * height * width * 3; }
  std::uint8_t* frame(long i) { return frames.data() + i * height * width * 3; }
  std::uint8_t pixel(long f, long y, long x, long c) const {
    return frames[((f * height + y) * width + x) * 3 + c];
  }
};

RawClip decode_video(const std::string& path);

// MJPG-in-AVI writer; frames are RGB uint8 as in RawClip.
void write_video(const std::string& path, const RawClip& clip);

}  // namespace cricbench
