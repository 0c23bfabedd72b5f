// SPDX-License-Identifier: Apache-2.0
#include "cricbench/synth.hpp"

#include <cmath>
#include <filesystem>

#include "cricbench/rng.hpp"
#include "cricbench/video.hpp"

namespace fs = std::filesystem;

namespace cricbench {

void SyntheticSpec::validate() const {
  if (n_classes < 2) throw ConfigError("n_classes must be >= 2");
  if (clips_per_class < 1) throw ConfigError("clips_per_class must be >= 1");
  if (frames < 2) throw ConfigError("frames must be >= 2");
  if (height < 16 || width < 16) throw ConfigError("size must be at least 16x16");
}

std::vector<std::string> synthetic_class_names(long n_classes) {
  std::vector<std::string> names;
  const auto& canonical = default_class_names();
  for (long i = 0; i < n_classes; ++i) {
    if (i < static_cast<long>(canonical.size()))
      names.push_back(canonical[static_cast<std::size_t>(i)]);
    else
      names.push_back("Class" + std::to_string(i));
  }
  return names;
}

namespace {

RawClip render_clip(const SyntheticSpec& spec, long class_idx, Pcg32& rng) {
  RawClip clip;
  clip.height = spec.height;
  clip.width = spec.width;
  clip.num_frames = spec.frames;
  clip.fps = 25.0;
  clip.frames.assign(
      static_cast<std::size_t>(spec.frames * spec.height * spec.width * 3), 20);

  // class-specific motion direction; speed jitter keeps clips distinct
  double angle = 2.0 * M_PI * static_cast<double>(class_idx) /
                 static_cast<double>(spec.n_classes);
  double speed = 0.30 * static_cast<double>(std::min(spec.height, spec.width)) /
                 static_cast<double>(spec.frames - 1);
  speed *= rng.uniform(0.85, 1.15);
  double dx = speed * std::cos(angle), dy = speed * std::sin(angle);

  // the trajectory stays inside the standard crop window when the frame is
  // large enough to be cropped, so cropping pipelines still see the motion
  double row0 = 0, row1 = static_cast<double>(spec.height);
  double col0 = 0, col1 = static_cast<double>(spec.width);
  if (spec.height >= 600 && spec.width >= 920) {
    row0 = 120, row1 = 600, col0 = 360, col1 = 920;
  }

  double radius = static_cast<double>(std::min(spec.height, spec.width)) / 6.0;
  double travel_x = dx * static_cast<double>(spec.frames - 1);
  double travel_y = dy * static_cast<double>(spec.frames - 1);
  double x_lo = col0 + radius + std::max(0.0, -travel_x);
  double x_hi = col1 - radius - std::max(0.0, travel_x);
  double y_lo = row0 + radius + std::max(0.0, -travel_y);
  double y_hi = row1 - radius - std::max(0.0, travel_y);
  double cx = x_lo < x_hi ? rng.uniform(x_lo, x_hi) : 0.5 * (col0 + col1);
  double cy = y_lo < y_hi ? rng.uniform(y_lo, y_hi) : 0.5 * (row0 + row1);

  double sigma2 = radius * radius / 4.0;
  long reach = static_cast<long>(std::ceil(3.0 * radius));  // beyond this the blob is ~0
  for (long f = 0; f < spec.frames; ++f) {
    std::uint8_t* frame = clip.frames.data() +
                          static_cast<std::size_t>(f * spec.height * spec.width * 3);
    double bx = cx + dx * static_cast<double>(f);
    double by = cy + dy * static_cast<double>(f);
    long ylo = std::max(0L, static_cast<long>(by) - reach);
    long yhi = std::min(spec.height, static_cast<long>(by) + reach + 1);
    long xlo = std::max(0L, static_cast<long>(bx) - reach);
    long xhi = std::min(spec.width, static_cast<long>(bx) + reach + 1);
    for (long y = ylo; y < yhi; ++y) {
      for (long x = xlo; x < xhi; ++x) {
        double d2 = (static_cast<double>(x) - bx) * (static_cast<double>(x) - bx) +
                    (static_cast<double>(y) - by) * (static_cast<double>(y) - by);
        double v = 235.0 * std::exp(-d2 / (2.0 * sigma2));
        auto px = static_cast<std::uint8_t>(std::min(255.0, 20.0 + v));
        std::uint8_t* p = frame + (y * spec.width + x) * 3;
        p[0] = p[1] = p[2] = px;
      }
    }
  }
  return clip;
}

}  // namespace

VideoManifest generate_synthetic(const SyntheticSpec& spec, const std::string& out_dir) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create out_dir: " + out_dir);

  auto names = synthetic_class_names(spec.n_classes);
  for (long c = 0; c < spec.n_classes; ++c) {
    fs::path cls_dir = fs::path(out_dir) / names[static_cast<std::size_t>(c)];
    fs::create_directories(cls_dir, ec);
    if (ec || !fs::is_directory(cls_dir))
      throw IoError("cannot create class dir: " + cls_dir.string());
    for (long k = 0; k < spec.clips_per_class; ++k) {
      // per-clip stream: file content depends only on (seed, class, clip index)
      Pcg32 rng(mix_seed(static_cast<std::uint64_t>(spec.seed),
                         mix_seed(static_cast<std::uint64_t>(c),
                                  static_cast<std::uint64_t>(k))));
      RawClip clip = render_clip(spec, c, rng);
      char fname[32];
      std::snprintf(fname, sizeof(fname), "clip_%03ld.avi", k);
      write_video((cls_dir / fname).string(), clip);
    }
  }

  VideoManifest m = build_manifest(out_dir, names);
  for (auto& e : m.entries) {
    e.num_frames = spec.frames;
    e.width = spec.width;
    e.height = spec.height;
  }
  m.seed = spec.seed;
  return m;
}

}  // namespace cricbench
