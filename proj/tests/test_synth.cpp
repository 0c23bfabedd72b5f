// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cricbench/synth.hpp"
#include "cricbench/video.hpp"

namespace fs = std::filesystem;
using namespace cricbench;

namespace {

std::string file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.n_classes = 4;
  s.clips_per_class = 10;
  s.frames = 16;
  s.height = 64;
  s.width = 64;
  s.seed = 5;
  return s;
}

}  // namespace

TEST_CASE("synth: counts and manifest") {
  fs::path dir = fs::temp_directory_path() / "cricbench_synth_counts";
  fs::remove_all(dir);
  VideoManifest m = generate_synthetic(small_spec(), dir.string());
  CHECK(m.entries.size() == 40);
  CHECK(m.class_names.size() == 4);
  long files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) ++files;
  CHECK(files == 40);
  // round trip through the decoder
  RawClip clip = decode_video(m.entries.front().path);
  CHECK(clip.num_frames == 16);
  CHECK(clip.height == 64);
  CHECK(clip.width == 64);
  fs::remove_all(dir);
}

TEST_CASE("synth: identical spec twice is bit-identical") {
  fs::path a = fs::temp_directory_path() / "cricbench_synth_a";
  fs::path b = fs::temp_directory_path() / "cricbench_synth_b";
  fs::remove_all(a);
  fs::remove_all(b);
  SyntheticSpec spec = small_spec();
  spec.clips_per_class = 3;
  VideoManifest ma = generate_synthetic(spec, a.string());
  VideoManifest mb = generate_synthetic(spec, b.string());
  REQUIRE(ma.entries.size() == mb.entries.size());
  for (std::size_t i = 0; i < ma.entries.size(); ++i)
    CHECK(file_bytes(ma.entries[i].path) == file_bytes(mb.entries[i].path));
  // different seed -> different bytes somewhere
  fs::path c = fs::temp_directory_path() / "cricbench_synth_c";
  fs::remove_all(c);
  SyntheticSpec spec2 = spec;
  spec2.seed = 6;
  VideoManifest mc = generate_synthetic(spec2, c.string());
  bool any_diff = false;
  for (std::size_t i = 0; i < ma.entries.size(); ++i)
    if (file_bytes(ma.entries[i].path) != file_bytes(mc.entries[i].path)) any_diff = true;
  CHECK(any_diff);
  fs::remove_all(a);
  fs::remove_all(b);
  fs::remove_all(c);
}

TEST_CASE("synth: nearest-centroid separability oracle >= 95%") {
  fs::path dir = fs::temp_directory_path() / "cricbench_synth_sep";
  fs::remove_all(dir);
  SyntheticSpec spec = small_spec();
  VideoManifest m = generate_synthetic(spec, dir.string());

  // oracle feature: mean frame-difference displacement direction, computed
  // from intensity-weighted centroids of consecutive frames
  auto motion_feature = [](const RawClip& clip) {
    double dx_sum = 0, dy_sum = 0;
    auto centroid = [&](long f, double& cx, double& cy) {
      double wsum = 1e-9;
      cx = cy = 0;
      const std::uint8_t* fr = clip.frame(f);
      for (long y = 0; y < clip.height; ++y)
        for (long x = 0; x < clip.width; ++x) {
          double w = std::max(0.0, static_cast<double>(fr[(y * clip.width + x) * 3]) - 40.0);
          wsum += w;
          cx += w * static_cast<double>(x);
          cy += w * static_cast<double>(y);
        }
      cx /= wsum;
      cy /= wsum;
    };
    for (long f = 1; f < clip.num_frames; ++f) {
      double ax, ay, bx, by;
      centroid(f - 1, ax, ay);
      centroid(f, bx, by);
      dx_sum += bx - ax;
      dy_sum += by - ay;
    }
    double norm = std::hypot(dx_sum, dy_sum) + 1e-12;
    return std::pair<double, double>{dx_sum / norm, dy_sum / norm};
  };

  std::vector<std::pair<double, double>> feats;
  std::vector<int> labels;
  for (const auto& e : m.entries) {
    feats.push_back(motion_feature(decode_video(e.path)));
    labels.push_back(m.label_index(e.label));
  }
  // class centroids
  std::vector<double> cx(4, 0), cy(4, 0), n(4, 0);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    cx[static_cast<std::size_t>(labels[i])] += feats[i].first;
    cy[static_cast<std::size_t>(labels[i])] += feats[i].second;
    n[static_cast<std::size_t>(labels[i])] += 1;
  }
  for (int c = 0; c < 4; ++c) {
    cx[c] /= n[c];
    cy[c] /= n[c];
  }
  long agree = 0;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    int best = 0;
    double best_d = 1e18;
    for (int c = 0; c < 4; ++c) {
      double d = (feats[i].first - cx[c]) * (feats[i].first - cx[c]) +
                 (feats[i].second - cy[c]) * (feats[i].second - cy[c]);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    agree += best == labels[i];
  }
  CHECK(static_cast<double>(agree) / static_cast<double>(feats.size()) >= 0.95);
  fs::remove_all(dir);
}

TEST_CASE("synth: validation and io errors") {
  SyntheticSpec bad = small_spec();
  bad.n_classes = 1;
  CHECK_THROWS_AS(generate_synthetic(bad, "/tmp/cricbench_unused"), ConfigError);
  CHECK_THROWS_AS(generate_synthetic(small_spec(), "/proc/cricbench_cannot_write"), IoError);
}
