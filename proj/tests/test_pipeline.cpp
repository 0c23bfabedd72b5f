// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "cricbench/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cricbench;

namespace {

RawClip make_clip(long n, long h, long w, std::uint8_t fill) {
  RawClip c;
  c.num_frames = n;
  c.height = h;
  c.width = w;
  c.fps = 25.0;
  c.frames.assign(static_cast<std::size_t>(n * h * w * 3), fill);
  return c;
}

// brute-force oracle for segment-center sampling
std::vector<long> uniform_segment_oracle(long n, long t) {
  std::vector<long> out;
  for (long k = 0; k < t; ++k)
    out.push_back(static_cast<long>(
        std::floor((static_cast<double>(k) + 0.5) * static_cast<double>(n) /
                   static_cast<double>(t))));
  return out;
}

// endpoint-inclusive linspace oracle
std::vector<long> evenly_spaced_oracle(long n, long t) {
  std::vector<long> out;
  if (t == 1) return {0};
  for (long i = 0; i < t; ++i) {
    double pos = static_cast<double>(i) * static_cast<double>(n - 1) /
                 static_cast<double>(t - 1);
    long idx = std::min(n - 1, static_cast<long>(std::llround(pos)));
    out.push_back(idx);
  }
  return out;
}

}  // namespace

TEST_CASE("sample_indices: identity and worked examples") {
  std::vector<long> want(25);
  for (long i = 0; i < 25; ++i) want[static_cast<std::size_t>(i)] = i;
  CHECK(sample_indices(25, 25, Sampling::evenly_spaced) == want);

  std::vector<long> expect = {3, 10, 16, 23, 30, 36, 43, 50, 56, 63, 70, 76, 83, 90, 96};
  CHECK(sample_indices(100, 15, Sampling::uniform_segment) == expect);
  CHECK(uniform_segment_oracle(100, 15) == expect);
}

TEST_CASE("sample_indices: uniform_segment matches the oracle broadly") {
  for (long n : {1L, 2L, 7L, 16L, 25L, 80L, 100L, 333L})
    for (long t : {1L, 2L, 15L, 30L})
      if (n >= t) CHECK(sample_indices(n, t, Sampling::uniform_segment) ==
                        uniform_segment_oracle(n, t));
}

TEST_CASE("sample_indices: evenly_spaced matches the oracle broadly") {
  for (long n : {1L, 2L, 7L, 16L, 25L, 80L, 100L})
    for (long t : {1L, 2L, 15L, 25L, 30L})
      if (n >= t)
        CHECK(sample_indices(n, t, Sampling::evenly_spaced) == evenly_spaced_oracle(n, t));
}

TEST_CASE("sample_indices: short clips extend by repeating the final index") {
  // enumerate every n < t up to 50 for both deterministic strategies
  for (long t = 2; t <= 50; ++t) {
    for (long n = 1; n < t; ++n) {
      for (Sampling s : {Sampling::evenly_spaced, Sampling::uniform_segment}) {
        auto idx = sample_indices(n, t, s);
        REQUIRE(static_cast<long>(idx.size()) == t);
        // prefix is the full-length rule on t'=n... the contract is: indices
        // cover [0, n) non-decreasingly and the tail repeats n-1
        for (std::size_t i = 1; i < idx.size(); ++i) CHECK(idx[i] >= idx[i - 1]);
        for (long v : idx) {
          CHECK(v >= 0);
          CHECK(v < n);
        }
        CHECK(idx.back() == n - 1);
        CHECK(idx.front() == 0);
      }
    }
  }
  auto idx = sample_indices(10, 25, Sampling::evenly_spaced);
  CHECK(idx.back() == 9);
  CHECK(idx[24] == 9);
  CHECK(idx[23] == 9);  // repeated 9s at the end
}

TEST_CASE("sample_indices: random draw") {
  CHECK_THROWS_AS(sample_indices(100, 15, Sampling::random_draw), MissingRngError);
  Pcg32 a(42), b(42), c(43);
  auto ia = sample_indices(100, 15, Sampling::random_draw, &a);
  auto ib = sample_indices(100, 15, Sampling::random_draw, &b);
  auto ic = sample_indices(100, 15, Sampling::random_draw, &c);
  CHECK(ia == ib);
  CHECK(ia != ic);
  // sorted draw without replacement
  for (std::size_t i = 1; i < ia.size(); ++i) CHECK(ia[i] > ia[i - 1]);
  for (long v : ia) {
    CHECK(v >= 0);
    CHECK(v < 100);
  }
}

TEST_CASE("builtin_specs: the five Table-1 columns") {
  const auto& specs = builtin_specs();
  REQUIRE(specs.size() == 5);
  const PipelineSpec& kumar = specs.at("kumar");
  CHECK(kumar.target_h == 64);
  CHECK(kumar.target_w == 64);
  CHECK(kumar.seq_len == 25);
  CHECK(kumar.sampling == Sampling::evenly_spaced);
  REQUIRE(kumar.crop.has_value());
  CHECK(kumar.crop->row_start == 120);
  CHECK(kumar.crop->row_end == 600);
  CHECK(kumar.crop->col_start == 360);
  CHECK(kumar.crop->col_end == 920);
  CHECK(kumar.normalization == Normalization::unit_range_imagenet);

  const PipelineSpec& bhat = specs.at("bhat");
  CHECK(bhat.target_h == 100);
  CHECK(bhat.target_w == 100);
  CHECK(bhat.seq_len == 25);
  CHECK(bhat.sampling == Sampling::evenly_spaced);
  CHECK(!bhat.crop.has_value());
  CHECK(bhat.normalization == Normalization::unit_range);

  const PipelineSpec& sen_custom = specs.at("sen_custom");
  CHECK(sen_custom.target_h == 180);
  CHECK(sen_custom.target_w == 224);
  CHECK(sen_custom.seq_len == 15);
  CHECK(sen_custom.sampling == Sampling::random_draw);

  const PipelineSpec& sen_vgg = specs.at("sen_vgg");
  CHECK(sen_vgg.target_h == 224);
  CHECK(sen_vgg.target_w == 224);
  CHECK(sen_vgg.seq_len == 15);

  const PipelineSpec& proposed = specs.at("proposed");
  CHECK(proposed.target_h == 224);
  CHECK(proposed.target_w == 224);
  CHECK(proposed.seq_len == 30);
  CHECK(proposed.sampling == Sampling::uniform_segment);
  CHECK(proposed.aspect_preserving);
  CHECK(proposed.normalization == Normalization::imagenet);
}

TEST_CASE("preprocess: shape contract for all specs") {
  RawClip clip = make_clip(80, 720, 1280, 128);
  Pcg32 rng(3);
  for (const auto& [name, spec] : builtin_specs()) {
    FrameSequence f = preprocess(clip, spec, &rng);
    std::vector<long> want = {spec.seq_len, 3, spec.target_h, spec.target_w};
    CHECK(f.data.shape() == want);
    for (long i = 0; i < f.data.numel(); ++i) CHECK(std::isfinite(f.data[i]));
  }
  // short clip still yields full-length output
  RawClip tiny = make_clip(3, 720, 1280, 10);
  FrameSequence f = preprocess(tiny, builtin_specs().at("bhat"));
  CHECK(f.data.dim(0) == 25);
}

TEST_CASE("preprocess: constant white through bhat is 1.0 within float rounding") {
  RawClip clip = make_clip(25, 720, 1280, 255);
  FrameSequence f = preprocess(clip, builtin_specs().at("bhat"));
  for (long i = 0; i < f.data.numel(); ++i)
    CHECK(f.data[i] == doctest::Approx(1.0f).epsilon(1e-6));
}

TEST_CASE("preprocess: unit_range output bounds") {
  RawClip clip = make_clip(20, 720, 1280, 0);
  // gradient content to exercise the resize
  for (std::size_t i = 0; i < clip.frames.size(); ++i)
    clip.frames[i] = static_cast<std::uint8_t>(i % 251);
  Pcg32 rng(9);
  FrameSequence f = preprocess(clip, builtin_specs().at("sen_custom"), &rng);
  for (long i = 0; i < f.data.numel(); ++i) {
    CHECK(f.data[i] >= 0.0f);
    CHECK(f.data[i] <= 1.0f);
  }
}

TEST_CASE("preprocess: kumar crop region and bounds error") {
  // verify via a marker: pixel at source (120, 360) becomes the crop's (0, 0);
  // crop is 480x560 before the resize to 64x64, so output (0,0) averages the
  // top-left corner of the cropped region only
  RawClip clip = make_clip(25, 720, 1280, 0);
  // paint the crop region white, everything else black
  for (long fidx = 0; fidx < clip.num_frames; ++fidx)
    for (long y = 120; y < 600; ++y)
      for (long x = 360; x < 920; ++x) {
        std::uint8_t* p = clip.frame(fidx) + (y * clip.width + x) * 3;
        p[0] = p[1] = p[2] = 255;
      }
  FrameSequence f = preprocess(clip, builtin_specs().at("kumar"));
  // all-white crop -> each channel plane is uniformly the normalized white
  // value: the resize saw only the 480x560 white region, none of the black
  // surround (the channels differ because the imagenet stats differ per
  // channel)
  for (long t = 0; t < 25; ++t)
    for (long c = 0; c < 3; ++c) {
      float want = (1.0f - kImagenetMean[c]) / kImagenetStd[c];
      const float* plane = f.data.data() + (t * 3 + c) * 64 * 64;
      for (long i = 0; i < 64 * 64; ++i)
        CHECK(plane[i] == doctest::Approx(want).epsilon(1e-5));
    }

  RawClip small = make_clip(25, 480, 640, 0);
  CHECK_THROWS_AS(preprocess(small, builtin_specs().at("kumar")), CropBoundsError);
}

TEST_CASE("preprocess: proposed letterbox padding is (49, 49)") {
  // 720x1280 -> scale 224/1280 -> content rows round(720*224/1280) = 126,
  // centered: 49 zero rows above and below
  RawClip clip = make_clip(30, 720, 1280, 255);
  FrameSequence f = preprocess(clip, builtin_specs().at("proposed"));
  long H = 224, W = 224;
  const float pad_r = (0.0f - 0.485f) / 0.229f;  // black pixel, channel 0 normalized
  // frame 0, channel 0
  auto at = [&](long y, long x) { return f.data[(0 * 3 + 0) * H * W + y * W + x]; };
  for (long y = 0; y < 49; ++y) CHECK(at(y, 0) == doctest::Approx(pad_r).epsilon(1e-5));
  for (long y = 175; y < 224; ++y) CHECK(at(y, 0) == doctest::Approx(pad_r).epsilon(1e-5));
  const float white_r = (1.0f - 0.485f) / 0.229f;
  for (long y = 49; y < 175; ++y) CHECK(at(y, 112) == doctest::Approx(white_r).epsilon(1e-4));
  // aspect: content is 126 rows x 224 cols vs source 720x1280
  CHECK(std::abs(126.0 / 224.0 - 720.0 / 1280.0) < 1.0 / 224.0);
}

TEST_CASE("preprocess: determinism") {
  RawClip clip = make_clip(40, 360, 640, 0);
  for (std::size_t i = 0; i < clip.frames.size(); ++i)
    clip.frames[i] = static_cast<std::uint8_t>((i * 31) % 256);
  FrameSequence a = preprocess(clip, builtin_specs().at("proposed"));
  FrameSequence b = preprocess(clip, builtin_specs().at("proposed"));
  REQUIRE(a.data.numel() == b.data.numel());
  for (long i = 0; i < a.data.numel(); ++i) CHECK(a.data[i] == b.data[i]);
  Pcg32 r1(5), r2(5);
  FrameSequence c = preprocess(clip, builtin_specs().at("sen_vgg"), &r1);
  FrameSequence d = preprocess(clip, builtin_specs().at("sen_vgg"), &r2);
  for (long i = 0; i < c.data.numel(); ++i) CHECK(c.data[i] == d.data[i]);
}

TEST_CASE("FrameSequence: raw float32 + sidecar round trip") {
  RawClip clip = make_clip(10, 120, 160, 77);
  FrameSequence a = preprocess(clip, builtin_specs().at("bhat"));
  a.label_index = 4;
  fs::path p = fs::temp_directory_path() / "cricbench_seq_test.bin";
  a.save(p.string());
  FrameSequence b = FrameSequence::load(p.string());
  CHECK(b.pipeline_name == a.pipeline_name);
  CHECK(b.label_index == 4);
  REQUIRE(b.data.shape() == a.data.shape());
  for (long i = 0; i < a.data.numel(); ++i) CHECK(a.data[i] == b.data[i]);
  fs::remove(p);
  fs::remove(p.string() + ".json");
}

TEST_CASE("PipelineSpec JSON round trip") {
  const PipelineSpec& kumar = builtin_specs().at("kumar");
  PipelineSpec r = PipelineSpec::from_json(kumar.to_json());
  CHECK(r.name == kumar.name);
  CHECK(r.target_h == kumar.target_h);
  CHECK(r.seq_len == kumar.seq_len);
  CHECK(r.sampling == kumar.sampling);
  REQUIRE(r.crop.has_value());
  CHECK(r.crop->row_end == 600);
  CHECK(r.normalization == kumar.normalization);
}
