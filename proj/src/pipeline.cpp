// SPDX-License-Identifier: Apache-2.0
#include "cricbench/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "cricbench/errors.hpp"

using nlohmann::json;

namespace cricbench {

std::string sampling_name(Sampling s) {
  switch (s) {
    case Sampling::evenly_spaced: return "evenly_spaced";
    case Sampling::random_draw: return "random";
    default: return "uniform_segment";
  }
}

Sampling sampling_from_name(const std::string& s) {
  if (s == "evenly_spaced") return Sampling::evenly_spaced;
  if (s == "random") return Sampling::random_draw;
  if (s == "uniform_segment") return Sampling::uniform_segment;
  throw Error("unknown sampling strategy: " + s);
}

std::string normalization_name(Normalization n) {
  switch (n) {
    case Normalization::unit_range: return "unit_range";
    case Normalization::unit_range_imagenet: return "unit_range_imagenet";
    default: return "imagenet";
  }
}

Normalization normalization_from_name(const std::string& s) {
  if (s == "unit_range") return Normalization::unit_range;
  if (s == "unit_range_imagenet") return Normalization::unit_range_imagenet;
  if (s == "imagenet") return Normalization::imagenet;
  throw Error("unknown normalization: " + s);
}

std::string PipelineSpec::to_json() const {
  json j = {{"name", name},
            {"target_h", target_h},
            {"target_w", target_w},
            {"seq_len", seq_len},
            {"sampling", sampling_name(sampling)},
            {"aspect_preserving", aspect_preserving},
            {"normalization", normalization_name(normalization)}};
  if (crop)
    j["crop"] = {crop->row_start, crop->row_end, crop->col_start, crop->col_end};
  return j.dump();
}

PipelineSpec PipelineSpec::from_json(const std::string& text) {
  json j = json::parse(text);
  PipelineSpec s;
  s.name = j.at("name").get<std::string>();
  s.target_h = j.at("target_h").get<long>();
  s.target_w = j.at("target_w").get<long>();
  s.seq_len = j.at("seq_len").get<long>();
  s.sampling = sampling_from_name(j.at("sampling").get<std::string>());
  s.aspect_preserving = j.at("aspect_preserving").get<bool>();
  s.normalization = normalization_from_name(j.at("normalization").get<std::string>());
  if (j.contains("crop")) {
    auto c = j["crop"].get<std::vector<long>>();
    s.crop = CropRect{c[0], c[1], c[2], c[3]};
  }
  return s;
}

std::vector<long> sample_indices(long n_frames, long t, Sampling strategy, Pcg32* rng) {
  if (n_frames < 1 || t < 1) throw Error("sample_indices: n_frames and t must be >= 1");
  std::vector<long> idx;
  idx.reserve(static_cast<std::size_t>(t));
  switch (strategy) {
    case Sampling::evenly_spaced: {
      if (t == 1) {
        idx.push_back(0);
      } else {
        for (long i = 0; i < t; ++i)
          idx.push_back(std::lround(static_cast<double>(i) * static_cast<double>(n_frames - 1) /
                                    static_cast<double>(t - 1)));
      }
      break;
    }
    case Sampling::uniform_segment: {
      for (long k = 0; k < t; ++k) {
        long i = static_cast<long>(
            std::floor((static_cast<double>(k) + 0.5) * static_cast<double>(n_frames) /
                       static_cast<double>(t)));
        idx.push_back(std::min(i, n_frames - 1));
      }
      break;
    }
    case Sampling::random_draw: {
      if (!rng) throw MissingRngError("random sampling requires a seeded rng");
      if (n_frames >= t) {
        // sorted draw without replacement (partial Fisher-Yates)
        std::vector<long> all(static_cast<std::size_t>(n_frames));
        for (long i = 0; i < n_frames; ++i) all[static_cast<std::size_t>(i)] = i;
        for (long i = 0; i < t; ++i) {
          long j = i + static_cast<long>(rng->bounded(static_cast<std::uint32_t>(n_frames - i)));
          std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
        }
        idx.assign(all.begin(), all.begin() + t);
        std::sort(idx.begin(), idx.end());
      } else {
        for (long i = 0; i < n_frames; ++i) idx.push_back(i);
        while (static_cast<long>(idx.size()) < t) idx.push_back(n_frames - 1);
      }
      break;
    }
  }
  return idx;
}

std::vector<float> resize_bilinear_aa(const std::vector<float>& src, long h, long w, long c,
                                      long th, long tw) {
  struct Axis {
    std::vector<int> start;
    std::vector<int> count;
    std::vector<float> weights;  // packed per output index
    std::vector<int> offset;
  };
  auto build = [](long in, long out) {
    Axis ax;
    double scale = static_cast<double>(in) / static_cast<double>(out);
    double support = std::max(scale, 1.0);  // widen the triangle kernel when shrinking
    ax.start.resize(static_cast<std::size_t>(out));
    ax.count.resize(static_cast<std::size_t>(out));
    ax.offset.resize(static_cast<std::size_t>(out));
    for (long i = 0; i < out; ++i) {
      double center = (static_cast<double>(i) + 0.5) * scale - 0.5;
      long lo = static_cast<long>(std::ceil(center - support));
      long hi = static_cast<long>(std::floor(center + support));
      lo = std::max(lo, 0L);
      hi = std::min(hi, in - 1);
      ax.start[static_cast<std::size_t>(i)] = static_cast<int>(lo);
      ax.count[static_cast<std::size_t>(i)] = static_cast<int>(hi - lo + 1);
      ax.offset[static_cast<std::size_t>(i)] = static_cast<int>(ax.weights.size());
      double sum = 0;
      std::vector<double> ws;
      for (long j = lo; j <= hi; ++j) {
        double d = std::abs((static_cast<double>(j) - center) / support);
        double wgt = d < 1.0 ? 1.0 - d : 0.0;
        ws.push_back(wgt);
        sum += wgt;
      }
      if (sum <= 0) {  // degenerate window, fall back to nearest
        std::fill(ws.begin(), ws.end(), 0.0);
        ws[static_cast<std::size_t>(
            std::clamp(std::lround(center) - lo, 0L, hi - lo))] = 1.0;
        sum = 1.0;
      }
      for (double wgt : ws) ax.weights.push_back(static_cast<float>(wgt / sum));
    }
    return ax;
  };

  Axis ay = build(h, th), axx = build(w, tw);
  // horizontal pass: h x tw x c
  std::vector<float> tmp(static_cast<std::size_t>(h * tw * c), 0.0f);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < tw; ++x) {
      const float* wp = axx.weights.data() + axx.offset[static_cast<std::size_t>(x)];
      int s = axx.start[static_cast<std::size_t>(x)], n = axx.count[static_cast<std::size_t>(x)];
      for (long ch = 0; ch < c; ++ch) {
        float acc = 0;
        for (int k = 0; k < n; ++k) acc += wp[k] * src[(y * w + s + k) * c + ch];
        tmp[(y * tw + x) * c + ch] = acc;
      }
    }
  // vertical pass: th x tw x c
  std::vector<float> out(static_cast<std::size_t>(th * tw * c), 0.0f);
  for (long y = 0; y < th; ++y) {
    const float* wp = ay.weights.data() + ay.offset[static_cast<std::size_t>(y)];
    int s = ay.start[static_cast<std::size_t>(y)], n = ay.count[static_cast<std::size_t>(y)];
    for (long x = 0; x < tw; ++x)
      for (long ch = 0; ch < c; ++ch) {
        float acc = 0;
        for (int k = 0; k < n; ++k) acc += wp[k] * tmp[((s + k) * tw + x) * c + ch];
        out[(y * tw + x) * c + ch] = acc;
      }
  }
  return out;
}

FrameSequence preprocess(const RawClip& clip, const PipelineSpec& spec, Pcg32* rng) {
  if (clip.num_frames < 1) throw EmptyVideoError("preprocess: empty clip");
  auto idx = sample_indices(clip.num_frames, spec.seq_len, spec.sampling, rng);

  FrameSequence seq;
  seq.pipeline_name = spec.name;
  seq.data = Tensor({spec.seq_len, 3, spec.target_h, spec.target_w});

  const long th = spec.target_h, tw = spec.target_w;
  for (long t = 0; t < spec.seq_len; ++t) {
    const std::uint8_t* frame = clip.frame(idx[static_cast<std::size_t>(t)]);
    long h = clip.height, w = clip.width;

    std::vector<float> img;
    if (spec.crop) {
      const auto& cr = *spec.crop;
      if (cr.row_end > h || cr.col_end > w || cr.row_start < 0 || cr.col_start < 0)
        throw CropBoundsError("crop [" + std::to_string(cr.row_start) + ":" +
                              std::to_string(cr.row_end) + ", " + std::to_string(cr.col_start) +
                              ":" + std::to_string(cr.col_end) + "] out of bounds for " +
                              std::to_string(h) + "x" + std::to_string(w));
      long ch = cr.row_end - cr.row_start, cw = cr.col_end - cr.col_start;
      img.resize(static_cast<std::size_t>(ch * cw * 3));
      for (long y = 0; y < ch; ++y)
        for (long x = 0; x < cw; ++x)
          for (long k = 0; k < 3; ++k)
            img[(y * cw + x) * 3 + k] = static_cast<float>(
                frame[((cr.row_start + y) * w + cr.col_start + x) * 3 + k]);
      h = ch;
      w = cw;
    } else {
      img.resize(static_cast<std::size_t>(h * w * 3));
      for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(frame[i]);
    }

    // resize (and letterbox when aspect preserving); padding is black in raw
    // pixel space, applied before normalization
    std::vector<float> resized;
    long pad_top = 0, pad_left = 0, rh = th, rw = tw;
    if (spec.aspect_preserving) {
      double scale = std::min(static_cast<double>(th) / static_cast<double>(h),
                              static_cast<double>(tw) / static_cast<double>(w));
      rh = std::max(1L, std::lround(static_cast<double>(h) * scale));
      rw = std::max(1L, std::lround(static_cast<double>(w) * scale));
      pad_top = (th - rh) / 2;
      pad_left = (tw - rw) / 2;
    }
    resized = resize_bilinear_aa(img, h, w, 3, rh, rw);

    float* dst = seq.data.data() + t * 3 * th * tw;
    for (long y = 0; y < rh; ++y)
      for (long x = 0; x < rw; ++x)
        for (long k = 0; k < 3; ++k)
          dst[(k * th + pad_top + y) * tw + pad_left + x] = resized[(y * rw + x) * 3 + k];

    for (long k = 0; k < 3; ++k) {
      float* plane = dst + k * th * tw;
      switch (spec.normalization) {
        case Normalization::unit_range:
          for (long i = 0; i < th * tw; ++i) plane[i] *= (1.0f / 255.0f);
          break;
        case Normalization::unit_range_imagenet:
        case Normalization::imagenet:
          for (long i = 0; i < th * tw; ++i)
            plane[i] = (plane[i] * (1.0f / 255.0f) - kImagenetMean[k]) / kImagenetStd[k];
          break;
      }
    }
  }
  return seq;
}

const std::map<std::string, PipelineSpec>& builtin_specs() {
  static const std::map<std::string, PipelineSpec> specs = [] {
    std::map<std::string, PipelineSpec> m;
    PipelineSpec kumar;
    kumar.name = "kumar";
    kumar.target_h = kumar.target_w = 64;
    kumar.seq_len = 25;
    kumar.sampling = Sampling::evenly_spaced;
    kumar.crop = CropRect{120, 600, 360, 920};
    kumar.normalization = Normalization::unit_range_imagenet;
    m["kumar"] = kumar;

    PipelineSpec bhat;
    bhat.name = "bhat";
    bhat.target_h = bhat.target_w = 100;
    bhat.seq_len = 25;
    bhat.sampling = Sampling::evenly_spaced;
    bhat.normalization = Normalization::unit_range;
    m["bhat"] = bhat;

    PipelineSpec sen_custom;
    sen_custom.name = "sen_custom";
    sen_custom.target_h = 180;
    sen_custom.target_w = 224;
    sen_custom.seq_len = 15;
    sen_custom.sampling = Sampling::random_draw;
    sen_custom.normalization = Normalization::unit_range;
    m["sen_custom"] = sen_custom;

    PipelineSpec sen_vgg = sen_custom;
    sen_vgg.name = "sen_vgg";
    sen_vgg.target_h = sen_vgg.target_w = 224;
    m["sen_vgg"] = sen_vgg;

    PipelineSpec proposed;
    proposed.name = "proposed";
    proposed.target_h = proposed.target_w = 224;
    proposed.seq_len = 30;
    proposed.sampling = Sampling::uniform_segment;
    proposed.aspect_preserving = true;
    proposed.normalization = Normalization::imagenet;
    m["proposed"] = proposed;
    return m;
  }();
  return specs;
}

void FrameSequence::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write frame sequence: " + path);
  f.write(reinterpret_cast<const char*>(data.data()),
          static_cast<std::streamsize>(data.numel() * sizeof(float)));
  json side = {{"shape", data.shape()},
               {"dtype", "float32_le"},
               {"pipeline", pipeline_name},
               {"label_index", label_index}};
  std::ofstream sf(path + ".json");
  if (!sf) throw IoError("cannot write sidecar: " + path + ".json");
  sf << side.dump(2) << "\n";
}

FrameSequence FrameSequence::load(const std::string& path) {
  std::ifstream sf(path + ".json");
  if (!sf) throw IoError("cannot read sidecar: " + path + ".json");
  json side = json::parse(sf);
  FrameSequence seq;
  seq.pipeline_name = side.value("pipeline", "");
  seq.label_index = side.value("label_index", -1);
  std::vector<long> shape = side.at("shape").get<std::vector<long>>();
  seq.data = Tensor(shape);
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read frame sequence: " + path);
  f.read(reinterpret_cast<char*>(seq.data.data()),
         static_cast<std::streamsize>(seq.data.numel() * sizeof(float)));
  if (!f) throw IoError("truncated frame sequence: " + path);
  return seq;
}

}  // namespace cricbench
