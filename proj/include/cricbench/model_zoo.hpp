// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cricbench/nn.hpp"
#include "cricbench/pipeline.hpp"

namespace cricbench {

struct ModelSpec {
  std::string arch_id;
  int num_classes = 10;
  std::map<std::string, double> hyper;  // hidden sizes, layers, dropout, backbone_scale, ...

  double hyper_or(const std::string& key, double def) const {
    auto it = hyper.find(key);
    return it == hyper.end() ? def : it->second;
  }
  std::string to_json() const;
  static ModelSpec from_json(const std::string& text);
  bool operator==(const ModelSpec& o) const = default;
};

const std::vector<std::string>& all_arch_ids();
// pipeline each architecture expects its input preprocessed with
const std::string& required_pipeline(const std::string& arch_id);
// human-readable name used in report tables
const std::string& arch_display_name(const std::string& arch_id);

// FrameSequence batch in, num_classes logits out.
class Model {
 public:
  explicit Model(ModelSpec spec);
  virtual ~Model() = default;

  const ModelSpec& spec() const { return spec_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // batch: [B, T, 3, H, W] matching the required pipeline
  ag::Var forward(ag::Var batch, const nn::Ctx& ctx);
  Tensor forward_eval(const Tensor& batch);  // eval mode, no graph

  // per-frame feature dimension entering the temporal model
  virtual long frame_feature_dim() const = 0;
  // attention weights [B, T] of the last forward; empty for archs without attention
  const Tensor& last_attention() const { return last_attention_; }

  std::pair<long, long> count_parameters() const { return params_.count(); }

  void save_checkpoint(const std::string& path) const;
  static std::unique_ptr<Model> load_checkpoint(const std::string& path);

 protected:
  virtual ag::Var forward_impl(ag::Var batch, const nn::Ctx& ctx) = 0;
  void check_input(const ag::Var& batch) const;

  ModelSpec spec_;
  nn::ParamStore params_;
  Tensor last_attention_;
};

std::unique_ptr<Model> build_model(const ModelSpec& spec);

// width scaling for desk-scale backbones
inline long scaled_width(long c, double s) {
  return std::max(1L, std::lround(static_cast<double>(c) * s));
}

}  // namespace cricbench
