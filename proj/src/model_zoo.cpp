// SPDX-License-Identifier: Apache-2.0
#include "cricbench/model_zoo.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>

#include "cricbench/errors.hpp"

using nlohmann::json;

namespace cricbench {

namespace {

using ag::Var;
using nn::Ctx;

constexpr char kCheckpointMagic[8] = {'C', 'B', 'C', 'K', 'P', 'T', '0', '1'};

}  // namespace

// ---- spec ------------------------------------------------------------------

std::string ModelSpec::to_json() const {
  json j = {{"arch_id", arch_id}, {"num_classes", num_classes}, {"hyper", hyper}};
  return j.dump();
}

ModelSpec ModelSpec::from_json(const std::string& text) {
  json j = json::parse(text);
  ModelSpec s;
  s.arch_id = j.at("arch_id").get<std::string>();
  s.num_classes = j.at("num_classes").get<int>();
  if (j.contains("hyper")) s.hyper = j["hyper"].get<std::map<std::string, double>>();
  return s;
}

const std::vector<std::string>& all_arch_ids() {
  static const std::vector<std::string> ids = {
      "lrcn_kumar",       "cnn_rnn_bhat",     "attention_bhat", "vit_gru_bhat",
      "cnn_gru_sen",      "dilated_cnn_gru_sen", "vgg16_gru_frozen",
      "vgg16_gru_final4", "vgg16_gru_final8", "effnet_gru_proposed"};
  return ids;
}

const std::string& required_pipeline(const std::string& arch_id) {
  static const std::map<std::string, std::string> m = {
      {"lrcn_kumar", "kumar"},          {"cnn_rnn_bhat", "bhat"},
      {"attention_bhat", "bhat"},       {"vit_gru_bhat", "bhat"},
      {"cnn_gru_sen", "sen_custom"},    {"dilated_cnn_gru_sen", "sen_custom"},
      {"vgg16_gru_frozen", "sen_vgg"},  {"vgg16_gru_final4", "sen_vgg"},
      {"vgg16_gru_final8", "sen_vgg"},  {"effnet_gru_proposed", "proposed"}};
  auto it = m.find(arch_id);
  if (it == m.end()) throw UnknownArchError("unknown arch_id: " + arch_id);
  return it->second;
}

const std::string& arch_display_name(const std::string& arch_id) {
  static const std::map<std::string, std::string> m = {
      {"lrcn_kumar", "LRCN [Kumar et al.]"},
      {"cnn_rnn_bhat", "CNN-RNN [Bhat et al.]"},
      {"attention_bhat", "Attention Network [Bhat et al.]"},
      {"vit_gru_bhat", "ViT-GRU Hybrid [Bhat et al.]"},
      {"cnn_gru_sen", "Custom CNN-GRU [Sen et al.]"},
      {"dilated_cnn_gru_sen", "Dilated CNN-GRU [Sen et al.]"},
      {"vgg16_gru_frozen", "VGG16-GRU Frozen [Sen et al.]"},
      {"vgg16_gru_final4", "VGG16-GRU Final4 [Sen et al.]"},
      {"vgg16_gru_final8", "VGG16-GRU Final8 [Sen et al.]"},
      {"effnet_gru_proposed", "EfficientNet-B0 + GRU"}};
  auto it = m.find(arch_id);
  if (it == m.end()) throw UnknownArchError("unknown arch_id: " + arch_id);
  return it->second;
}

// ---- base ------------------------------------------------------------------

Model::Model(ModelSpec spec)
    : spec_(std::move(spec)),
      params_(mix_seed(hash_string(spec_.arch_id),
                       static_cast<std::uint64_t>(spec_.hyper_or("init_seed", 0)))) {
  if (spec_.num_classes < 2) throw SpecError("num_classes must be >= 2");
  if (spec_.hyper_or("pretrained", 0.0) != 0.0)
    throw SpecError(
        "pretrained weights are not bundled; train from scratch or load a checkpoint");
}

void Model::check_input(const Var& batch) const {
  const PipelineSpec& p = builtin_specs().at(required_pipeline(spec_.arch_id));
  const auto& s = batch.shape();
  std::vector<long> expect = {-1, p.seq_len, 3, p.target_h, p.target_w};
  bool ok = s.size() == 5 && s[1] == expect[1] && s[2] == 3 && s[3] == expect[3] &&
            s[4] == expect[4];
  if (!ok)
    throw ShapeError("input shape mismatch for " + spec_.arch_id + ": expected (B," +
                     std::to_string(p.seq_len) + ",3," + std::to_string(p.target_h) + "," +
                     std::to_string(p.target_w) + "), got " + Tensor::shape_str(s));
}

ag::Var Model::forward(Var batch, const Ctx& ctx) {
  check_input(batch);
  return forward_impl(std::move(batch), ctx);
}

Tensor Model::forward_eval(const Tensor& batch) {
  ag::NoGrad ng;
  Ctx ctx;  // eval mode, no rng
  return forward(Var(batch), ctx).value();
}

// ---- shared pieces ---------------------------------------------------------

namespace {

// fold [B,T,3,H,W] into a frame batch [B*T,3,H,W]
Var fold_frames(Var batch) {
  auto s = batch.shape();
  return ag::reshape(batch, {s[0] * s[1], s[2], s[3], s[4]});
}

Var unfold_frames(Var feats, long B, long T) {
  return ag::reshape(feats, {B, T, feats.value().numel() / (B * T)});
}

// conv 3x3 + relu + maxpool + dropout, the plain-CNN building block
struct ConvBlock {
  nn::Conv2d conv;
  long pool = 2;
  double drop = 0.0;
  ConvBlock() = default;
  ConvBlock(nn::ParamStore& ps, const std::string& prefix, long cin, long cout, long pool_,
            double drop_, long dilation = 1)
      : conv(ps, prefix, cin, cout, 3, 1, dilation, dilation), pool(pool_), drop(drop_) {}
  Var forward(Var x, const Ctx& ctx) const {
    Var y = ag::maxpool2d(ag::relu(conv.forward(x)), pool, pool);
    if (drop > 0.0 && ctx.rng) y = ag::dropout(y, drop, *ctx.rng, ctx.training);
    return y;
  }
};

// ---- lrcn_kumar ------------------------------------------------------------

class LrcnKumar final : public Model {
 public:
  explicit LrcnKumar(ModelSpec spec) : Model(std::move(spec)) {
    double s = spec_.hyper_or("backbone_scale", 1.0);
    const long ch[4] = {scaled_width(32, s), scaled_width(64, s), scaled_width(128, s),
                        scaled_width(256, s)};
    const long pools[4] = {4, 4, 2, 2};  // 64 -> 16 -> 4 -> 2 -> 1
    double dropout = spec_.hyper_or("dropout", 0.4);
    long cin = 3;
    for (int i = 0; i < 4; ++i) {
      blocks_[i] = ConvBlock(params_, "backbone.conv" + std::to_string(i + 1), cin, ch[i],
                             pools[i], dropout);
      cin = ch[i];
    }
    feat_dim_ = ch[3];  // 1x1 spatial after the four pools
    long hidden = static_cast<long>(spec_.hyper_or("lstm_hidden", 32));
    lstm_ = nn::LSTM(params_, "temporal.lstm", feat_dim_, hidden, 1, false);
    head_ = nn::Linear(params_, "head", hidden, spec_.num_classes);
  }
  long frame_feature_dim() const override { return feat_dim_; }

 protected:
  Var forward_impl(Var batch, const Ctx& ctx) override {
    long B = batch.value().dim(0), T = batch.value().dim(1);
    Var x = fold_frames(batch);
    for (const auto& b : blocks_) x = b.forward(x, ctx);
    Var feats = unfold_frames(ag::reshape(x, {B * T, feat_dim_}), B, T);
    Var out = lstm_.forward(feats);
    return head_.forward(lstm_.last_hidden(out));
  }

 private:
  ConvBlock blocks_[4];
  nn::LSTM lstm_;
  nn::Linear head_;
  long feat_dim_ = 0;
};

// ---- bhat CNN (shared by cnn_rnn_bhat and attention_bhat) ------------------

// four 3x3 blocks with 2x2 pools: 100 -> 50 -> 25 -> 12 -> 6; the fourth
// block's 256 channels make the flatten exactly 6*6*256 = 9,216 at scale 1
struct BhatCnn {
  ConvBlock blocks[4];
  long flat_dim = 0;
  BhatCnn() = default;
  BhatCnn(nn::ParamStore& ps, double s) {
    const long ch[4] = {scaled_width(32, s), scaled_width(64, s), scaled_width(128, s),
                        scaled_width(256, s)};
    long cin = 3;
    for (int i = 0; i < 4; ++i) {
      blocks[i] = ConvBlock(ps, "backbone.conv" + std::to_string(i + 1), cin, ch[i], 2, 0.0);
      cin = ch[i];
    }
    flat_dim = 6 * 6 * ch[3];
  }
  Var forward(Var frames, const Ctx& ctx) const {
    Var x = frames;
    for (const auto& b : blocks) x = b.forward(x, ctx);
    return ag::reshape(x, {x.value().dim(0), flat_dim});
  }
};

class CnnRnnBhat final : public Model {
 public:
  explicit CnnRnnBhat(ModelSpec spec) : Model(std::move(spec)) {
    cnn_ = BhatCnn(params_, spec_.hyper_or("backbone_scale", 1.0));
    long hidden = static_cast<long>(spec_.hyper_or("gru_hidden", 512));
    long layers = static_cast<long>(spec_.hyper_or("gru_layers", 2));
    gru_ = nn::GRU(params_, "temporal.gru", cnn_.flat_dim, hidden, layers, false);
    head_ = nn::Linear(params_, "head", hidden, spec_.num_classes);
  }
  long frame_feature_dim() const override { return cnn_.flat_dim; }

 protected:
  Var forward_impl(Var batch, const Ctx& ctx) override {
    long B = batch.value().dim(0), T = batch.value().dim(1);
    Var feats = unfold_frames(cnn_.forward(fold_frames(batch), ctx), B, T);
    Var out = gru_.forward(feats);
    return head_.forward(gru_.last_hidden(out));
  }

 private:
  BhatCnn cnn_;
  nn::GRU gru_;
  nn::Linear head_;
};

class AttentionBhat final : public Model {
 public:
  explicit AttentionBhat(ModelSpec spec) : Model(std::move(spec)) {
    cnn_ = BhatCnn(params_, spec_.hyper_or("backbone_scale", 1.0));
    long hidden = static_cast<long>(spec_.hyper_or("lstm_hidden", 256));
    lstm_ = nn::LSTM(params_, "temporal.bilstm", cnn_.flat_dim, hidden, 1, true);
    attn_ = nn::AttentionPool(params_, "attention", 2 * hidden,
                              static_cast<long>(spec_.hyper_or("attn_dim", 128)));
    head_ = nn::Linear(params_, "head", 2 * hidden, spec_.num_classes);
  }
  long frame_feature_dim() const override { return cnn_.flat_dim; }

 protected:
  Var forward_impl(Var batch, const Ctx& ctx) override {
    long B = batch.value().dim(0), T = batch.value().dim(1);
    Var feats = unfold_frames(cnn_.forward(fold_frames(batch), ctx), B, T);
    auto [context, weights] = attn_.forward(lstm_.forward(feats));
    last_attention_ = weights.value();
    return head_.forward(context);
  }

 private:
  BhatCnn cnn_;
  nn::LSTM lstm_;
  nn::AttentionPool attn_;
  nn::Linear head_;
};

// ---- vit_gru_bhat ----------------------------------------------------------

class VitGruBhat final : public Model {
 public:
  explicit VitGruBhat(ModelSpec spec) : Model(std::move(spec)) {
    double s = spec_.hyper_or("backbone_scale", 1.0);
    heads_ = static_cast<long>(spec_.hyper_or("vit_heads", 4));
    long d = scaled_width(static_cast<long>(spec_.hyper_or("vit_dim", 128)), s);
    embed_dim_ = std::max(heads_, (d / heads_) * heads_);  // keep divisible by heads
    patch_ = 20;
    tokens_ = (100 / patch_) * (100 / patch_);  // 25 tokens per frame
    long layers = static_cast<long>(spec_.hyper_or("vit_layers", 6));
    patch_embed_ = nn::Linear(params_, "backbone.patch_embed", 3 * patch_ * patch_, embed_dim_);
    pos_embed_ = params_.param_normal("backbone.pos_embed", {tokens_, embed_dim_}, 0.02);
    for (long l = 0; l < layers; ++l)
      blocks_.emplace_back(params_, "backbone.block" + std::to_string(l), embed_dim_, heads_,
                           4 * embed_dim_, 0.1);
    final_ln_ = nn::LayerNorm(params_, "backbone.ln", embed_dim_);
    long hidden = static_cast<long>(spec_.hyper_or("gru_hidden", 256));
    gru_ = nn::GRU(params_, "temporal.gru", embed_dim_, hidden, 1, false);
    head_ = nn::Linear(params_, "head", hidden, spec_.num_classes);
  }
  long frame_feature_dim() const override { return embed_dim_; }
  long tokens_per_frame() const { return tokens_; }

 protected:
  Var forward_impl(Var batch, const Ctx& ctx) override {
    long B = batch.value().dim(0), T = batch.value().dim(1);
    Var x = ag::image_to_patches(fold_frames(batch), patch_);  // [B*T, 25, 3*ps*ps]
    x = ag::add_broadcast_dim0(patch_embed_.forward(x), pos_embed_);
    for (const auto& b : blocks_) x = b.forward(x, ctx);
    Var frame_feats = ag::mean_dim1(final_ln_.forward(x));  // [B*T, D]
    Var out = gru_.forward(unfold_frames(frame_feats, B, T));
    return head_.forward(gru_.last_hidden(out));
  }

 private:
  nn::Linear patch_embed_;
  Var pos_embed_;
  std::vector<nn::TransformerBlock> blocks_;
  nn::LayerNorm final_ln_;
  nn::GRU gru_;
  nn::Linear head_;
  long embed_dim_ = 0, heads_ = 0, patch_ = 0, tokens_ = 0;
};

// ---- sen custom / dilated --------------------------------------------------

class CnnGruSen final : public Model {
 public:
  CnnGruSen(ModelSpec spec, bool dilated) : Model(std::move(spec)) {
    double s = spec_.hyper_or("backbone_scale", 1.0);
    const long ch[5] = {scaled_width(32, s), scaled_width(64, s), scaled_width(128, s),
                        scaled_width(256, s), scaled_width(256, s)};
    const long dil[5] = {1, 2, 4, 2, 1};
    long cin = 3;
    for (int i = 0; i < 5; ++i) {
      blocks_[i] = ConvBlock(params_, "backbone.conv" + std::to_string(i + 1), cin, ch[i], 2,
                             0.0, dilated ? dil[i] : 1);
      cin = ch[i];
    }
    feat_dim_ = ch[4];
    long hidden = static_cast<long>(spec_.hyper_or("gru_hidden", 256));
    gru_ = nn::GRU(params_, "temporal.gru", feat_dim_, hidden, 1, false);
    head_ = nn::Linear(params_, "head", hidden, spec_.num_classes);
  }
  long frame_feature_dim() const override { return feat_dim_; }

 protected:
  Var forward_impl(Var batch, const Ctx& ctx) override {
    long B = batch.value().dim(0), T = batch.value().dim(1);
    Var x = fold_frames(batch);
    for (const auto& b : blocks_) x = b.forward(x, ctx);
    Var out = gru_.forward(unfold_frames(ag::global_avg_pool(x), B, T));
    return head_.forward(gru_.last_hidden(out));
  }

 private:
  ConvBlock blocks_[5];
  nn::GRU gru_;
  nn::Linear head_;
  long feat_dim_ = 0;
};

// ---- vgg16 family ----------------------------------------------------------

class Vgg16Gru final : public Model {
 public:
  Vgg16Gru(ModelSpec spec, int trainable_final_layers) : Model(std::move(spec)) {
    double s = spec_.hyper_or("backbone_scale", 1.0);
    static const long cfg[13] = {64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512};
    static const bool pool_after[13] = {false, true,  false, true,  false, false, true,
                                        false, false, true,  false, false, true};
    long cin = 3;
    for (int i = 0; i < 13; ++i) {
      long cout = scaled_width(cfg[i], s);
      convs_[i] = nn::Conv2d(params_, "backbone.conv" + std::to_string(i + 1), cin, cout, 3, 1,
                             1);
      cin = cout;
    }
    std::copy(std::begin(pool_after), std::end(pool_after), pool_after_);
    feat_dim_ = cin;
    long hidden = static_cast<long>(spec_.hyper_or("gru_hidden", 256));
    gru_ = nn::GRU(params_, "temporal.gru", feat_dim_, hidden, 1, false);
    head_ = nn::Linear(params_, "head", hidden, spec_.num_classes);

    // freeze the backbone, then re-enable the last k weight-bearing layers
    params_.set_trainable("backbone.", false);
    for (int i = 13 - trainable_final_layers; i < 13; ++i)
      params_.set_trainable("backbone.conv" + std::to_string(i + 1) + ".", true);
  }
  long frame_feature_dim() const override { return feat_dim_; }

 protected:
  Var forward_impl(Var batch, const Ctx& ctx) override {
    (void)ctx;
    long B = batch.value().dim(0), T = batch.value().dim(1);
    Var x = fold_frames(batch);
    for (int i = 0; i < 13; ++i) {
      x = ag::relu(convs_[i].forward(x));
      if (pool_after_[i]) x = ag::maxpool2d(x, 2, 2);
    }
    Var out = gru_.forward(unfold_frames(ag::global_avg_pool(x), B, T));
    return head_.forward(gru_.last_hidden(out));
  }

 private:
  nn::Conv2d convs_[13];
  bool pool_after_[13] = {};
  nn::GRU gru_;
  nn::Linear head_;
  long feat_dim_ = 0;
};

// ---- effnet_gru_proposed ---------------------------------------------------

struct MbConv {
  bool has_expand = false, has_skip = false;
  nn::Conv2d expand, depthwise, se_reduce, se_expand, project;
  nn::BatchNorm2d bn_expand, bn_dw, bn_project;
  MbConv() = default;
  MbConv(nn::ParamStore& ps, const std::string& prefix, long cin, long cout, long expand_ratio,
         long stride, long kernel) {
    long mid = cin * expand_ratio;
    has_expand = expand_ratio != 1;
    has_skip = stride == 1 && cin == cout;
    if (has_expand) {
      expand = nn::Conv2d(ps, prefix + ".expand", cin, mid, 1, 1, 0, 1, 1, false);
      bn_expand = nn::BatchNorm2d(ps, prefix + ".bn_expand", mid);
    }
    depthwise = nn::Conv2d(ps, prefix + ".dw", mid, mid, kernel, stride, kernel / 2, 1, mid,
                           false);
    bn_dw = nn::BatchNorm2d(ps, prefix + ".bn_dw", mid);
    long se_dim = std::max(1L, cin / 4);  // squeeze-excite sized from block input
    se_reduce = nn::Conv2d(ps, prefix + ".se_reduce", mid, se_dim, 1, 1, 0);
    se_expand = nn::Conv2d(ps, prefix + ".se_expand", se_dim, mid, 1, 1, 0);
    project = nn::Conv2d(ps, prefix + ".project", mid, cout, 1, 1, 0, 1, 1, false);
    bn_project = nn::BatchNorm2d(ps, prefix + ".bn_project", cout);
  }
  Var forward(Var x, const Ctx& ctx) const {
    Var h = x;
    if (has_expand) h = ag::silu(bn_expand.forward(expand.forward(h), ctx));
    h = ag::silu(bn_dw.forward(depthwise.forward(h), ctx));
    // squeeze-excite
    long mid = h.value().dim(1);
    Var pooled = ag::reshape(ag::global_avg_pool(h), {h.value().dim(0), mid, 1L, 1L});
    Var se = ag::sigmoid(se_expand.forward(ag::silu(se_reduce.forward(pooled))));
    h = ag::channel_scale(h, ag::reshape(se, {h.value().dim(0), mid}));
    h = bn_project.forward(project.forward(h), ctx);
    if (has_skip) h = ag::add(h, x);
    return h;
  }
};

class EffnetGruProposed final : public Model {
 public:
  explicit EffnetGruProposed(ModelSpec spec) : Model(std::move(spec)) {
    double s = spec_.hyper_or("backbone_scale", 1.0);
    long cin = scaled_width(32, s);
    stem_ = nn::Conv2d(params_, "backbone.stem", 3, cin, 3, 2, 1, 1, 1, false);
    bn_stem_ = nn::BatchNorm2d(params_, "backbone.bn_stem", cin);
    // (expand, channels, repeats, stride, kernel) per stage, the B0 layout
    const long cfg[7][5] = {{1, 16, 1, 1, 3}, {6, 24, 2, 2, 3},  {6, 40, 2, 2, 5},
                            {6, 80, 3, 2, 3}, {6, 112, 3, 1, 5}, {6, 192, 4, 2, 5},
                            {6, 320, 1, 1, 3}};
    int bi = 0;
    for (const auto& st : cfg) {
      long cout = scaled_width(st[1], s);
      for (long r = 0; r < st[2]; ++r) {
        blocks_.emplace_back(params_, "backbone.block" + std::to_string(bi++), cin, cout, st[0],
                             r == 0 ? st[3] : 1, st[4]);
        cin = cout;
      }
    }
    feat_dim_ = scaled_width(1280, s);
    head_conv_ = nn::Conv2d(params_, "backbone.head_conv", cin, feat_dim_, 1, 1, 0, 1, 1, false);
    bn_head_ = nn::BatchNorm2d(params_, "backbone.bn_head", feat_dim_);

    long hidden = static_cast<long>(spec_.hyper_or("gru_hidden", 256));
    long layers = static_cast<long>(spec_.hyper_or("gru_layers", 2));
    dropout_ = spec_.hyper_or("dropout", 0.3);
    gru_ = nn::GRU(params_, "temporal.gru", feat_dim_, hidden, layers, true);
    attn_ = nn::AttentionPool(params_, "attention", 2 * hidden,
                              static_cast<long>(spec_.hyper_or("attn_dim", 128)));
    head_ = nn::Linear(params_, "head", 2 * hidden, spec_.num_classes);
  }
  long frame_feature_dim() const override { return feat_dim_; }

 protected:
  Var forward_impl(Var batch, const Ctx& ctx) override {
    long B = batch.value().dim(0), T = batch.value().dim(1);
    Var x = ag::silu(bn_stem_.forward(stem_.forward(fold_frames(batch)), ctx));
    for (const auto& b : blocks_) x = b.forward(x, ctx);
    x = ag::silu(bn_head_.forward(head_conv_.forward(x), ctx));
    Var feats = unfold_frames(ag::global_avg_pool(x), B, T);
    auto [context, weights] = attn_.forward(gru_.forward(feats));
    last_attention_ = weights.value();
    if (ctx.rng) context = ag::dropout(context, dropout_, *ctx.rng, ctx.training);
    return head_.forward(context);
  }

 private:
  nn::Conv2d stem_, head_conv_;
  nn::BatchNorm2d bn_stem_, bn_head_;
  std::vector<MbConv> blocks_;
  nn::GRU gru_;
  nn::AttentionPool attn_;
  nn::Linear head_;
  long feat_dim_ = 0;
  double dropout_ = 0.3;
};

}  // namespace

// ---- factory ---------------------------------------------------------------

std::unique_ptr<Model> build_model(const ModelSpec& spec) {
  const std::string& a = spec.arch_id;
  required_pipeline(a);  // validates arch_id
  if (a == "lrcn_kumar") return std::make_unique<LrcnKumar>(spec);
  if (a == "cnn_rnn_bhat") return std::make_unique<CnnRnnBhat>(spec);
  if (a == "attention_bhat") return std::make_unique<AttentionBhat>(spec);
  if (a == "vit_gru_bhat") return std::make_unique<VitGruBhat>(spec);
  if (a == "cnn_gru_sen") return std::make_unique<CnnGruSen>(spec, false);
  if (a == "dilated_cnn_gru_sen") return std::make_unique<CnnGruSen>(spec, true);
  if (a == "vgg16_gru_frozen") return std::make_unique<Vgg16Gru>(spec, 0);
  if (a == "vgg16_gru_final4") return std::make_unique<Vgg16Gru>(spec, 4);
  if (a == "vgg16_gru_final8") return std::make_unique<Vgg16Gru>(spec, 8);
  if (a == "effnet_gru_proposed") return std::make_unique<EffnetGruProposed>(spec);
  throw UnknownArchError("unknown arch_id: " + a);
}

// ---- checkpoint ------------------------------------------------------------

void Model::save_checkpoint(const std::string& path) const {
  json params = json::array();
  for (const auto& [name, v] : params_.params())
    params.push_back({{"name", name}, {"shape", v.value().shape()}});
  json buffers = json::array();
  for (const auto& [name, t] : params_.buffers())
    buffers.push_back({{"name", name}, {"shape", t.shape()}});
  json header = {{"spec", json::parse(spec_.to_json())},
                 {"params", params},
                 {"buffers", buffers}};
  std::string htext = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  f.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  std::uint64_t hlen = htext.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const auto& [name, v] : params_.params())
    f.write(reinterpret_cast<const char*>(v.value().data()),
            static_cast<std::streamsize>(v.value().numel() * sizeof(float)));
  for (const auto& [name, t] : params_.buffers())
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
  if (!f) throw IoError("failed writing checkpoint: " + path);
}

std::unique_ptr<Model> Model::load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint: " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw SpecError("not a checkpoint file (bad magic): " + path);
  std::uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string htext(hlen, '\0');
  f.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw SpecError("truncated checkpoint header: " + path);
  json header = json::parse(htext);

  auto model = build_model(ModelSpec::from_json(header.at("spec").dump()));
  auto read_into = [&](float* dst, long numel, const std::string& name) {
    f.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(numel * sizeof(float)));
    if (!f) throw SpecError("truncated checkpoint data at " + name + ": " + path);
  };
  std::size_t pi = 0;
  for (const auto& e : header.at("params")) {
    if (pi >= model->params_.params().size())
      throw SpecError("checkpoint has extra parameters: " + path);
    auto& [name, v] = model->params_.params()[pi++];
    if (e.at("name").get<std::string>() != name ||
        e.at("shape").get<std::vector<long>>() != v.value().shape())
      throw SpecError("checkpoint/spec mismatch at parameter " + name);
    read_into(v.value().data(), v.value().numel(), name);
  }
  if (pi != model->params_.params().size())
    throw SpecError("checkpoint is missing parameters: " + path);
  for (const auto& e : header.at("buffers")) {
    std::string name = e.at("name").get<std::string>();
    auto it = model->params_.buffers().find(name);
    if (it == model->params_.buffers().end() ||
        e.at("shape").get<std::vector<long>>() != it->second.shape())
      throw SpecError("checkpoint/spec mismatch at buffer " + name);
    read_into(it->second.data(), it->second.numel(), name);
  }
  return model;
}

}  // namespace cricbench
