// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cricbench/autograd.hpp"
#include "cricbench/rng.hpp"

namespace cricbench::nn {

using ag::Var;

struct Ctx {
  bool training = false;
  Pcg32* rng = nullptr;  // dropout / stochastic layers
};

// Owns every parameter and buffer of a model, keyed by dotted names.
// Parameters keep insertion order so checkpoints and optimizer state are stable.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed) : rng_(seed) {}

  Var param_uniform(const std::string& name, std::vector<long> shape, double bound) {
    Tensor t(shape);
    for (long i = 0; i < t.numel(); ++i)
      t[i] = static_cast<float>(rng_.uniform(-bound, bound));
    return add_param(name, std::move(t));
  }

  // PyTorch-style default for linear/conv: U(-1/sqrt(fan_in), 1/sqrt(fan_in))
  Var param_fan_in(const std::string& name, std::vector<long> shape, long fan_in) {
    return param_uniform(name, std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)));
  }

  Var param_normal(const std::string& name, std::vector<long> shape, double stddev) {
    Tensor t(shape);
    for (long i = 0; i < t.numel(); ++i)
      t[i] = static_cast<float>(rng_.normal() * stddev);
    return add_param(name, std::move(t));
  }

  Var param_const(const std::string& name, std::vector<long> shape, float v) {
    return add_param(name, Tensor::full(std::move(shape), v));
  }

  Tensor& buffer(const std::string& name, std::vector<long> shape, float fill) {
    auto [it, inserted] = buffers_.emplace(name, Tensor::full(std::move(shape), fill));
    if (!inserted) throw Error("duplicate buffer name: " + name);
    return it->second;
  }

  std::vector<std::pair<std::string, Var>>& params() { return params_; }
  const std::vector<std::pair<std::string, Var>>& params() const { return params_; }
  std::map<std::string, Tensor>& buffers() { return buffers_; }
  const std::map<std::string, Tensor>& buffers() const { return buffers_; }

  Var find(const std::string& name) const {
    for (auto& [n, v] : params_)
      if (n == name) return v;
    throw Error("no such parameter: " + name);
  }

  // freeze every parameter whose name starts with prefix
  void set_trainable(const std::string& prefix, bool trainable) {
    for (auto& [n, v] : params_)
      if (n.rfind(prefix, 0) == 0) v.set_requires_grad(trainable);
  }

  std::pair<long, long> count() const {  // (total, trainable)
    long total = 0, trainable = 0;
    for (auto& [n, v] : params_) {
      total += v.value().numel();
      if (v.requires_grad()) trainable += v.value().numel();
    }
    return {total, trainable};
  }

  void zero_grad() {
    for (auto& [n, v] : params_) v.zero_grad();
  }

 private:
  Var add_param(const std::string& name, Tensor t) {
    for (auto& [n, v] : params_)
      if (n == name) throw Error("duplicate parameter name: " + name);
    Var v(std::move(t), true);
    params_.emplace_back(name, v);
    return v;
  }

  std::vector<std::pair<std::string, Var>> params_;
  std::map<std::string, Tensor> buffers_;
  Pcg32 rng_;
};

// ---- layers ----------------------------------------------------------------

struct Linear {
  Var W, b;  // W: [in, out]
  long in = 0, out = 0;
  Linear() = default;
  Linear(ParamStore& ps, const std::string& prefix, long in_dim, long out_dim)
      : in(in_dim), out(out_dim) {
    W = ps.param_fan_in(prefix + ".weight", {in_dim, out_dim}, in_dim);
    b = ps.param_fan_in(prefix + ".bias", {out_dim}, in_dim);
  }
  // applies over the last dim of x
  Var forward(Var x) const {
    auto shape = x.shape();
    long rows = x.value().numel() / shape.back();
    Var y = ag::add_bias(ag::matmul(ag::reshape(x, {rows, shape.back()}), W), b);
    auto out_shape = shape;
    out_shape.back() = out;
    return ag::reshape(y, out_shape);
  }
};

struct Conv2d {
  Var W, b;
  long stride = 1, pad = 0, dilation = 1, groups = 1;
  Conv2d() = default;
  Conv2d(ParamStore& ps, const std::string& prefix, long cin, long cout, long k, long stride_,
         long pad_, long dilation_ = 1, long groups_ = 1, bool bias = true)
      : stride(stride_), pad(pad_), dilation(dilation_), groups(groups_) {
    long fan_in = (cin / groups_) * k * k;
    W = ps.param_fan_in(prefix + ".weight", {cout, cin / groups_, k, k}, fan_in);
    if (bias) b = ps.param_fan_in(prefix + ".bias", {cout}, fan_in);
  }
  Var forward(Var x) const { return ag::conv2d(x, W, b, stride, pad, dilation, groups); }
};

struct BatchNorm2d {
  Var gamma, beta;
  Tensor* running_mean = nullptr;
  Tensor* running_var = nullptr;
  BatchNorm2d() = default;
  BatchNorm2d(ParamStore& ps, const std::string& prefix, long c) {
    gamma = ps.param_const(prefix + ".weight", {c}, 1.0f);
    beta = ps.param_const(prefix + ".bias", {c}, 0.0f);
    running_mean = &ps.buffer(prefix + ".running_mean", {c}, 0.0f);
    running_var = &ps.buffer(prefix + ".running_var", {c}, 1.0f);
  }
  Var forward(Var x, const Ctx& ctx) const {
    return ag::batch_norm2d(x, gamma, beta, *running_mean, *running_var, ctx.training);
  }
};

struct LayerNorm {
  Var gamma, beta;
  LayerNorm() = default;
  LayerNorm(ParamStore& ps, const std::string& prefix, long d) {
    gamma = ps.param_const(prefix + ".weight", {d}, 1.0f);
    beta = ps.param_const(prefix + ".bias", {d}, 0.0f);
  }
  Var forward(Var x) const { return ag::layer_norm(x, gamma, beta); }
};

// Gated recurrent unit, gate layout [r|z|n] (PyTorch convention).
struct GRUCellParams {
  Var W_ih, W_hh, b_ih, b_hh;  // W_ih: [D, 3H], W_hh: [H, 3H]
  long hidden = 0;
  GRUCellParams() = default;
  GRUCellParams(ParamStore& ps, const std::string& prefix, long in_dim, long hidden_dim)
      : hidden(hidden_dim) {
    double k = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    W_ih = ps.param_uniform(prefix + ".weight_ih", {in_dim, 3 * hidden_dim}, k);
    W_hh = ps.param_uniform(prefix + ".weight_hh", {hidden_dim, 3 * hidden_dim}, k);
    b_ih = ps.param_uniform(prefix + ".bias_ih", {3 * hidden_dim}, k);
    b_hh = ps.param_uniform(prefix + ".bias_hh", {3 * hidden_dim}, k);
  }
  Var step(Var x, Var h) const {
    long H = hidden;
    Var gi = ag::add_bias(ag::matmul(x, W_ih), b_ih);
    Var gh = ag::add_bias(ag::matmul(h, W_hh), b_hh);
    Var r = ag::sigmoid(ag::add(ag::slice_lastdim(gi, 0, H), ag::slice_lastdim(gh, 0, H)));
    Var z = ag::sigmoid(ag::add(ag::slice_lastdim(gi, H, 2 * H), ag::slice_lastdim(gh, H, 2 * H)));
    Var n = ag::tanh_(ag::add(ag::slice_lastdim(gi, 2 * H, 3 * H),
                              ag::mul(r, ag::slice_lastdim(gh, 2 * H, 3 * H))));
    // h' = (1-z)*n + z*h
    return ag::add(ag::mul(ag::add_scalar(ag::scale(z, -1.0f), 1.0f), n), ag::mul(z, h));
  }
};

// LSTM, gate layout [i|f|g|o].
struct LSTMCellParams {
  Var W_ih, W_hh, b_ih, b_hh;  // W_ih: [D, 4H]
  long hidden = 0;
  LSTMCellParams() = default;
  LSTMCellParams(ParamStore& ps, const std::string& prefix, long in_dim, long hidden_dim)
      : hidden(hidden_dim) {
    double k = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    W_ih = ps.param_uniform(prefix + ".weight_ih", {in_dim, 4 * hidden_dim}, k);
    W_hh = ps.param_uniform(prefix + ".weight_hh", {hidden_dim, 4 * hidden_dim}, k);
    b_ih = ps.param_uniform(prefix + ".bias_ih", {4 * hidden_dim}, k);
    b_hh = ps.param_uniform(prefix + ".bias_hh", {4 * hidden_dim}, k);
  }
  std::pair<Var, Var> step(Var x, Var h, Var c) const {
    long H = hidden;
    Var g = ag::add(ag::add_bias(ag::matmul(x, W_ih), b_ih),
                    ag::add_bias(ag::matmul(h, W_hh), b_hh));
    Var i = ag::sigmoid(ag::slice_lastdim(g, 0, H));
    Var f = ag::sigmoid(ag::slice_lastdim(g, H, 2 * H));
    Var gg = ag::tanh_(ag::slice_lastdim(g, 2 * H, 3 * H));
    Var o = ag::sigmoid(ag::slice_lastdim(g, 3 * H, 4 * H));
    Var c2 = ag::add(ag::mul(f, c), ag::mul(i, gg));
    Var h2 = ag::mul(o, ag::tanh_(c2));
    return {h2, c2};
  }
};

namespace detail {

template <typename Cell>
std::vector<Var> run_direction(const Cell& cell, const std::vector<Var>& steps, bool reverse);

template <>
inline std::vector<Var> run_direction<GRUCellParams>(const GRUCellParams& cell,
                                                     const std::vector<Var>& steps,
                                                     bool reverse) {
  long B = steps[0].value().dim(0);
  Var h(Tensor({B, cell.hidden}));
  std::vector<Var> out(steps.size());
  long T = static_cast<long>(steps.size());
  for (long k = 0; k < T; ++k) {
    long t = reverse ? T - 1 - k : k;
    h = cell.step(steps[t], h);
    out[t] = h;
  }
  return out;
}

template <>
inline std::vector<Var> run_direction<LSTMCellParams>(const LSTMCellParams& cell,
                                                      const std::vector<Var>& steps,
                                                      bool reverse) {
  long B = steps[0].value().dim(0);
  Var h(Tensor({B, cell.hidden})), c(Tensor({B, cell.hidden}));
  std::vector<Var> out(steps.size());
  long T = static_cast<long>(steps.size());
  for (long k = 0; k < T; ++k) {
    long t = reverse ? T - 1 - k : k;
    std::tie(h, c) = cell.step(steps[t], h, c);
    out[t] = h;
  }
  return out;
}

inline std::vector<Var> split_steps(Var x) {  // [B,T,D] -> T × [B,D]
  long T = x.value().dim(1);
  std::vector<Var> steps(static_cast<std::size_t>(T));
  for (long t = 0; t < T; ++t) steps[static_cast<std::size_t>(t)] = ag::select_time(x, t);
  return steps;
}

}  // namespace detail

// Multi-layer, optionally bidirectional recurrent stack over [B,T,D].
// Returns per-step outputs [B,T,H*dirs].
template <typename Cell>
struct Recurrent {
  std::vector<Cell> fwd, bwd;
  long hidden = 0;
  bool bidirectional = false;
  Recurrent() = default;
  Recurrent(ParamStore& ps, const std::string& prefix, long in_dim, long hidden_dim,
            long num_layers, bool bidi)
      : hidden(hidden_dim), bidirectional(bidi) {
    long d = in_dim;
    for (long l = 0; l < num_layers; ++l) {
      fwd.emplace_back(ps, prefix + ".l" + std::to_string(l) + ".fwd", d, hidden_dim);
      if (bidi) bwd.emplace_back(ps, prefix + ".l" + std::to_string(l) + ".bwd", d, hidden_dim);
      d = bidi ? 2 * hidden_dim : hidden_dim;
    }
  }
  Var forward(Var x) const {
    auto steps = detail::split_steps(x);
    for (std::size_t l = 0; l < fwd.size(); ++l) {
      auto f = detail::run_direction(fwd[l], steps, false);
      if (bidirectional) {
        auto b = detail::run_direction(bwd[l], steps, true);
        for (std::size_t t = 0; t < steps.size(); ++t)
          steps[t] = ag::concat_lastdim(f[t], b[t]);
      } else {
        steps = std::move(f);
      }
    }
    return ag::stack_time(steps);
  }
  // hidden state of the last step (forward dir) concatenated with the first
  // step (backward dir) when bidirectional
  Var last_hidden(Var outputs) const {
    long T = outputs.value().dim(1);
    if (!bidirectional) return ag::select_time(outputs, T - 1);
    Var last = ag::select_time(outputs, T - 1);
    Var first = ag::select_time(outputs, 0);
    return ag::concat_lastdim(ag::slice_lastdim(last, 0, hidden),
                              ag::slice_lastdim(first, hidden, 2 * hidden));
  }
};

using GRU = Recurrent<GRUCellParams>;
using LSTM = Recurrent<LSTMCellParams>;

// Additive (Bahdanau-style) attention over frame features.
// feats [B,T,D]; score_t = v . tanh(W h_t + b); weights = softmax_t(score);
// context = sum_t weights_t * h_t.  Returns (context [B,D], weights [B,T]).
template <typename T>
std::pair<ag::VarT<T>, ag::VarT<T>> attention_pool(ag::VarT<T> feats, ag::VarT<T> W,
                                                   ag::VarT<T> b, ag::VarT<T> v) {
  long B = feats.value().dim(0), Tn = feats.value().dim(1), D = feats.value().dim(2);
  long A = W.value().dim(1);
  auto h = ag::reshape(feats, {B * Tn, D});
  auto e = ag::tanh_(ag::add_bias(ag::matmul(h, W), b));        // [B*T, A]
  auto score = ag::reshape(ag::matmul(e, ag::reshape(v, {A, 1L})), {B, Tn});
  auto weights = ag::softmax_lastdim(score);                    // [B, T]
  auto ctx = ag::bmm(ag::reshape(weights, {B, 1L, Tn}), feats);  // [B,1,D]
  return {ag::reshape(ctx, {B, D}), weights};
}

struct AttentionPool {
  Var W, b, v;
  AttentionPool() = default;
  AttentionPool(ParamStore& ps, const std::string& prefix, long d, long attn_dim) {
    W = ps.param_fan_in(prefix + ".W", {d, attn_dim}, d);
    b = ps.param_fan_in(prefix + ".b", {attn_dim}, d);
    v = ps.param_fan_in(prefix + ".v", {attn_dim}, attn_dim);
  }
  std::pair<Var, Var> forward(Var feats) const { return attention_pool<float>(feats, W, b, v); }
};

// Pre-norm transformer encoder block with multi-head self-attention.
struct TransformerBlock {
  LayerNorm ln1, ln2;
  Linear q, k, v, proj, fc1, fc2;
  long heads = 0, dim = 0;
  double dropout_p = 0.0;
  TransformerBlock() = default;
  TransformerBlock(ParamStore& ps, const std::string& prefix, long d, long num_heads,
                   long mlp_dim, double dropout)
      : ln1(ps, prefix + ".ln1", d),
        ln2(ps, prefix + ".ln2", d),
        q(ps, prefix + ".q", d, d),
        k(ps, prefix + ".k", d, d),
        v(ps, prefix + ".v", d, d),
        proj(ps, prefix + ".proj", d, d),
        fc1(ps, prefix + ".fc1", d, mlp_dim),
        fc2(ps, prefix + ".fc2", mlp_dim, d),
        heads(num_heads),
        dim(d),
        dropout_p(dropout) {}
  Var forward(Var x, const Ctx& ctx) const {  // x: [N,T,D]
    Var h = ln1.forward(x);
    Var qh = ag::split_heads(q.forward(h), heads);
    Var kh = ag::split_heads(k.forward(h), heads);
    Var vh = ag::split_heads(v.forward(h), heads);
    float sc = 1.0f / std::sqrt(static_cast<float>(dim / heads));
    Var attn = ag::softmax_lastdim(ag::scale(ag::bmm(qh, ag::transpose_last2(kh)), sc));
    Var ctxv = ag::merge_heads(ag::bmm(attn, vh), heads);
    Var y = ag::add(x, proj.forward(ctxv));
    Var m = fc2.forward(ag::relu(fc1.forward(ln2.forward(y))));
    if (ctx.rng) m = ag::dropout(m, dropout_p, *ctx.rng, ctx.training);
    return ag::add(y, m);
  }
};

}  // namespace cricbench::nn
