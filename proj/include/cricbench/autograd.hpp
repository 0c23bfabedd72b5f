// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode autodiff over dense tensors. Templated on the scalar type:
// models run in float, gradient checks instantiate the same ops in double.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cricbench/rng.hpp"
#include "cricbench/tensor.hpp"

namespace cricbench::ag {

inline thread_local bool g_grad_enabled = true;

inline bool grad_enabled() { return g_grad_enabled; }

struct NoGrad {
  bool prev;
  NoGrad() : prev(g_grad_enabled) { g_grad_enabled = false; }
  ~NoGrad() { g_grad_enabled = prev; }
};

template <typename T>
struct NodeT {
  TensorT<T> value;
  TensorT<T> grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<NodeT>> parents;
  std::function<void(NodeT&)> backward_op;  // reads this->grad, accumulates into parents

  void ensure_grad() {
    if (grad.numel() != value.numel()) grad = TensorT<T>::zeros(value.shape());
  }
};

template <typename T>
class VarT {
 public:
  VarT() = default;
  explicit VarT(TensorT<T> t, bool requires_grad = false)
      : node_(std::make_shared<NodeT<T>>()) {
    node_->value = std::move(t);
    node_->requires_grad = requires_grad;
  }

  bool defined() const { return node_ != nullptr; }
  const TensorT<T>& value() const { return node_->value; }
  TensorT<T>& value() { return node_->value; }
  TensorT<T>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }
  void zero_grad() {
    if (node_) node_->grad = TensorT<T>();
  }
  const std::vector<long>& shape() const { return node_->value.shape(); }
  std::shared_ptr<NodeT<T>> node() const { return node_; }

 private:
  std::shared_ptr<NodeT<T>> node_;
};

using Var = VarT<float>;
using VarD = VarT<double>;

namespace detail {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

template <typename T>
VarT<T> make_result(TensorT<T> value, std::vector<VarT<T>> inputs,
                    std::function<void(NodeT<T>&)> backward_op) {
  bool any_grad = false;
  for (auto& v : inputs) any_grad = any_grad || v.requires_grad();
  VarT<T> out(std::move(value));
  if (g_grad_enabled && any_grad) {
    out.set_requires_grad(true);
    auto n = out.node();
    n->parents.reserve(inputs.size());
    for (auto& v : inputs) n->parents.push_back(v.node());
    n->backward_op = std::move(backward_op);
  }
  return out;
}

template <typename T>
void accumulate(NodeT<T>& parent, const TensorT<T>& g) {
  if (!parent.requires_grad && parent.backward_op == nullptr && parent.parents.empty())
    return;  // constant leaf
  parent.ensure_grad();
  T* dst = parent.grad.data();
  const T* src = g.data();
  for (long i = 0; i < g.numel(); ++i) dst[i] += src[i];
}

}  // namespace detail

// ---- elementwise -----------------------------------------------------------

template <typename T>
VarT<T> add(VarT<T> a, VarT<T> b) {
  if (!a.value().same_shape(b.value())) throw ShapeError("add: shape mismatch");
  TensorT<T> out(a.shape());
  for (long i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  return detail::make_result<T>(std::move(out), {a, b}, [](NodeT<T>& n) {
    detail::accumulate(*n.parents[0], n.grad);
    detail::accumulate(*n.parents[1], n.grad);
  });
}

template <typename T>
VarT<T> sub(VarT<T> a, VarT<T> b) {
  if (!a.value().same_shape(b.value())) throw ShapeError("sub: shape mismatch");
  TensorT<T> out(a.shape());
  for (long i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
  return detail::make_result<T>(std::move(out), {a, b}, [](NodeT<T>& n) {
    detail::accumulate(*n.parents[0], n.grad);
    TensorT<T> neg(n.grad.shape());
    for (long i = 0; i < neg.numel(); ++i) neg[i] = -n.grad[i];
    detail::accumulate(*n.parents[1], neg);
  });
}

template <typename T>
VarT<T> mul(VarT<T> a, VarT<T> b) {
  if (!a.value().same_shape(b.value())) throw ShapeError("mul: shape mismatch");
  TensorT<T> out(a.shape());
  for (long i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  return detail::make_result<T>(std::move(out), {a, b}, [](NodeT<T>& n) {
    const auto& av = n.parents[0]->value;
    const auto& bv = n.parents[1]->value;
    TensorT<T> ga(n.grad.shape()), gb(n.grad.shape());
    for (long i = 0; i < n.grad.numel(); ++i) {
      ga[i] = n.grad[i] * bv[i];
      gb[i] = n.grad[i] * av[i];
    }
    detail::accumulate(*n.parents[0], ga);
    detail::accumulate(*n.parents[1], gb);
  });
}

template <typename T>
VarT<T> scale(VarT<T> a, T s) {
  TensorT<T> out(a.shape());
  for (long i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * s;
  return detail::make_result<T>(std::move(out), {a}, [s](NodeT<T>& n) {
    TensorT<T> g(n.grad.shape());
    for (long i = 0; i < g.numel(); ++i) g[i] = n.grad[i] * s;
    detail::accumulate(*n.parents[0], g);
  });
}

template <typename T>
VarT<T> add_scalar(VarT<T> a, T s) {
  TensorT<T> out(a.shape());
  for (long i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + s;
  return detail::make_result<T>(std::move(out), {a}, [](NodeT<T>& n) {
    detail::accumulate(*n.parents[0], n.grad);
  });
}

template <typename T, typename FwdFn, typename DerivFn>
VarT<T> unary_op(VarT<T> a, FwdFn f, DerivFn dfdy) {
  // dfdy receives (x, y) and returns dy/dx
  TensorT<T> out(a.shape());
  for (long i = 0; i < out.numel(); ++i) out[i] = f(a.value()[i]);
  TensorT<T> saved = out;
  return detail::make_result<T>(std::move(out), {a}, [dfdy, saved](NodeT<T>& n) {
    const auto& x = n.parents[0]->value;
    TensorT<T> g(n.grad.shape());
    for (long i = 0; i < g.numel(); ++i) g[i] = n.grad[i] * dfdy(x[i], saved[i]);
    detail::accumulate(*n.parents[0], g);
  });
}

template <typename T>
VarT<T> relu(VarT<T> a) {
  return unary_op<T>(
      a, [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
VarT<T> sigmoid(VarT<T> a) {
  return unary_op<T>(
      a, [](T x) { return T(1) / (T(1) + std::exp(-x)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
VarT<T> tanh_(VarT<T> a) {
  return unary_op<T>(
      a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
VarT<T> silu(VarT<T> a) {
  return unary_op<T>(
      a, [](T x) { return x / (T(1) + std::exp(-x)); },
      [](T x, T) {
        T s = T(1) / (T(1) + std::exp(-x));
        return s * (T(1) + x * (T(1) - s));
      });
}

// ---- shape ops -------------------------------------------------------------

template <typename T>
VarT<T> reshape(VarT<T> a, std::vector<long> shape) {
  TensorT<T> out = a.value().reshaped(std::move(shape));
  auto in_shape = a.shape();
  return detail::make_result<T>(std::move(out), {a}, [in_shape](NodeT<T>& n) {
    detail::accumulate(*n.parents[0], n.grad.reshaped(in_shape));
  });
}

// x: [B,T,D] -> [B,D], the t-th time step
template <typename T>
VarT<T> select_time(VarT<T> x, long t) {
  long B = x.value().dim(0), Tn = x.value().dim(1), D = x.value().dim(2);
  if (t < 0 || t >= Tn) throw ShapeError("select_time: index out of range");
  TensorT<T> out({B, D});
  for (long b = 0; b < B; ++b)
    std::copy_n(x.value().data() + (b * Tn + t) * D, D, out.data() + b * D);
  return detail::make_result<T>(std::move(out), {x}, [t, B, Tn, D](NodeT<T>& n) {
    TensorT<T> g({B, Tn, D});
    for (long b = 0; b < B; ++b)
      std::copy_n(n.grad.data() + b * D, D, g.data() + (b * Tn + t) * D);
    detail::accumulate(*n.parents[0], g);
  });
}

// T tensors of [B,D] -> [B,T,D]
template <typename T>
VarT<T> stack_time(const std::vector<VarT<T>>& xs) {
  long Tn = static_cast<long>(xs.size());
  long B = xs[0].value().dim(0), D = xs[0].value().dim(1);
  TensorT<T> out({B, Tn, D});
  for (long t = 0; t < Tn; ++t)
    for (long b = 0; b < B; ++b)
      std::copy_n(xs[t].value().data() + b * D, D, out.data() + (b * Tn + t) * D);
  return detail::make_result<T>(std::move(out), xs, [B, Tn, D](NodeT<T>& n) {
    for (long t = 0; t < Tn; ++t) {
      TensorT<T> g({B, D});
      for (long b = 0; b < B; ++b)
        std::copy_n(n.grad.data() + (b * Tn + t) * D, D, g.data() + b * D);
      detail::accumulate(*n.parents[t], g);
    }
  });
}

// slice along the last dim: [..., D] -> [..., end-start]
template <typename T>
VarT<T> slice_lastdim(VarT<T> x, long start, long end) {
  auto shape = x.shape();
  long D = shape.back();
  if (start < 0 || end > D || start >= end) throw ShapeError("slice_lastdim: bad range");
  long rows = x.value().numel() / D;
  long W = end - start;
  auto out_shape = shape;
  out_shape.back() = W;
  TensorT<T> out(out_shape);
  for (long r = 0; r < rows; ++r)
    std::copy_n(x.value().data() + r * D + start, W, out.data() + r * W);
  return detail::make_result<T>(std::move(out), {x}, [start, D, rows, W, shape](NodeT<T>& n) {
    TensorT<T> g(shape);
    for (long r = 0; r < rows; ++r)
      std::copy_n(n.grad.data() + r * W, W, g.data() + r * D + start);
    detail::accumulate(*n.parents[0], g);
  });
}

template <typename T>
VarT<T> concat_lastdim(VarT<T> a, VarT<T> b) {
  auto sa = a.shape(), sb = b.shape();
  if (sa.size() != sb.size()) throw ShapeError("concat_lastdim: rank mismatch");
  for (std::size_t i = 0; i + 1 < sa.size(); ++i)
    if (sa[i] != sb[i]) throw ShapeError("concat_lastdim: shape mismatch");
  long Da = sa.back(), Db = sb.back();
  long rows = a.value().numel() / Da;
  auto out_shape = sa;
  out_shape.back() = Da + Db;
  TensorT<T> out(out_shape);
  for (long r = 0; r < rows; ++r) {
    std::copy_n(a.value().data() + r * Da, Da, out.data() + r * (Da + Db));
    std::copy_n(b.value().data() + r * Db, Db, out.data() + r * (Da + Db) + Da);
  }
  return detail::make_result<T>(std::move(out), {a, b}, [rows, Da, Db, sa, sb](NodeT<T>& n) {
    TensorT<T> ga(sa), gb(sb);
    for (long r = 0; r < rows; ++r) {
      std::copy_n(n.grad.data() + r * (Da + Db), Da, ga.data() + r * Da);
      std::copy_n(n.grad.data() + r * (Da + Db) + Da, Db, gb.data() + r * Db);
    }
    detail::accumulate(*n.parents[0], ga);
    detail::accumulate(*n.parents[1], gb);
  });
}

// [.., A, B] -> [.., B, A]
template <typename T>
VarT<T> transpose_last2(VarT<T> x) {
  auto shape = x.shape();
  int nd = static_cast<int>(shape.size());
  long A = shape[nd - 2], B = shape[nd - 1];
  long batch = x.value().numel() / (A * B);
  auto out_shape = shape;
  std::swap(out_shape[nd - 2], out_shape[nd - 1]);
  TensorT<T> out(out_shape);
  for (long n = 0; n < batch; ++n)
    for (long i = 0; i < A; ++i)
      for (long j = 0; j < B; ++j)
        out[n * A * B + j * A + i] = x.value()[n * A * B + i * B + j];
  return detail::make_result<T>(std::move(out), {x}, [batch, A, B, shape](NodeT<T>& n) {
    TensorT<T> g(shape);
    for (long k = 0; k < batch; ++k)
      for (long i = 0; i < A; ++i)
        for (long j = 0; j < B; ++j)
          g[k * A * B + i * B + j] = n.grad[k * A * B + j * A + i];
    detail::accumulate(*n.parents[0], g);
  });
}

// [N,T,D] -> [N*h, T, D/h]
template <typename T>
VarT<T> split_heads(VarT<T> x, long h) {
  long N = x.value().dim(0), Tn = x.value().dim(1), D = x.value().dim(2);
  if (D % h != 0) throw ShapeError("split_heads: dim not divisible by heads");
  long dh = D / h;
  TensorT<T> out({N * h, Tn, dh});
  for (long n = 0; n < N; ++n)
    for (long t = 0; t < Tn; ++t)
      for (long k = 0; k < h; ++k)
        std::copy_n(x.value().data() + (n * Tn + t) * D + k * dh, dh,
                    out.data() + ((n * h + k) * Tn + t) * dh);
  return detail::make_result<T>(std::move(out), {x}, [N, Tn, D, h, dh](NodeT<T>& nd) {
    TensorT<T> g({N, Tn, D});
    for (long n = 0; n < N; ++n)
      for (long t = 0; t < Tn; ++t)
        for (long k = 0; k < h; ++k)
          std::copy_n(nd.grad.data() + ((n * h + k) * Tn + t) * dh, dh,
                      g.data() + (n * Tn + t) * D + k * dh);
    detail::accumulate(*nd.parents[0], g);
  });
}

// [N*h, T, dh] -> [N, T, h*dh]
template <typename T>
VarT<T> merge_heads(VarT<T> x, long h) {
  long Nh = x.value().dim(0), Tn = x.value().dim(1), dh = x.value().dim(2);
  long N = Nh / h, D = h * dh;
  TensorT<T> out({N, Tn, D});
  for (long n = 0; n < N; ++n)
    for (long t = 0; t < Tn; ++t)
      for (long k = 0; k < h; ++k)
        std::copy_n(x.value().data() + ((n * h + k) * Tn + t) * dh, dh,
                    out.data() + (n * Tn + t) * D + k * dh);
  return detail::make_result<T>(std::move(out), {x}, [N, Tn, D, h, dh](NodeT<T>& nd) {
    TensorT<T> g({N * h, Tn, dh});
    for (long n = 0; n < N; ++n)
      for (long t = 0; t < Tn; ++t)
        for (long k = 0; k < h; ++k)
          std::copy_n(nd.grad.data() + (n * Tn + t) * D + k * dh, dh,
                      g.data() + ((n * h + k) * Tn + t) * dh);
    detail::accumulate(*nd.parents[0], g);
  });
}

// ---- broadcast adds --------------------------------------------------------

// x: [..., D] + b: [D]
template <typename T>
VarT<T> add_bias(VarT<T> x, VarT<T> b) {
  long D = x.shape().back();
  if (b.value().numel() != D) throw ShapeError("add_bias: bias size mismatch");
  long rows = x.value().numel() / D;
  TensorT<T> out(x.shape());
  for (long r = 0; r < rows; ++r)
    for (long j = 0; j < D; ++j) out[r * D + j] = x.value()[r * D + j] + b.value()[j];
  return detail::make_result<T>(std::move(out), {x, b}, [rows, D](NodeT<T>& n) {
    detail::accumulate(*n.parents[0], n.grad);
    TensorT<T> gb({D});
    for (long r = 0; r < rows; ++r)
      for (long j = 0; j < D; ++j) gb[j] += n.grad[r * D + j];
    detail::accumulate(*n.parents[1], gb);
  });
}

// x: [N,T,D] + p: [T,D]  (positional embeddings)
template <typename T>
VarT<T> add_broadcast_dim0(VarT<T> x, VarT<T> p) {
  long N = x.value().dim(0), Tn = x.value().dim(1), D = x.value().dim(2);
  if (p.value().dim(0) != Tn || p.value().dim(1) != D)
    throw ShapeError("add_broadcast_dim0: shape mismatch");
  TensorT<T> out(x.shape());
  for (long n = 0; n < N; ++n)
    for (long i = 0; i < Tn * D; ++i) out[n * Tn * D + i] = x.value()[n * Tn * D + i] + p.value()[i];
  return detail::make_result<T>(std::move(out), {x, p}, [N, Tn, D](NodeT<T>& n) {
    detail::accumulate(*n.parents[0], n.grad);
    TensorT<T> gp({Tn, D});
    for (long k = 0; k < N; ++k)
      for (long i = 0; i < Tn * D; ++i) gp[i] += n.grad[k * Tn * D + i];
    detail::accumulate(*n.parents[1], gp);
  });
}

// ---- matmul ----------------------------------------------------------------

template <typename T>
VarT<T> matmul(VarT<T> a, VarT<T> b) {
  if (a.value().ndim() != 2 || b.value().ndim() != 2 || a.value().dim(1) != b.value().dim(0))
    throw ShapeError("matmul: incompatible shapes " + Tensor::shape_str(a.shape()) + " x " +
                     Tensor::shape_str(b.shape()));
  long M = a.value().dim(0), K = a.value().dim(1), N = b.value().dim(1);
  TensorT<T> out({M, N});
  detail::EMap<T>(out.data(), M, N) = detail::ECMap<T>(a.value().data(), M, K) *
                                      detail::ECMap<T>(b.value().data(), K, N);
  return detail::make_result<T>(std::move(out), {a, b}, [M, K, N](NodeT<T>& n) {
    detail::ECMap<T> g(n.grad.data(), M, N);
    detail::ECMap<T> av(n.parents[0]->value.data(), M, K);
    detail::ECMap<T> bv(n.parents[1]->value.data(), K, N);
    TensorT<T> ga({M, K}), gb({K, N});
    detail::EMap<T>(ga.data(), M, K) = g * bv.transpose();
    detail::EMap<T>(gb.data(), K, N) = av.transpose() * g;
    detail::accumulate(*n.parents[0], ga);
    detail::accumulate(*n.parents[1], gb);
  });
}

template <typename T>
VarT<T> bmm(VarT<T> a, VarT<T> b) {
  if (a.value().ndim() != 3 || b.value().ndim() != 3 || a.value().dim(0) != b.value().dim(0) ||
      a.value().dim(2) != b.value().dim(1))
    throw ShapeError("bmm: incompatible shapes");
  long B = a.value().dim(0), M = a.value().dim(1), K = a.value().dim(2), N = b.value().dim(2);
  TensorT<T> out({B, M, N});
  for (long i = 0; i < B; ++i)
    detail::EMap<T>(out.data() + i * M * N, M, N) =
        detail::ECMap<T>(a.value().data() + i * M * K, M, K) *
        detail::ECMap<T>(b.value().data() + i * K * N, K, N);
  return detail::make_result<T>(std::move(out), {a, b}, [B, M, K, N](NodeT<T>& n) {
    TensorT<T> ga({B, M, K}), gb({B, K, N});
    for (long i = 0; i < B; ++i) {
      detail::ECMap<T> g(n.grad.data() + i * M * N, M, N);
      detail::ECMap<T> av(n.parents[0]->value.data() + i * M * K, M, K);
      detail::ECMap<T> bv(n.parents[1]->value.data() + i * K * N, K, N);
      detail::EMap<T>(ga.data() + i * M * K, M, K) = g * bv.transpose();
      detail::EMap<T>(gb.data() + i * K * N, K, N) = av.transpose() * g;
    }
    detail::accumulate(*n.parents[0], ga);
    detail::accumulate(*n.parents[1], gb);
  });
}

// ---- reductions / normalizations ------------------------------------------

// [N,T,D] -> [N,D], mean over T
template <typename T>
VarT<T> mean_dim1(VarT<T> x) {
  long N = x.value().dim(0), Tn = x.value().dim(1), D = x.value().dim(2);
  TensorT<T> out({N, D});
  for (long n = 0; n < N; ++n)
    for (long t = 0; t < Tn; ++t)
      for (long d = 0; d < D; ++d) out[n * D + d] += x.value()[(n * Tn + t) * D + d];
  for (long i = 0; i < out.numel(); ++i) out[i] /= T(Tn);
  return detail::make_result<T>(std::move(out), {x}, [N, Tn, D](NodeT<T>& n) {
    TensorT<T> g({N, Tn, D});
    for (long k = 0; k < N; ++k)
      for (long t = 0; t < Tn; ++t)
        for (long d = 0; d < D; ++d) g[(k * Tn + t) * D + d] = n.grad[k * D + d] / T(Tn);
    detail::accumulate(*n.parents[0], g);
  });
}

template <typename T>
VarT<T> mean_all(VarT<T> x) {
  long n = x.value().numel();
  T s = 0;
  for (long i = 0; i < n; ++i) s += x.value()[i];
  TensorT<T> out({1});
  out[0] = s / T(n);
  auto shape = x.shape();
  return detail::make_result<T>(std::move(out), {x}, [n, shape](NodeT<T>& nd) {
    TensorT<T> g(shape);
    for (long i = 0; i < n; ++i) g[i] = nd.grad[0] / T(n);
    detail::accumulate(*nd.parents[0], g);
  });
}

template <typename T>
VarT<T> softmax_lastdim(VarT<T> x) {
  long D = x.shape().back();
  long rows = x.value().numel() / D;
  TensorT<T> out(x.shape());
  for (long r = 0; r < rows; ++r) {
    const T* in = x.value().data() + r * D;
    T* o = out.data() + r * D;
    T mx = in[0];
    for (long j = 1; j < D; ++j) mx = std::max(mx, in[j]);
    T sum = 0;
    for (long j = 0; j < D; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (long j = 0; j < D; ++j) o[j] /= sum;
  }
  TensorT<T> saved = out;
  return detail::make_result<T>(std::move(out), {x}, [rows, D, saved](NodeT<T>& n) {
    TensorT<T> g(saved.shape());
    for (long r = 0; r < rows; ++r) {
      const T* y = saved.data() + r * D;
      const T* dy = n.grad.data() + r * D;
      T dot = 0;
      for (long j = 0; j < D; ++j) dot += y[j] * dy[j];
      for (long j = 0; j < D; ++j) g[r * D + j] = y[j] * (dy[j] - dot);
    }
    detail::accumulate(*n.parents[0], g);
  });
}

// mean softmax cross-entropy over a batch; logits [N,C]
template <typename T>
VarT<T> cross_entropy(VarT<T> logits, const std::vector<int>& labels) {
  long N = logits.value().dim(0), C = logits.value().dim(1);
  if (static_cast<long>(labels.size()) != N) throw ShapeError("cross_entropy: label count");
  TensorT<T> probs({N, C});
  T loss = 0;
  for (long r = 0; r < N; ++r) {
    const T* in = logits.value().data() + r * C;
    T* p = probs.data() + r * C;
    T mx = in[0];
    for (long j = 1; j < C; ++j) mx = std::max(mx, in[j]);
    T sum = 0;
    for (long j = 0; j < C; ++j) {
      p[j] = std::exp(in[j] - mx);
      sum += p[j];
    }
    for (long j = 0; j < C; ++j) p[j] /= sum;
    loss -= std::log(std::max(p[labels[r]], T(1e-12)));
  }
  TensorT<T> out({1});
  out[0] = loss / T(N);
  return detail::make_result<T>(std::move(out), {logits},
                                [N, C, probs, labels](NodeT<T>& n) {
                                  TensorT<T> g({N, C});
                                  T s = n.grad[0] / T(N);
                                  for (long r = 0; r < N; ++r)
                                    for (long j = 0; j < C; ++j) {
                                      T y = (labels[r] == j) ? T(1) : T(0);
                                      g[r * C + j] = s * (probs[r * C + j] - y);
                                    }
                                  detail::accumulate(*n.parents[0], g);
                                });
}

// layer norm over the last dim
template <typename T>
VarT<T> layer_norm(VarT<T> x, VarT<T> gamma, VarT<T> beta, T eps = T(1e-5)) {
  long D = x.shape().back();
  if (gamma.value().numel() != D || beta.value().numel() != D)
    throw ShapeError("layer_norm: affine size mismatch");
  long rows = x.value().numel() / D;
  TensorT<T> out(x.shape()), xhat(x.shape()), inv_std({rows});
  for (long r = 0; r < rows; ++r) {
    const T* in = x.value().data() + r * D;
    T mean = 0;
    for (long j = 0; j < D; ++j) mean += in[j];
    mean /= T(D);
    T var = 0;
    for (long j = 0; j < D; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= T(D);
    T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (long j = 0; j < D; ++j) {
      xhat[r * D + j] = (in[j] - mean) * is;
      out[r * D + j] = xhat[r * D + j] * gamma.value()[j] + beta.value()[j];
    }
  }
  return detail::make_result<T>(
      std::move(out), {x, gamma, beta}, [rows, D, xhat, inv_std](NodeT<T>& n) {
        const auto& gv = n.parents[1]->value;
        TensorT<T> gx(n.parents[0]->value.shape()), gg({D}), gb({D});
        for (long r = 0; r < rows; ++r) {
          const T* dy = n.grad.data() + r * D;
          const T* xh = xhat.data() + r * D;
          T sum_dyg = 0, sum_dyg_xh = 0;
          for (long j = 0; j < D; ++j) {
            T dyg = dy[j] * gv[j];
            sum_dyg += dyg;
            sum_dyg_xh += dyg * xh[j];
            gg[j] += dy[j] * xh[j];
            gb[j] += dy[j];
          }
          for (long j = 0; j < D; ++j) {
            T dyg = dy[j] * gv[j];
            gx[r * D + j] = inv_std[r] * (dyg - sum_dyg / T(D) - xh[j] * sum_dyg_xh / T(D));
          }
        }
        detail::accumulate(*n.parents[0], gx);
        detail::accumulate(*n.parents[1], gg);
        detail::accumulate(*n.parents[2], gb);
      });
}

// ---- dropout ---------------------------------------------------------------

template <typename T>
VarT<T> dropout(VarT<T> x, double p, Pcg32& rng, bool training) {
  if (!training || p <= 0.0) return x;
  long n = x.value().numel();
  TensorT<T> mask(x.shape());
  T keep = T(1.0 - p);
  for (long i = 0; i < n; ++i) mask[i] = (rng.uniform() >= p) ? T(1) / keep : T(0);
  TensorT<T> out(x.shape());
  for (long i = 0; i < n; ++i) out[i] = x.value()[i] * mask[i];
  return detail::make_result<T>(std::move(out), {x}, [mask](NodeT<T>& nd) {
    TensorT<T> g(nd.grad.shape());
    for (long i = 0; i < g.numel(); ++i) g[i] = nd.grad[i] * mask[i];
    detail::accumulate(*nd.parents[0], g);
  });
}

// ---- conv / pool -----------------------------------------------------------

inline long conv_out_dim(long in, long k, long stride, long pad, long dilation) {
  return (in + 2 * pad - dilation * (k - 1) - 1) / stride + 1;
}

namespace detail {

template <typename T>
void im2col(const T* img, long C, long H, long W, long kh, long kw, long stride, long pad,
            long dilation, long Ho, long Wo, T* col) {
  // col: [C*kh*kw, Ho*Wo]
  for (long c = 0; c < C; ++c)
    for (long i = 0; i < kh; ++i)
      for (long j = 0; j < kw; ++j) {
        T* dst = col + ((c * kh + i) * kw + j) * Ho * Wo;
        for (long y = 0; y < Ho; ++y) {
          long iy = y * stride - pad + i * dilation;
          if (iy < 0 || iy >= H) {
            std::fill_n(dst + y * Wo, Wo, T(0));
            continue;
          }
          for (long x = 0; x < Wo; ++x) {
            long ix = x * stride - pad + j * dilation;
            dst[y * Wo + x] = (ix >= 0 && ix < W) ? img[(c * H + iy) * W + ix] : T(0);
          }
        }
      }
}

template <typename T>
void col2im_add(const T* col, long C, long H, long W, long kh, long kw, long stride, long pad,
                long dilation, long Ho, long Wo, T* img) {
  for (long c = 0; c < C; ++c)
    for (long i = 0; i < kh; ++i)
      for (long j = 0; j < kw; ++j) {
        const T* src = col + ((c * kh + i) * kw + j) * Ho * Wo;
        for (long y = 0; y < Ho; ++y) {
          long iy = y * stride - pad + i * dilation;
          if (iy < 0 || iy >= H) continue;
          for (long x = 0; x < Wo; ++x) {
            long ix = x * stride - pad + j * dilation;
            if (ix >= 0 && ix < W) img[(c * H + iy) * W + ix] += src[y * Wo + x];
          }
        }
      }
}

}  // namespace detail

// x: [N,Cin,H,W], w: [Cout, Cin/groups, kh, kw], optional bias [Cout]
template <typename T>
VarT<T> conv2d(VarT<T> x, VarT<T> w, VarT<T> bias, long stride, long pad, long dilation = 1,
               long groups = 1) {
  long N = x.value().dim(0), Cin = x.value().dim(1), H = x.value().dim(2), W = x.value().dim(3);
  long Cout = w.value().dim(0), Cg = w.value().dim(1), kh = w.value().dim(2), kw = w.value().dim(3);
  if (Cg * groups != Cin || Cout % groups != 0)
    throw ShapeError("conv2d: channel/group mismatch");
  long Ho = conv_out_dim(H, kh, stride, pad, dilation);
  long Wo = conv_out_dim(W, kw, stride, pad, dilation);
  if (Ho < 1 || Wo < 1) throw ShapeError("conv2d: output collapses to zero");
  long Cog = Cout / groups;
  bool depthwise = (groups == Cin && Cg == 1 && Cog == 1);

  TensorT<T> out({N, Cout, Ho, Wo});
  const bool has_bias = bias.defined();
  if (depthwise) {
    for (long n = 0; n < N; ++n)
      for (long c = 0; c < Cin; ++c) {
        const T* img = x.value().data() + (n * Cin + c) * H * W;
        const T* ker = w.value().data() + c * kh * kw;
        T* o = out.data() + (n * Cout + c) * Ho * Wo;
        T b = has_bias ? bias.value()[c] : T(0);
        for (long y = 0; y < Ho; ++y)
          for (long xo = 0; xo < Wo; ++xo) {
            T acc = b;
            for (long i = 0; i < kh; ++i) {
              long iy = y * stride - pad + i * dilation;
              if (iy < 0 || iy >= H) continue;
              for (long j = 0; j < kw; ++j) {
                long ix = xo * stride - pad + j * dilation;
                if (ix < 0 || ix >= W) continue;
                acc += ker[i * kw + j] * img[iy * W + ix];
              }
            }
            o[y * Wo + xo] = acc;
          }
      }
  } else {
    std::vector<T> col(static_cast<std::size_t>(Cg * kh * kw) * Ho * Wo);
    for (long n = 0; n < N; ++n)
      for (long g = 0; g < groups; ++g) {
        detail::im2col(x.value().data() + (n * Cin + g * Cg) * H * W, Cg, H, W, kh, kw, stride,
                       pad, dilation, Ho, Wo, col.data());
        detail::EMap<T> o(out.data() + (n * Cout + g * Cog) * Ho * Wo, Cog, Ho * Wo);
        o = detail::ECMap<T>(w.value().data() + g * Cog * Cg * kh * kw, Cog, Cg * kh * kw) *
            detail::ECMap<T>(col.data(), Cg * kh * kw, Ho * Wo);
        if (has_bias)
          for (long c = 0; c < Cog; ++c)
            o.row(c).array() += bias.value()[g * Cog + c];
      }
  }

  std::vector<VarT<T>> inputs = has_bias ? std::vector<VarT<T>>{x, w, bias}
                                         : std::vector<VarT<T>>{x, w};
  return detail::make_result<T>(
      std::move(out), inputs,
      [=](NodeT<T>& nd) {
        auto& xp = *nd.parents[0];
        auto& wp = *nd.parents[1];
        TensorT<T> gx({N, Cin, H, W}), gw(wp.value.shape());
        TensorT<T> gb = has_bias ? TensorT<T>({Cout}) : TensorT<T>();
        std::vector<T> col(static_cast<std::size_t>(Cg * kh * kw) * Ho * Wo);
        std::vector<T> gcol(col.size());
        for (long n = 0; n < N; ++n)
          for (long g = 0; g < groups; ++g) {
            detail::im2col(xp.value.data() + (n * Cin + g * Cg) * H * W, Cg, H, W, kh, kw,
                           stride, pad, dilation, Ho, Wo, col.data());
            detail::ECMap<T> go(nd.grad.data() + (n * Cout + g * Cog) * Ho * Wo, Cog, Ho * Wo);
            detail::EMap<T>(gw.data() + g * Cog * Cg * kh * kw, Cog, Cg * kh * kw).noalias() +=
                go * detail::ECMap<T>(col.data(), Cg * kh * kw, Ho * Wo).transpose();
            detail::EMap<T>(gcol.data(), Cg * kh * kw, Ho * Wo).noalias() =
                detail::ECMap<T>(wp.value.data() + g * Cog * Cg * kh * kw, Cog, Cg * kh * kw)
                    .transpose() *
                go;
            detail::col2im_add(gcol.data(), Cg, H, W, kh, kw, stride, pad, dilation, Ho, Wo,
                               gx.data() + (n * Cin + g * Cg) * H * W);
            if (has_bias)
              for (long c = 0; c < Cog; ++c) gb[g * Cog + c] += go.row(c).sum();
          }
        detail::accumulate(xp, gx);
        detail::accumulate(wp, gw);
        if (has_bias) detail::accumulate(*nd.parents[2], gb);
      });
}

template <typename T>
VarT<T> maxpool2d(VarT<T> x, long k, long stride) {
  long N = x.value().dim(0), C = x.value().dim(1), H = x.value().dim(2), W = x.value().dim(3);
  long Ho = (H - k) / stride + 1, Wo = (W - k) / stride + 1;
  if (Ho < 1 || Wo < 1) throw ShapeError("maxpool2d: output collapses to zero");
  TensorT<T> out({N, C, Ho, Wo});
  std::vector<long> argmax(static_cast<std::size_t>(out.numel()));
  for (long nc = 0; nc < N * C; ++nc) {
    const T* img = x.value().data() + nc * H * W;
    for (long y = 0; y < Ho; ++y)
      for (long xo = 0; xo < Wo; ++xo) {
        long best = (y * stride) * W + xo * stride;
        T bv = img[best];
        for (long i = 0; i < k; ++i)
          for (long j = 0; j < k; ++j) {
            long idx = (y * stride + i) * W + (xo * stride + j);
            if (img[idx] > bv) {
              bv = img[idx];
              best = idx;
            }
          }
        out[nc * Ho * Wo + y * Wo + xo] = bv;
        argmax[static_cast<std::size_t>(nc * Ho * Wo + y * Wo + xo)] = best;
      }
  }
  return detail::make_result<T>(std::move(out), {x}, [=](NodeT<T>& nd) {
    TensorT<T> g({N, C, H, W});
    for (long nc = 0; nc < N * C; ++nc)
      for (long i = 0; i < Ho * Wo; ++i)
        g[nc * H * W + argmax[static_cast<std::size_t>(nc * Ho * Wo + i)]] +=
            nd.grad[nc * Ho * Wo + i];
    detail::accumulate(*nd.parents[0], g);
  });
}

// [N,C,H,W] -> [N,C]
template <typename T>
VarT<T> global_avg_pool(VarT<T> x) {
  long N = x.value().dim(0), C = x.value().dim(1), H = x.value().dim(2), W = x.value().dim(3);
  long HW = H * W;
  TensorT<T> out({N, C});
  for (long nc = 0; nc < N * C; ++nc) {
    T s = 0;
    const T* img = x.value().data() + nc * HW;
    for (long i = 0; i < HW; ++i) s += img[i];
    out[nc] = s / T(HW);
  }
  return detail::make_result<T>(std::move(out), {x}, [=](NodeT<T>& nd) {
    TensorT<T> g({N, C, H, W});
    for (long nc = 0; nc < N * C; ++nc)
      for (long i = 0; i < HW; ++i) g[nc * HW + i] = nd.grad[nc] / T(HW);
    detail::accumulate(*nd.parents[0], g);
  });
}

// x: [N,C,H,W] scaled per (n,c) by s: [N,C]  (squeeze-excite)
template <typename T>
VarT<T> channel_scale(VarT<T> x, VarT<T> s) {
  long N = x.value().dim(0), C = x.value().dim(1), H = x.value().dim(2), W = x.value().dim(3);
  if (s.value().dim(0) != N || s.value().dim(1) != C)
    throw ShapeError("channel_scale: shape mismatch");
  long HW = H * W;
  TensorT<T> out(x.shape());
  for (long nc = 0; nc < N * C; ++nc)
    for (long i = 0; i < HW; ++i) out[nc * HW + i] = x.value()[nc * HW + i] * s.value()[nc];
  return detail::make_result<T>(std::move(out), {x, s}, [=](NodeT<T>& nd) {
    const auto& xv = nd.parents[0]->value;
    const auto& sv = nd.parents[1]->value;
    TensorT<T> gx(xv.shape()), gs({N, C});
    for (long nc = 0; nc < N * C; ++nc) {
      T acc = 0;
      for (long i = 0; i < HW; ++i) {
        gx[nc * HW + i] = nd.grad[nc * HW + i] * sv[nc];
        acc += nd.grad[nc * HW + i] * xv[nc * HW + i];
      }
      gs[nc] = acc;
    }
    detail::accumulate(*nd.parents[0], gx);
    detail::accumulate(*nd.parents[1], gs);
  });
}

// batch norm over N,H,W per channel; updates running stats in training mode
template <typename T>
VarT<T> batch_norm2d(VarT<T> x, VarT<T> gamma, VarT<T> beta, TensorT<T>& running_mean,
                     TensorT<T>& running_var, bool training, T momentum = T(0.1),
                     T eps = T(1e-5)) {
  long N = x.value().dim(0), C = x.value().dim(1), H = x.value().dim(2), W = x.value().dim(3);
  long HW = H * W, cnt = N * HW;
  TensorT<T> mean({C}), var({C});
  if (training) {
    for (long c = 0; c < C; ++c) {
      T s = 0;
      for (long n = 0; n < N; ++n) {
        const T* img = x.value().data() + (n * C + c) * HW;
        for (long i = 0; i < HW; ++i) s += img[i];
      }
      mean[c] = s / T(cnt);
      T v = 0;
      for (long n = 0; n < N; ++n) {
        const T* img = x.value().data() + (n * C + c) * HW;
        for (long i = 0; i < HW; ++i) v += (img[i] - mean[c]) * (img[i] - mean[c]);
      }
      var[c] = v / T(cnt);
      running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * mean[c];
      T unbiased = (cnt > 1) ? var[c] * T(cnt) / T(cnt - 1) : var[c];
      running_var[c] = (T(1) - momentum) * running_var[c] + momentum * unbiased;
    }
  } else {
    mean = running_mean;
    var = running_var;
  }
  TensorT<T> inv_std({C}), xhat(x.shape()), out(x.shape());
  for (long c = 0; c < C; ++c) inv_std[c] = T(1) / std::sqrt(var[c] + eps);
  for (long n = 0; n < N; ++n)
    for (long c = 0; c < C; ++c) {
      const T* img = x.value().data() + (n * C + c) * HW;
      T* xh = xhat.data() + (n * C + c) * HW;
      T* o = out.data() + (n * C + c) * HW;
      for (long i = 0; i < HW; ++i) {
        xh[i] = (img[i] - mean[c]) * inv_std[c];
        o[i] = xh[i] * gamma.value()[c] + beta.value()[c];
      }
    }
  return detail::make_result<T>(
      std::move(out), {x, gamma, beta}, [=](NodeT<T>& nd) {
        const auto& gv = nd.parents[1]->value;
        TensorT<T> gx(nd.parents[0]->value.shape()), gg({C}), gb({C});
        for (long c = 0; c < C; ++c) {
          T sum_dy = 0, sum_dy_xh = 0;
          for (long n = 0; n < N; ++n) {
            const T* dy = nd.grad.data() + (n * C + c) * HW;
            const T* xh = xhat.data() + (n * C + c) * HW;
            for (long i = 0; i < HW; ++i) {
              sum_dy += dy[i];
              sum_dy_xh += dy[i] * xh[i];
            }
          }
          gg[c] = sum_dy_xh;
          gb[c] = sum_dy;
          for (long n = 0; n < N; ++n) {
            const T* dy = nd.grad.data() + (n * C + c) * HW;
            const T* xh = xhat.data() + (n * C + c) * HW;
            T* g = gx.data() + (n * C + c) * HW;
            for (long i = 0; i < HW; ++i) {
              if (training)
                g[i] = gv[c] * inv_std[c] *
                       (dy[i] - sum_dy / T(cnt) - xh[i] * sum_dy_xh / T(cnt));
              else
                g[i] = gv[c] * inv_std[c] * dy[i];
            }
          }
        }
        detail::accumulate(*nd.parents[0], gx);
        detail::accumulate(*nd.parents[1], gg);
        detail::accumulate(*nd.parents[2], gb);
      });
}

// [N, C, H, W] -> [N, (H/ps)*(W/ps), C*ps*ps] non-overlapping patches
template <typename T>
VarT<T> image_to_patches(VarT<T> x, long ps) {
  long N = x.value().dim(0), C = x.value().dim(1), H = x.value().dim(2), W = x.value().dim(3);
  if (H % ps != 0 || W % ps != 0) throw ShapeError("image_to_patches: size not divisible");
  long Ph = H / ps, Pw = W / ps, P = Ph * Pw, D = C * ps * ps;
  TensorT<T> out({N, P, D});
  for (long n = 0; n < N; ++n)
    for (long py = 0; py < Ph; ++py)
      for (long px = 0; px < Pw; ++px) {
        T* dst = out.data() + (n * P + py * Pw + px) * D;
        for (long c = 0; c < C; ++c)
          for (long i = 0; i < ps; ++i)
            for (long j = 0; j < ps; ++j)
              dst[(c * ps + i) * ps + j] =
                  x.value()[((n * C + c) * H + py * ps + i) * W + px * ps + j];
      }
  return detail::make_result<T>(std::move(out), {x}, [=](NodeT<T>& nd) {
    TensorT<T> g({N, C, H, W});
    for (long n = 0; n < N; ++n)
      for (long py = 0; py < Ph; ++py)
        for (long px = 0; px < Pw; ++px) {
          const T* src = nd.grad.data() + (n * P + py * Pw + px) * D;
          for (long c = 0; c < C; ++c)
            for (long i = 0; i < ps; ++i)
              for (long j = 0; j < ps; ++j)
                g[((n * C + c) * H + py * ps + i) * W + px * ps + j] =
                    src[(c * ps + i) * ps + j];
        }
    detail::accumulate(*nd.parents[0], g);
  });
}

// ---- backward --------------------------------------------------------------

template <typename T>
void backward(VarT<T> loss) {
  auto root = loss.node();
  if (!root) return;
  // topological order over the graph reachable from the root
  std::vector<NodeT<T>*> order;
  std::unordered_set<NodeT<T>*> visited;
  std::vector<std::pair<NodeT<T>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      NodeT<T>* p = node->parents[idx].get();
      ++idx;
      if (p && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  for (long i = 0; i < root->grad.numel(); ++i) root->grad[i] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT<T>* n = *it;
    if (n->backward_op && n->grad.numel() == n->value.numel()) n->backward_op(*n);
  }
}

}  // namespace cricbench::ag
