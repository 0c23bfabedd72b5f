// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "cricbench/errors.hpp"

namespace cricbench {

// Dense row-major n-d array. Value type; copies are deep.
template <typename T>
class TensorT {
 public:
  TensorT() = default;
  explicit TensorT(std::vector<long> shape) : shape_(std::move(shape)) {
    data_.assign(numel_of(shape_), T(0));
  }
  TensorT(std::vector<long> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<long>(data_.size()) != numel_of(shape_))
      throw ShapeError("tensor data size does not match shape");
  }

  static TensorT zeros(std::vector<long> shape) { return TensorT(std::move(shape)); }
  static TensorT full(std::vector<long> shape, T v) {
    TensorT t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }
  static TensorT scalar(T v) { return TensorT({1}, {v}); }

  const std::vector<long>& shape() const { return shape_; }
  long dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  int ndim() const { return static_cast<int>(shape_.size()); }
  long numel() const { return numel_of(shape_); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](long i) { return data_[static_cast<std::size_t>(i)]; }
  T operator[](long i) const { return data_[static_cast<std::size_t>(i)]; }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  TensorT reshaped(std::vector<long> shape) const {
    if (numel_of(shape) != numel())
      throw ShapeError("reshape: element count mismatch (" + shape_str(shape_) +
                       " -> " + shape_str(shape) + ")");
    return TensorT(std::move(shape), data_);
  }

  bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

  static long numel_of(const std::vector<long>& shape) {
    long n = 1;
    for (long d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

  static std::string shape_str(const std::vector<long>& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + ")";
  }

 private:
  std::vector<long> shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

}  // namespace cricbench
