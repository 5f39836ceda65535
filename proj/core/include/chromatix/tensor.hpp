// Copyright 2026 The Chromatix Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chromatix/error.hpp"

namespace chromatix::nn {

using Dims = std::vector<int>;

inline std::string dims_string(const Dims& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

inline std::size_t dims_product(const Dims& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         std::multiplies<>());
}

/// Dense row-major tensor. Images use NCHW order.
///
/// A default-constructed tensor is empty (no dims, no data); every other
/// tensor has extents >= 1 and product(dims) == size().
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Dims dims, T fill = T{}) : dims_(std::move(dims)) {
    check_dims(dims_);
    data_.assign(dims_product(dims_), fill);
  }

  BasicTensor(Dims dims, std::vector<T> data)
      : dims_(std::move(dims)), data_(std::move(data)) {
    check_dims(dims_);
    if (data_.size() != dims_product(dims_)) {
      throw ShapeError("tensor: data length " + std::to_string(data_.size()) +
                       " does not match dims " + dims_string(dims_));
    }
  }

  static BasicTensor scalar(T v) { return BasicTensor(Dims{1}, v); }

  bool empty() const noexcept { return dims_.empty(); }
  const Dims& dims() const noexcept { return dims_; }
  int rank() const noexcept { return static_cast<int>(dims_.size()); }
  int dim(int i) const { return dims_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const noexcept { return data_.size(); }

  // NCHW accessors; valid for rank-4 tensors only.
  int batch() const { return dims_.at(0); }
  int channels() const { return dims_.at(1); }
  int height() const { return dims_.at(2); }
  int width() const { return dims_.at(3); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(int n, int c, int h, int w) noexcept {
    return data_[offset(n, c, h, w)];
  }
  const T& at(int n, int c, int h, int w) const noexcept {
    return data_[offset(n, c, h, w)];
  }

  T item() const {
    if (data_.size() != 1) {
      throw ShapeError("tensor: item() on non-scalar " + dims_string(dims_));
    }
    return data_[0];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  BasicTensor reshaped(Dims dims) const {
    return BasicTensor(std::move(dims), data_);
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  static void check_dims(const Dims& dims) {
    if (dims.empty()) throw ShapeError("tensor: rank must be >= 1");
    for (int d : dims) {
      if (d < 1) throw ShapeError("tensor: extent < 1 in " + dims_string(dims));
    }
  }

  std::size_t offset(int n, int c, int h, int w) const noexcept {
    return ((static_cast<std::size_t>(n) * dims_[1] + c) * dims_[2] + h) *
               dims_[3] +
           w;
  }

  Dims dims_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorF64 = BasicTensor<double>;

template <typename To, typename From>
BasicTensor<To> tensor_cast(const BasicTensor<From>& t) {
  if (t.empty()) return {};
  std::vector<To> out(t.size());
  std::transform(t.data().begin(), t.data().end(), out.begin(),
                 [](From v) { return static_cast<To>(v); });
  return BasicTensor<To>(t.dims(), std::move(out));
}

}  // namespace chromatix::nn
