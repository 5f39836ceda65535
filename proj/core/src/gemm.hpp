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

#include <cstddef>
#include <vector>

// Row-major GEMM kernels used by the convolutions. Loop orders keep the
// innermost loop contiguous so the compiler can vectorize it.
namespace chromatix::nn::detail {

// C[M x N] += A[M x K] * B[K x N]
template <typename T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<std::size_t>(i) * n;
    const T* arow = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T{0}) continue;
      const T* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M x N] += A^T * B, where A is [K x M] and B is [K x N].
template <typename T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c) {
  for (int p = 0; p < k; ++p) {
    const T* arow = a + static_cast<std::size_t>(p) * m;
    const T* brow = b + static_cast<std::size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const T av = arow[i];
      if (av == T{0}) continue;
      T* crow = c + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M x N] += A * B^T, where A is [M x K] and B is [N x K].
template <typename T>
void gemm_nt(int m, int n, int k, const T* a, const T* b, T* c,
             std::vector<T>& scratch) {
  scratch.assign(static_cast<std::size_t>(k) * n, T{0});
  for (int j = 0; j < n; ++j) {
    const T* brow = b + static_cast<std::size_t>(j) * k;
    for (int p = 0; p < k; ++p) scratch[static_cast<std::size_t>(p) * n + j] = brow[p];
  }
  gemm_nn(m, n, k, a, scratch.data(), c);
}

}  // namespace chromatix::nn::detail
