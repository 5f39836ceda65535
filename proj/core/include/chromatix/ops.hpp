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

#include <span>
#include <vector>

#include "chromatix/graph.hpp"

// Differentiable op catalog. Every op validates extents and throws
// ShapeError naming the op and the offending dims.
namespace chromatix::nn {

struct Conv2dOptions {
  int stride = 1;   // 1 or 2
  int padding = 0;  // zero padding on every side
  int dilation = 1;
};

/// x: [N, Cin, H, W]; weight: [Cout, Cin, K, K]; bias: [Cout] or invalid Var.
/// Output extent: (H + 2p - d(K-1) - 1) / s + 1.
template <typename T>
Var conv2d(BasicGraph<T>& g, Var x, Var weight, Var bias, Conv2dOptions opt);

struct ConvTranspose2dOptions {
  int stride = 2;
  int padding = 1;
};

/// x: [N, Cin, H, W]; weight: [Cin, Cout, K, K]; bias: [Cout] or invalid.
/// Output extent: (H - 1) s - 2p + K.
template <typename T>
Var conv_transpose2d(BasicGraph<T>& g, Var x, Var weight, Var bias,
                     ConvTranspose2dOptions opt);

/// Running statistics owned outside the graph; updated in training mode.
template <typename T>
struct BatchNormRunning {
  BasicTensor<T>* mean = nullptr;
  BasicTensor<T>* var = nullptr;
};

struct BatchNormOptions {
  bool training = true;
  double eps = 1e-5;
  double momentum = 0.1;
};

/// Per-channel normalization over (N, H, W); gamma/beta: [C].
template <typename T>
Var batch_norm(BasicGraph<T>& g, Var x, Var gamma, Var beta,
               BatchNormRunning<T> running, BatchNormOptions opt);

template <typename T>
Var relu(BasicGraph<T>& g, Var x);

template <typename T>
Var tanh(BasicGraph<T>& g, Var x);

/// Concatenates rank-4 tensors along the channel axis.
template <typename T>
Var concat_channels(BasicGraph<T>& g, std::span<const Var> xs);

/// Items [begin, end) of the batch axis of a rank-4 tensor.
template <typename T>
Var slice_batch(BasicGraph<T>& g, Var x, int begin, int end);

/// Bilinear resampling of [N, C, H, W] to [N, C, out_h, out_w] with
/// half-pixel centers (align_corners = false).
template <typename T>
Var upsample_bilinear(BasicGraph<T>& g, Var x, int out_h, int out_w);

template <typename T>
Var add(BasicGraph<T>& g, Var a, Var b);

template <typename T>
Var sub(BasicGraph<T>& g, Var a, Var b);

template <typename T>
Var mul(BasicGraph<T>& g, Var a, Var b);

template <typename T>
Var scale(BasicGraph<T>& g, Var x, T factor);

/// Sum of all elements; dims [1].
template <typename T>
Var sum(BasicGraph<T>& g, Var x);

/// Mean over H and W: [N, C, H, W] -> [N, C, 1, 1].
template <typename T>
Var spatial_mean(BasicGraph<T>& g, Var x);

/// Elementwise smooth L1: 0.5 d^2 if |d| < 1 else |d| - 0.5, d = a - b.
template <typename T>
Var smooth_l1(BasicGraph<T>& g, Var a, Var b);

/// Mean softmax cross-entropy of logits [N, C, ...] against class labels.
template <typename T>
Var softmax_cross_entropy(BasicGraph<T>& g, Var logits,
                          std::span<const int> labels);

/// Numerically stable softmax over a logit vector.
std::vector<double> softmax(std::span<const double> logits);

}  // namespace chromatix::nn
