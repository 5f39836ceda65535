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

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "chromatix/adam.hpp"
#include "chromatix/bytes.hpp"
#include "chromatix/gradcheck.hpp"
#include "chromatix/ops.hpp"
#include "chromatix/weights.hpp"
#include "test_support.hpp"

namespace chromatix {
namespace {

using nn::Dims;
using nn::GraphF64;
using nn::TensorF64;
using nn::Var;
using testing::random_tensor;

// Direct convolution, independent of the im2col path.
TensorF64 conv_oracle(const TensorF64& x, const TensorF64& w, const TensorF64& b, int stride, int pad, int dil) {
  const int n = x.batch(), cin = x.channels(), h = x.height(), wd = x.width();
  const int cout = w.dim(0), k = w.dim(2);
  const int oh = (h + 2 * pad - dil * (k - 1) - 1) / stride + 1;
  const int ow = (wd + 2 * pad - dil * (k - 1) - 1) / stride + 1;
  TensorF64 y(Dims{n, cout, oh, ow});
  for (int in = 0; in < n; ++in)
    for (int co = 0; co < cout; ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = b.empty() ? 0.0 : b[static_cast<std::size_t>(co)];
          for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * stride - pad + ky * dil, ix = ox * stride - pad + kx * dil;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                acc += x.at(in, ci, iy, ix) * w.at(co, ci, ky, kx);
              }
          y.at(in, co, oy, ox) = acc;
        }
  return y;
}

// Scatter form of the transposed convolution.
TensorF64 conv_transpose_oracle(const TensorF64& x, const TensorF64& w, const TensorF64& b, int stride, int pad) {
  const int n = x.batch(), cin = x.channels(), h = x.height(), wd = x.width();
  const int cout = w.dim(1), k = w.dim(2);
  const int oh = (h - 1) * stride - 2 * pad + k, ow = (wd - 1) * stride - 2 * pad + k;
  TensorF64 y(Dims{n, cout, oh, ow});
  for (int in = 0; in < n; ++in)
    for (int co = 0; co < cout; ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) y.at(in, co, oy, ox) = b.empty() ? 0.0 : b[static_cast<std::size_t>(co)];
  for (int in = 0; in < n; ++in)
    for (int ci = 0; ci < cin; ++ci)
      for (int iy = 0; iy < h; ++iy)
        for (int ix = 0; ix < wd; ++ix)
          for (int co = 0; co < cout; ++co)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int oy = iy * stride - pad + ky, ox = ix * stride - pad + kx;
                if (oy < 0 || oy >= oh || ox < 0 || ox >= ow) continue;
                y.at(in, co, oy, ox) += x.at(in, ci, iy, ix) * w.at(ci, co, ky, kx);
              }
  return y;
}

void expect_near(const TensorF64& a, const TensorF64& b, double tol) {
  ASSERT_EQ(a.dims(), b.dims());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], tol) << "index " << i;
}

TEST(Tensor, RejectsZeroExtentAndLengthMismatch) {
  EXPECT_THROW(nn::Tensor(Dims{2, 0}), ShapeError);
  EXPECT_THROW(nn::Tensor(Dims{2, 2}, std::vector<float>(3)), ShapeError);
  EXPECT_THROW(nn::Tensor(Dims{2}).item(), ShapeError);
}

TEST(Conv2d, MatchesDirectOracle) {
  Rng rng(1);
  struct Case { int n, cin, cout, h, w, k, stride, pad, dil; };
  const Case cases[] = {{1, 1, 1, 5, 5, 3, 1, 1, 1}, {2, 3, 4, 7, 6, 3, 2, 1, 1}, {1, 2, 3, 9, 9, 3, 1, 2, 2},
                        {1, 4, 2, 8, 8, 1, 1, 0, 1}, {2, 2, 2, 6, 5, 3, 2, 0, 1}, {1, 3, 5, 4, 4, 3, 1, 1, 1}};
  for (const Case& c : cases) {
    const TensorF64 x = random_tensor<double>(Dims{c.n, c.cin, c.h, c.w}, rng);
    const TensorF64 w = random_tensor<double>(Dims{c.cout, c.cin, c.k, c.k}, rng);
    const TensorF64 b = random_tensor<double>(Dims{c.cout}, rng);
    GraphF64 g;
    nn::Conv2dOptions opt{c.stride, c.pad, c.dil};
    const Var y = nn::conv2d(g, g.input(x), g.input(w), g.input(b), opt);
    expect_near(g.value(y), conv_oracle(x, w, b, c.stride, c.pad, c.dil), 1e-12);
  }
}

TEST(Conv2d, HandWorkedValue) {
  // 3x3 ones kernel over a 3x3 ramp with zero padding: center sums all nine.
  GraphF64 g;
  TensorF64 x(Dims{1, 1, 3, 3}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  TensorF64 w(Dims{1, 1, 3, 3}, 1.0);
  const Var y = nn::conv2d(g, g.input(x), g.input(w), Var{}, nn::Conv2dOptions{1, 1, 1});
  const std::vector<double> expect{12, 21, 16, 27, 45, 33, 24, 39, 28};
  for (std::size_t i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(g.value(y)[i], expect[i]);
}

TEST(Conv2d, ShapeErrorsNameTheOp) {
  GraphF64 g;
  const Var x = g.input(TensorF64(Dims{1, 2, 4, 4}));
  const Var w = g.input(TensorF64(Dims{3, 5, 3, 3}));
  try {
    nn::conv2d(g, x, w, Var{}, nn::Conv2dOptions{});
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("conv2d"), std::string::npos);
  }
}

TEST(SliceBatch, CopiesItemsAndChecksRange) {
  GraphF64 g;
  TensorF64 x(Dims{3, 1, 1, 2}, std::vector<double>{1, 2, 3, 4, 5, 6});
  const Var y = nn::slice_batch(g, g.input(x), 1, 3);
  EXPECT_EQ(g.value(y), TensorF64(Dims{2, 1, 1, 2}, std::vector<double>{3, 4, 5, 6}));
  EXPECT_THROW(nn::slice_batch(g, g.input(x), 2, 2), ShapeError);
  EXPECT_THROW(nn::slice_batch(g, g.input(x), 0, 4), ShapeError);
}

TEST(ConvTranspose2d, MatchesScatterOracleAndDoublesSize) {
  Rng rng(2);
  const TensorF64 x = random_tensor<double>(Dims{2, 3, 4, 5}, rng);
  const TensorF64 w = random_tensor<double>(Dims{3, 2, 4, 4}, rng);
  const TensorF64 b = random_tensor<double>(Dims{2}, rng);
  GraphF64 g;
  const Var y = nn::conv_transpose2d(g, g.input(x), g.input(w), g.input(b), nn::ConvTranspose2dOptions{});
  EXPECT_EQ(g.value(y).dims(), (Dims{2, 2, 8, 10}));
  expect_near(g.value(y), conv_transpose_oracle(x, w, b, 2, 1), 1e-12);
}

TEST(UpsampleBilinear, HalfPixelCenters) {
  GraphF64 g;
  TensorF64 x(Dims{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  const Var y = nn::upsample_bilinear(g, g.input(x), 4, 4);
  const std::vector<double> row0{1.0, 1.25, 1.75, 2.0};
  const std::vector<double> row1{1.5, 1.75, 2.25, 2.5};
  for (int i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(g.value(y).at(0, 0, 0, i), row0[static_cast<std::size_t>(i)]);
    EXPECT_DOUBLE_EQ(g.value(y).at(0, 0, 1, i), row1[static_cast<std::size_t>(i)]);
  }
}

TEST(SmoothL1, PiecewiseRegimes) {
  GraphF64 g;
  const Var a = g.input(TensorF64(Dims{3}, std::vector<double>{0.5, 2.0, -1.0}));
  const Var b = g.input(TensorF64(Dims{3}, std::vector<double>{0.0, 0.0, 0.0}));
  const TensorF64& v = g.value(nn::smooth_l1(g, a, b));
  EXPECT_DOUBLE_EQ(v[0], 0.125);
  EXPECT_DOUBLE_EQ(v[1], 1.5);
  EXPECT_DOUBLE_EQ(v[2], 0.5);
}

TEST(BatchNorm, RunningStatisticsUseMomentumAndUnbiasedVariance) {
  GraphF64 g;
  TensorF64 x(Dims{2, 1, 1, 2}, std::vector<double>{1, 2, 3, 6});
  TensorF64 mean(Dims{1}, 0.0), var(Dims{1}, 1.0);
  nn::batch_norm(g, g.input(x), g.input(TensorF64(Dims{1}, 1.0)), g.input(TensorF64(Dims{1}, 0.0)),
                 nn::BatchNormRunning<double>{&mean, &var}, nn::BatchNormOptions{});
  // Batch mean 3, unbiased variance 14 / 3.
  EXPECT_DOUBLE_EQ(mean[0], 0.3);
  EXPECT_NEAR(var[0], 0.9 + 0.1 * 14.0 / 3.0, 1e-15);
}

TEST(Softmax, SumsToOneAndIsShiftInvariant) {
  const std::vector<double> logits{1.0, 3.0, -2.0, 0.5};
  const auto p = nn::softmax(logits);
  double s = 0.0;
  for (double v : p) s += v;
  EXPECT_NEAR(s, 1.0, 1e-12);
  std::vector<double> shifted(logits);
  for (double& v : shifted) v += 100.0;
  const auto q = nn::softmax(shifted);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
}

TEST(Graph, BackwardRequiresScalarLoss) {
  GraphF64 g;
  const Var p = g.parameter(TensorF64(Dims{2}, 1.0));
  EXPECT_THROW(g.backward(p), ContractError);
}

// Projects an op output onto fixed random weights so every element of the
// output contributes to the scalar loss.
Var weighted_sum(GraphF64& g, Var y, std::uint64_t seed) {
  Rng rng(seed);
  const Var w = g.input(random_tensor<double>(g.value(y).dims(), rng));
  return nn::sum(g, nn::mul(g, y, w));
}

struct OpCase {
  std::string name;
  nn::LossBuilder build;
  std::vector<TensorF64> leaves;
};

std::vector<OpCase> gradient_cases() {
  Rng rng(42);
  std::vector<OpCase> cases;
  auto r = [&](Dims d, double lo = -1.0, double hi = 1.0) { return random_tensor<double>(d, rng, lo, hi); };

  for (int i = 0; i < 4; ++i) {
    const int n = 1 + i % 2, cin = 1 + i, cout = 2 + i % 3, h = 5 + i, w = 4 + 2 * i;
    const int stride = 1 + i % 2, pad = i % 3, dil = 1 + (i == 3);
    cases.push_back({"conv2d#" + std::to_string(i),
                     [=](GraphF64& g, std::span<const Var> v) {
                       return weighted_sum(g, nn::conv2d(g, v[0], v[1], v[2], nn::Conv2dOptions{stride, pad, dil}), 7);
                     },
                     {r({n, cin, h, w}), r({cout, cin, 3, 3}), r({cout})}});
  }
  for (int i = 0; i < 2; ++i) {
    cases.push_back({"conv_transpose2d#" + std::to_string(i),
                     [](GraphF64& g, std::span<const Var> v) {
                       return weighted_sum(g, nn::conv_transpose2d(g, v[0], v[1], v[2], nn::ConvTranspose2dOptions{}), 8);
                     },
                     {r({1 + i, 2, 3 + i, 4}), r({2, 3, 4, 4}), r({3})}});
  }
  for (int i = 0; i < 2; ++i) {
    const bool training = i == 0;
    cases.push_back({std::string("batch_norm/") + (training ? "train" : "eval"),
                     [training](GraphF64& g, std::span<const Var> v) {
                       TensorF64 mean(Dims{3}, 0.1), var(Dims{3}, 1.3);
                       nn::BatchNormOptions opt;
                       opt.training = training;
                       return weighted_sum(
                           g, nn::batch_norm(g, v[0], v[1], v[2], nn::BatchNormRunning<double>{&mean, &var}, opt), 9);
                     },
                     {r({2, 3, 3, 4}), r({3}, 0.5, 1.5), r({3})}});
  }
  cases.push_back({"relu", [](GraphF64& g, std::span<const Var> v) { return weighted_sum(g, nn::relu(g, v[0]), 10); },
                   {r({2, 3, 4, 4})}});
  cases.push_back({"tanh", [](GraphF64& g, std::span<const Var> v) { return weighted_sum(g, nn::tanh(g, v[0]), 11); },
                   {r({1, 2, 5, 3}, -2.0, 2.0)}});
  cases.push_back({"concat_channels",
                   [](GraphF64& g, std::span<const Var> v) {
                     const std::array<Var, 3> xs{v[0], v[1], v[2]};
                     return weighted_sum(g, nn::concat_channels(g, std::span<const Var>(xs)), 12);
                   },
                   {r({2, 1, 3, 3}), r({2, 2, 3, 3}), r({2, 3, 3, 3})}});
  cases.push_back({"slice_batch",
                   [](GraphF64& g, std::span<const Var> v) {
                     const Var y = nn::slice_batch(g, v[0], 1, 3);
                     return nn::add(g, weighted_sum(g, y, 20), weighted_sum(g, nn::mul(g, y, y), 21));
                   },
                   {r({4, 2, 3, 2})}});
  for (int i = 0; i < 2; ++i) {
    const int oh = i == 0 ? 8 : 5, ow = i == 0 ? 6 : 9;
    cases.push_back({"upsample_bilinear#" + std::to_string(i),
                     [=](GraphF64& g, std::span<const Var> v) {
                       return weighted_sum(g, nn::upsample_bilinear(g, v[0], oh, ow), 13);
                     },
                     {r({1, 2, 3 + i, 3})}});
  }
  cases.push_back({"add", [](GraphF64& g, std::span<const Var> v) { return weighted_sum(g, nn::add(g, v[0], v[1]), 14); },
                   {r({2, 2, 3, 3}), r({2, 2, 3, 3})}});
  cases.push_back({"sub", [](GraphF64& g, std::span<const Var> v) { return weighted_sum(g, nn::sub(g, v[0], v[1]), 15); },
                   {r({3, 4}), r({3, 4})}});
  cases.push_back({"mul", [](GraphF64& g, std::span<const Var> v) { return weighted_sum(g, nn::mul(g, v[0], v[1]), 16); },
                   {r({1, 3, 2, 5}), r({1, 3, 2, 5})}});
  cases.push_back({"scale", [](GraphF64& g, std::span<const Var> v) { return weighted_sum(g, nn::scale(g, v[0], -2.5), 17); },
                   {r({4, 2})}});
  cases.push_back({"sum", [](GraphF64& g, std::span<const Var> v) {
                     const Var s = nn::sum(g, v[0]);
                     return nn::mul(g, s, s);
                   },
                   {r({2, 3, 2})}});
  cases.push_back({"spatial_mean",
                   [](GraphF64& g, std::span<const Var> v) { return weighted_sum(g, nn::spatial_mean(g, v[0]), 18); },
                   {r({2, 3, 4, 5})}});
  cases.push_back({"smooth_l1",
                   [](GraphF64& g, std::span<const Var> v) { return weighted_sum(g, nn::smooth_l1(g, v[0], v[1]), 19); },
                   {r({2, 2, 4, 4}, -2.0, 2.0), r({2, 2, 4, 4}, -2.0, 2.0)}});
  cases.push_back({"softmax_cross_entropy",
                   [](GraphF64& g, std::span<const Var> v) {
                     const std::vector<int> labels{2, 0, 3};
                     return nn::softmax_cross_entropy(g, v[0], labels);
                   },
                   {r({3, 4, 1, 1}, -2.0, 2.0)}});
  return cases;
}

TEST(GradCheck, EveryOpMatchesFiniteDifferences) {
  const auto start = std::chrono::steady_clock::now();
  const auto cases = gradient_cases();
  ASSERT_GE(cases.size(), 20u);
  for (const OpCase& c : cases) {
    const nn::GradCheckResult r = nn::check_gradients(c.build, c.leaves);
    EXPECT_LT(r.max_relative_error, 1e-4) << c.name << " leaf " << r.worst_leaf << " index " << r.worst_index
                                          << " analytic " << r.analytic << " numeric " << r.numeric;
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 60.0);
}

TEST(Adam, FirstStepMovesByLearningRateTimesSign) {
  nn::Tensor p(Dims{3}, std::vector<float>{1.0f, -1.0f, 0.5f});
  const nn::Tensor grad(Dims{3}, std::vector<float>{0.2f, -3.0f, 0.0f});
  nn::AdamState state;
  state.options.lr = 0.01;
  nn::Tensor* ps[] = {&p};
  const nn::Tensor* gs[] = {&grad};
  nn::adam_step(ps, gs, state);
  EXPECT_NEAR(p[0], 1.0f - 0.01f, 1e-6);
  EXPECT_NEAR(p[1], -1.0f + 0.01f, 1e-6);
  EXPECT_FLOAT_EQ(p[2], 0.5f);
}

TEST(Adam, MismatchedShapesAreRejected) {
  nn::Tensor p(Dims{3});
  const nn::Tensor grad(Dims{2});
  nn::AdamState state;
  nn::Tensor* ps[] = {&p};
  const nn::Tensor* gs[] = {&grad};
  EXPECT_THROW(nn::adam_step(ps, gs, state), ShapeError);
}

TEST(Weights, CwtsRoundTripIsBitExact) {
  Rng rng(3);
  nn::ModelWeights w;
  w.set("b.weight", random_tensor(Dims{2, 3, 3, 3}, rng));
  w.set("a.bias", random_tensor(Dims{5}, rng));
  const auto bytes = w.serialize();
  const nn::ModelWeights back = nn::ModelWeights::deserialize(bytes);
  EXPECT_EQ(back, w);
  EXPECT_EQ(back.serialize(), bytes);
  testing::TempDir dir("weights");
  w.save(dir / "w.cwts");
  EXPECT_EQ(read_file(dir / "w.cwts"), bytes);
}

TEST(Weights, CwtsLayoutIsExact) {
  nn::ModelWeights w;
  w.set("x", nn::Tensor(Dims{2}, std::vector<float>{1.0f, -2.0f}));
  const auto b = w.serialize();
  const std::vector<std::uint8_t> expect{'C', 'W', 'T', 'S', 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 'x', 0, 1,
                                         2, 0, 0, 0, 0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0};
  EXPECT_EQ(b, expect);
}

TEST(Weights, MalformedInputsFailToLoad) {
  nn::ModelWeights w;
  w.set("x", nn::Tensor(Dims{2}, 1.0f));
  auto bytes = w.serialize();
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(nn::ModelWeights::deserialize(truncated), LoadError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(nn::ModelWeights::deserialize(magic), LoadError);
  auto dtype = bytes;
  dtype[15] = 1;
  EXPECT_THROW(nn::ModelWeights::deserialize(dtype), LoadError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(nn::ModelWeights::deserialize(trailing), LoadError);
  EXPECT_THROW(w.require("y", Dims{2}), LoadError);
  EXPECT_THROW(w.require("x", Dims{3}), LoadError);
}

TEST(Rng, SeededStreamsRepeat) {
  Rng a(9), b(9);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next(), b.next());
  Rng c(9);
  EXPECT_EQ(c.below(10), Rng(9).below(10));
}

TEST(KaimingUniform, RespectsBound) {
  Rng rng(4);
  const nn::Tensor t = nn::kaiming_uniform(Dims{8, 4, 3, 3}, 36, rng);
  const double bound = std::sqrt(6.0 / 36.0);
  for (float v : t.data()) EXPECT_LE(std::abs(v), bound);
}

}  // namespace
}  // namespace chromatix
