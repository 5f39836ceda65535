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

#include <benchmark/benchmark.h>

#include "chromatix/colornet.hpp"
#include "chromatix/correspondence.hpp"
#include "chromatix/ops.hpp"
#include "chromatix/retrieval.hpp"
#include "chromatix/synthetic.hpp"

namespace chromatix {
namespace {

nn::Tensor random_tensor(const nn::Dims& dims, std::uint64_t seed) {
  Rng rng(seed);
  nn::Tensor t(dims);
  for (float& v : t.storage()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

image::LabImage toy(int pattern, int size, std::uint64_t seed) {
  return image::rgb_to_lab(synthetic::render(static_cast<synthetic::Pattern>(pattern), size, size, seed));
}

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const nn::Tensor x = random_tensor({1, 16, size, size}, 1), w = random_tensor({16, 16, 3, 3}, 2),
                   b = random_tensor({16}, 3);
  for (auto _ : state) {
    nn::Graph g;
    const nn::Var xv = g.input(x), wv = g.parameter(w), bv = g.parameter(b);
    const nn::Var y = nn::conv2d(g, xv, wv, bv, nn::Conv2dOptions{1, 1, 1});
    g.backward(nn::sum(g, y));
    benchmark::DoNotOptimize(g.grad(wv));
  }
  state.SetItemsProcessed(state.iterations() * size * size);
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_EncoderExtract(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const auto enc = encoder::Encoder::initialize(encoder::EncoderConfig::toy(), 1);
  const image::LabImage img = toy(2, size, 4);
  for (auto _ : state) benchmark::DoNotOptimize(enc.extract(img.L));
}
BENCHMARK(BM_EncoderExtract)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_PatchMatch(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const auto enc = encoder::Encoder::initialize(encoder::EncoderConfig::toy(), 1);
  const auto ft = enc.extract(toy(2, size, 5).L), fr = enc.extract(toy(2, size, 6).L);
  for (auto _ : state) benchmark::DoNotOptimize(match::bidirectional(ft, fr, match::MatchConfig{}));
}
BENCHMARK(BM_PatchMatch)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_ColorizeEndToEnd(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const auto enc = encoder::Encoder::initialize(encoder::EncoderConfig::toy(), 1);
  const auto net = colornet::ColorNet::initialize(colornet::NetConfig::toy(), 2);
  const image::LabImage target = toy(0, size, 7), reference = toy(0, size, 8);
  for (auto _ : state) benchmark::DoNotOptimize(colornet::colorize(target.L, reference, enc, match::MatchConfig{}, net));
}
BENCHMARK(BM_ColorizeEndToEnd)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Recommend(benchmark::State& state) {
  const auto enc = encoder::Encoder::initialize(encoder::EncoderConfig::toy(1, synthetic::kPatterns), 1);
  std::vector<image::Plane> planes;
  std::vector<std::string> names;
  for (const auto& item : synthetic::corpus(static_cast<int>(state.range(0)) / 4, 64, 9)) {
    planes.push_back(image::rgb_to_lab(item.image).L);
    names.push_back(item.name);
  }
  const auto index = retrieval::build_index_from_planes(planes, names, enc, retrieval::IndexBuildOptions{});
  const image::Plane query = toy(3, 64, 10).L;
  for (auto _ : state) benchmark::DoNotOptimize(retrieval::recommend(query, enc, index, 5));
}
BENCHMARK(BM_Recommend)->Arg(40)->Arg(160)->Unit(benchmark::kMillisecond);

void BM_PcaFit(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  Rng rng(11);
  std::vector<std::vector<float>> rows(static_cast<std::size_t>(4 * dim), std::vector<float>(static_cast<std::size_t>(dim)));
  for (auto& r : rows)
    for (float& v : r) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (auto _ : state) benchmark::DoNotOptimize(retrieval::PcaModel::fit(rows, dim / 2));
}
BENCHMARK(BM_PcaFit)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace chromatix

BENCHMARK_MAIN();
