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

// Acceptance suite: one PASS/FAIL line per primary criterion. Exit status is
// the number of failed criteria.

#include <Eigen/Dense>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "chromatix/bytes.hpp"
#include "chromatix/colornet.hpp"
#include "chromatix/correspondence.hpp"
#include "chromatix/fusion.hpp"
#include "chromatix/gradcheck.hpp"
#include "chromatix/ops.hpp"
#include "chromatix/retrieval.hpp"
#include "chromatix/sampler.hpp"
#include "chromatix/synthetic.hpp"
#include "chromatix/training.hpp"
#include "test_support.hpp"

namespace chromatix::acceptance {
namespace {

using nn::Dims;
using nn::GraphF64;
using nn::TensorF64;
using nn::Var;
using testing::random_tensor;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// --- differentiation ---------------------------------------------------------

Var weighted_sum(GraphF64& g, Var y, std::uint64_t seed) {
  Rng rng(seed);
  const Var w = g.input(random_tensor<double>(g.value(y).dims(), rng));
  return nn::sum(g, nn::mul(g, y, w));
}

struct GradCase {
  std::string name;
  nn::LossBuilder build;
  std::vector<TensorF64> leaves;
};

std::vector<GradCase> gradient_cases(Rng& rng) {
  std::vector<GradCase> cases;
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); };
  auto r = [&](Dims d, double lo = -1.0, double hi = 1.0) { return random_tensor<double>(d, rng, lo, hi); };
  for (int rep = 0; rep < 2; ++rep) {
    const std::string tag = "#" + std::to_string(rep);
    const int n = pick(1, 2), c = pick(1, 3), h = pick(3, 6), w = pick(3, 6);
    {
      const int cout = pick(1, 3), stride = pick(1, 2), pad = pick(0, 2), dil = pick(1, 2);
      const int hh = h + 2 * dil, ww = w + 2 * dil;
      cases.push_back({"conv2d" + tag,
                       [=](GraphF64& g, std::span<const Var> v) {
                         return weighted_sum(g, nn::conv2d(g, v[0], v[1], v[2], nn::Conv2dOptions{stride, pad, dil}), 1);
                       },
                       {r({n, c, hh, ww}), r({cout, c, 3, 3}), r({cout})}});
    }
    {
      const int cout = pick(1, 3);
      cases.push_back({"conv_transpose2d" + tag,
                       [](GraphF64& g, std::span<const Var> v) {
                         return weighted_sum(g, nn::conv_transpose2d(g, v[0], v[1], v[2], nn::ConvTranspose2dOptions{}), 2);
                       },
                       {r({n, c, h, w}), r({c, cout, 4, 4}), r({cout})}});
    }
    for (const bool training : {true, false}) {
      cases.push_back({std::string("batch_norm/") + (training ? "train" : "eval") + tag,
                       [training](GraphF64& g, std::span<const Var> v) {
                         const int ch = g.value(v[0]).channels();
                         TensorF64 mean(Dims{ch}, 0.1), var(Dims{ch}, 1.3);
                         nn::BatchNormOptions opt;
                         opt.training = training;
                         return weighted_sum(
                             g, nn::batch_norm(g, v[0], v[1], v[2], nn::BatchNormRunning<double>{&mean, &var}, opt), 3);
                       },
                       {r({2, c, h, w}), r({c}, 0.5, 1.5), r({c})}});
    }
    cases.push_back({"relu" + tag,
                     [](GraphF64& g, std::span<const Var> v) { return weighted_sum(g, nn::relu(g, v[0]), 4); },
                     {r({n, c, h, w})}});
    cases.push_back({"tanh" + tag,
                     [](GraphF64& g, std::span<const Var> v) { return weighted_sum(g, nn::tanh(g, v[0]), 5); },
                     {r({n, c, h, w}, -2.0, 2.0)}});
    cases.push_back({"concat_channels" + tag,
                     [](GraphF64& g, std::span<const Var> v) {
                       const std::array<Var, 2> xs{v[0], v[1]};
                       return weighted_sum(g, nn::concat_channels(g, std::span<const Var>(xs)), 6);
                     },
                     {r({n, c, h, w}), r({n, pick(1, 3), h, w})}});
    {
      const int items = pick(2, 4), begin = pick(0, items - 1), end = pick(begin + 1, items);
      cases.push_back({"slice_batch" + tag,
                       [=](GraphF64& g, std::span<const Var> v) {
                         const Var y = nn::slice_batch(g, v[0], begin, end);
                         return nn::add(g, weighted_sum(g, y, 7), weighted_sum(g, nn::mul(g, y, y), 8));
                       },
                       {r({items, c, h, w})}});
    }
    {
      const int oh = pick(2, 9), ow = pick(2, 9);
      cases.push_back({"upsample_bilinear" + tag,
                       [=](GraphF64& g, std::span<const Var> v) {
                         return weighted_sum(g, nn::upsample_bilinear(g, v[0], oh, ow), 9);
                       },
                       {r({n, c, h, w})}});
    }
    cases.push_back({"add" + tag,
                     [](GraphF64& g, std::span<const Var> v) { return weighted_sum(g, nn::add(g, v[0], v[1]), 10); },
                     {r({n, c, h, w}), r({n, c, h, w})}});
    cases.push_back({"sub" + tag,
                     [](GraphF64& g, std::span<const Var> v) { return weighted_sum(g, nn::sub(g, v[0], v[1]), 11); },
                     {r({n, c, h, w}), r({n, c, h, w})}});
    cases.push_back({"mul" + tag,
                     [](GraphF64& g, std::span<const Var> v) { return weighted_sum(g, nn::mul(g, v[0], v[1]), 12); },
                     {r({n, c, h, w}), r({n, c, h, w})}});
    {
      const double s = rng.uniform(-3.0, 3.0);
      cases.push_back({"scale" + tag,
                       [=](GraphF64& g, std::span<const Var> v) { return weighted_sum(g, nn::scale(g, v[0], s), 13); },
                       {r({n, c, h, w})}});
    }
    cases.push_back({"sum" + tag,
                     [](GraphF64& g, std::span<const Var> v) {
                       const Var s = nn::sum(g, v[0]);
                       return nn::mul(g, s, s);
                     },
                     {r({n, c, h, w})}});
    cases.push_back({"spatial_mean" + tag,
                     [](GraphF64& g, std::span<const Var> v) { return weighted_sum(g, nn::spatial_mean(g, v[0]), 14); },
                     {r({n, c, h, w})}});
    cases.push_back({"smooth_l1" + tag,
                     [](GraphF64& g, std::span<const Var> v) { return weighted_sum(g, nn::smooth_l1(g, v[0], v[1]), 15); },
                     {r({n, c, h, w}, -2.0, 2.0), r({n, c, h, w}, -2.0, 2.0)}});
    {
      const int items = pick(1, 4), classes = pick(2, 5);
      std::vector<int> labels;
      for (int i = 0; i < items; ++i) labels.push_back(pick(0, classes - 1));
      cases.push_back({"softmax_cross_entropy" + tag,
                       [labels](GraphF64& g, std::span<const Var> v) { return nn::softmax_cross_entropy(g, v[0], labels); },
                       {r({items, classes, 1, 1}, -2.0, 2.0)}});
    }
  }
  return cases;
}

Outcome differentiation() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2026);
  const auto cases = gradient_cases(rng);
  double worst = 0.0;
  std::string worst_name;
  for (const GradCase& c : cases) {
    const nn::GradCheckResult r = nn::check_gradients(c.build, c.leaves);
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      worst_name = c.name;
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && cases.size() >= 20 && secs < 60.0,
          std::to_string(cases.size()) + " shapes, max rel err " + fmt("%.2e", worst) + " (" + worst_name + "), " +
              fmt("%.1f", secs) + " s"};
}

// --- similarity maps -----------------------------------------------------------

std::vector<std::vector<double>> upsample_oracle(const nn::Tensor& m, int ow, int oh) {
  const int c = m.dim(0), h = m.dim(1), w = m.dim(2);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(ow * oh), std::vector<double>(static_cast<std::size_t>(c)));
  auto src = [](int d, int in, int outn) { return std::clamp((d + 0.5) * in / outn - 0.5, 0.0, double(in - 1)); };
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const double sy = src(y, h, oh), sx = src(x, w, ow);
      const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
      const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
      const double fy = sy - y0, fx = sx - x0;
      for (int k = 0; k < c; ++k) {
        auto v = [&](int yy, int xx) { return double(m[(static_cast<std::size_t>(k) * h + yy) * w + xx]); };
        out[static_cast<std::size_t>(y * ow + x)][static_cast<std::size_t>(k)] =
            (1 - fy) * ((1 - fx) * v(y0, x0) + fx * v(y0, x1)) + fy * ((1 - fx) * v(y1, x0) + fx * v(y1, x1));
      }
    }
  return out;
}

double cosine_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return na == 0 || nb == 0 ? 0.0 : d / std::sqrt(na * nb);
}

match::MappingField random_field(int w, int h, int tw, int th, Rng& rng) {
  match::MappingField f(w, h, tw, th);
  for (match::Coord& c : f.map) {
    c = {static_cast<int>(rng.below(static_cast<std::uint64_t>(tw))), static_cast<int>(rng.below(static_cast<std::uint64_t>(th)))};
  }
  return f;
}

// Level 1 at `size`, level 2 at half; coarser levels shrink to 1x1.
encoder::FeaturePyramid random_pyramid(int channels, int size, Rng& rng) {
  encoder::FeaturePyramid p;
  for (int i = 0; i < encoder::kLevels; ++i) {
    const int s = std::max(1, size >> i);
    p.levels[static_cast<std::size_t>(i)] = random_tensor(Dims{channels + i, s, s}, rng);
  }
  return p;
}

Outcome similarity() {
  Rng rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = random_pyramid(3, 4, rng), r = random_pyramid(3, 4, rng);
    const auto t2r = random_field(4, 4, 4, 4, rng), r2t = random_field(4, 4, 4, 4, rng);
    const fusion::SimilarityMaps maps = fusion::similarity_maps(t, r, t2r, r2t);
    for (std::size_t i = 0; i < encoder::kLevels; ++i) {
      const auto ft = upsample_oracle(t.levels[i], 4, 4), fr = upsample_oracle(r.levels[i], 4, 4);
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
          const match::Coord q = t2r.at(x, y), back = r2t.at(q);
          const auto& fq = fr[static_cast<std::size_t>(q.y * 4 + q.x)];
          const double fwd = cosine_oracle(ft[static_cast<std::size_t>(y * 4 + x)], fq);
          const double bwd = cosine_oracle(ft[static_cast<std::size_t>(back.y * 4 + back.x)], fq);
          worst = std::max(worst, std::abs(maps.target_to_reference[i].at(x, y) - fwd));
          worst = std::max(worst, std::abs(maps.reference_to_target[i].at(x, y) - bwd));
        }
    }
  }
  double self_dev = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    const auto p = random_pyramid(4, 8 << trial, rng);
    const auto id = match::MappingField::identity(8 << trial, 8 << trial);
    const auto maps = fusion::similarity_maps(p, p, id, id);
    for (int c = 0; c < fusion::kSimilarityChannels; ++c)
      for (float v : maps.channel(c).data) self_dev = std::max(self_dev, std::abs(double(v) - 1.0));
  }
  return {worst < 1e-6 && self_dev < 1e-6,
          "max oracle diff " + fmt("%.2e", worst) + ", self-match max |s-1| " + fmt("%.2e", self_dev)};
}

// --- fake reference ----------------------------------------------------------------

Outcome fake_reference() {
  Rng rng(12);
  bool identity_exact = true, random_exact = true;
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int tw = 3 + static_cast<int>(rng.below(10)), th = 3 + static_cast<int>(rng.below(10));
    const int rw = 3 + static_cast<int>(rng.below(10)), rh = 3 + static_cast<int>(rng.below(10));
    image::Plane a(tw, th), b(tw, th);
    for (float& v : a.data) v = static_cast<float>(rng.uniform(-110, 110));
    for (float& v : b.data) v = static_cast<float>(rng.uniform(-110, 110));
    const auto id = match::MappingField::identity(tw, th);
    const fusion::Chrominance same = fusion::fake_reference(a, b, id, id);
    identity_exact = identity_exact && same.a == a && same.b == b;

    const auto t2r = random_field(tw, th, rw, rh, rng), r2t = random_field(rw, rh, tw, th, rng);
    const fusion::Chrominance f = fusion::fake_reference(a, b, t2r, r2t);
    for (int y = 0; y < th; ++y)
      for (int x = 0; x < tw; ++x) {
        const match::Coord p = r2t.at(t2r.at(x, y));
        random_exact = random_exact && f.a.at(x, y) == a.at(p.x, p.y) && f.b.at(x, y) == b.at(p.x, p.y);
        ++checked;
      }
  }
  return {identity_exact && random_exact, std::string("identity ") + (identity_exact ? "bit-exact" : "differs") +
                                              ", random fields " + (random_exact ? "exact" : "differ") + " over " +
                                              std::to_string(checked) + " pixels"};
}

// --- PatchMatch -------------------------------------------------------------------

Outcome patchmatch() {
  Rng rng(13);
  double worst_ratio = 0.0, ratio_sum = 0.0;
  bool monotone = true;
  for (int problem = 0; problem < 20; ++problem) {
    const std::vector<nn::Tensor> src{random_tensor(Dims{16, 8, 8}, rng)};
    const std::vector<nn::Tensor> dst{random_tensor(Dims{16, 8, 8}, rng)};
    match::MatchConfig cfg;
    cfg.levels = 1;
    cfg.seed = static_cast<std::uint64_t>(problem);
    double previous = std::numeric_limits<double>::infinity();
    const auto field = match::nnf(src, dst, cfg, [&](int, int, double total) {
      monotone = monotone && total <= previous + 1e-9;
      previous = total;
    });
    const match::NormalizedFeatures s(src[0]), t(dst[0]);
    double best = 0.0;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        double b = std::numeric_limits<double>::infinity();
        for (int ty = 0; ty < 8; ++ty)
          for (int tx = 0; tx < 8; ++tx) b = std::min(b, match::patch_cost(s, t, {x, y}, {tx, ty}, cfg.patch_radius));
        best += b;
      }
    best /= 64.0;
    const double ratio = match::mean_field_cost(s, t, field, cfg.patch_radius) / best;
    worst_ratio = std::max(worst_ratio, ratio);
    ratio_sum += ratio;
  }
  return {worst_ratio <= 1.05 && monotone, "cost / optimum: max " + fmt("%.4f", worst_ratio) + ", mean " +
                                               fmt("%.4f", ratio_sum / 20.0) + ", iterations " +
                                               (monotone ? "non-increasing" : "INCREASE seen")};
}

// --- PCA ------------------------------------------------------------------------------

Outcome pca() {
  Rng rng(14);
  std::vector<std::vector<float>> rows(50, std::vector<float>(16));
  for (auto& r : rows)
    for (float& v : r) v = static_cast<float>(rng.uniform(-1, 1));
  Eigen::MatrixXd x(50, 16);
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 16; ++j) x(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  x.rowwise() -= x.colwise().mean();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
  double worst_angle = 0.0;
  for (int k : {1, 2, 4, 8, 12, 16}) {
    const auto m = retrieval::PcaModel::fit(rows, k);
    Eigen::MatrixXd w(k, 16);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < 16; ++j) w(i, j) = m.components()[static_cast<std::size_t>(i * 16 + j)];
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(w.transpose());
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(16, k);
    const Eigen::VectorXd cosines =
        Eigen::JacobiSVD<Eigen::MatrixXd>(q.transpose() * svd.matrixV().leftCols(k)).singularValues();
    for (int i = 0; i < k; ++i) worst_angle = std::max(worst_angle, std::acos(std::min(1.0, cosines(i))));
  }
  const auto full = retrieval::PcaModel::fit(rows, 16);
  double worst_recon = 0.0;
  for (const auto& r : rows) {
    const auto back = full.back_project(full.project(r));
    for (std::size_t j = 0; j < r.size(); ++j) worst_recon = std::max(worst_recon, std::abs(back[j] - r[j]));
  }
  return {worst_angle < 1e-6 && worst_recon < 1e-5,
          "max principal angle " + fmt("%.2e", worst_angle) + " rad, full-rank reconstruction " + fmt("%.2e", worst_recon)};
}

// --- local ranking ----------------------------------------------------------------------

Outcome local_ranking() {
  retrieval::ReferenceIndex index;
  const std::vector<std::vector<float>> basis{{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  index.pca_local = retrieval::PcaModel::fit(basis, 2);
  index.pca_global = retrieval::PcaModel::fit(basis, 2);
  retrieval::IndexEntry e;
  e.grid_width = 2;
  e.grid_height = 1;
  e.global = {1, 0};
  e.local = {1, 1, -1, 2};
  e.histograms.resize(2);
  e.histograms[0].bins[3] = 2;
  e.histograms[0].bins[4] = 5;
  e.histograms[0].total = 7;
  e.histograms[1].bins[1] = 1;
  e.histograms[1].total = 1;
  index.entries.push_back(e);
  retrieval::QueryDescriptors q;
  q.grid_width = 2;
  q.grid_height = 1;
  q.global = {1, 0};
  q.local = {1, 0, 0, 1};
  q.histograms.resize(2);
  q.histograms[0] = e.histograms[0];
  q.histograms[1].bins[0] = 1;
  q.histograms[1].total = 1;
  // Cell 0: cosine 1/sqrt(2), identical histograms. Cell 1: cosine 2/sqrt(5),
  // one-hot histograms in different bins of 32 correlate at -1/31.
  const double expect = 1.0 / std::sqrt(2.0) + 0.25 + 2.0 / std::sqrt(5.0) - 0.25 / 31.0;
  const double got = retrieval::local_score(q, e, 2, 0.25);
  const auto ranked = retrieval::local_rank(q, std::vector<retrieval::Candidate>{{0, 0.0}}, index);
  const double hand_err = std::max(std::abs(got - expect), std::abs(ranked.ranking.at(0).score - expect));
  const bool beta_ok = retrieval::RankOptions{}.beta == 0.25;

  const encoder::Encoder enc = testing::trained_gray_encoder();
  const auto items = synthetic::corpus(8, 48, 21);
  std::vector<image::Plane> planes;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < 30; ++i) {
    planes.push_back(image::rgb_to_lab(items[i].image).L);
    names.push_back(items[i].name);
  }
  const auto toy = retrieval::build_index_from_planes(planes, names, enc, retrieval::IndexBuildOptions{});
  int self_first = 0;
  for (std::uint32_t i = 0; i < 30; ++i) {
    const auto top = retrieval::recommend(planes[i], enc, toy, 1);
    self_first += !top.empty() && top[0].id == i;
  }
  return {hand_err < 1e-9 && beta_ok && self_first == 30,
          "hand fixture err " + fmt("%.1e", hand_err) + ", default beta " + fmt("%.2f", retrieval::RankOptions{}.beta) +
              ", self-duplicate first for " + std::to_string(self_first) + "/30 queries"};
}

// --- training -----------------------------------------------------------------------------

struct ToyRun {
  std::vector<image::LabImage> targets;
  training::TrainConfig config;
  std::optional<training::TrainResult> result;
  double seconds = 0.0;
  encoder::Encoder gray = testing::trained_gray_encoder();
  encoder::Encoder color = testing::trained_color_encoder();
  std::vector<training::PreparedPair> pairs;
};

image::LabImage crop32(const image::RgbImage& im, int ox, int oy) {
  image::RgbImage o(32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      for (int c = 0; c < 3; ++c) o.px(x, y)[c] = im.px(x + ox, y + oy)[c];
  return image::rgb_to_lab(o);
}

// Eight 32x32 targets, each paired with a crop of the same render offset by
// (4, 2) pixels.
ToyRun& toy_run() {
  static ToyRun run = [] {
    ToyRun r;
    for (int i = 0; i < 8; ++i) {
      const auto big = synthetic::render(static_cast<synthetic::Pattern>(i % 4), 44, 44, 100 + i);
      r.targets.push_back(crop32(big, 0, 0));
      r.pairs.push_back(training::prepare_pair(r.targets.back(), crop32(big, 4, 2), r.gray, r.config.match));
    }
    r.config.batch_size = 8;
    r.config.lr = 2e-3;
    r.config.lr_decay = 1.0;
    r.config.epochs = 1000;
    r.config.max_steps = 300;
    r.config.seed = 2;
    const auto t0 = std::chrono::steady_clock::now();
    r.result = training::train(r.pairs, r.color, r.config);
    r.seconds = seconds_since(t0);
    return r;
  }();
  return run;
}

Outcome two_branch_training() {
  ToyRun& run = toy_run();
  const double ratio = run.result->final.combined / run.result->initial.combined;
  bool split = run.result->history.size() == 300;
  for (const auto& s : run.result->history) split = split && s.chroma_items == 4 && s.perceptual_items == 4;

  training::TrainConfig zero = run.config;
  zero.alpha = 0.0;
  training::Trainer t(zero, colornet::ColorNet::initialize(zero.net, zero.seed), run.color, run.pairs);
  const auto [chroma, perceptual] = t.peek_batch();
  const training::GradientResult g = t.compute_gradients({}, perceptual, false);
  bool all_zero = g.loss.l_perc > 0.0;
  for (const auto& [name, grad] : g.grads)
    for (float v : grad.data()) all_zero = all_zero && v == 0.0f;
  const training::GradientResult both = t.compute_gradients(chroma, perceptual, false);
  const bool combined_is_chroma = both.loss.combined == both.loss.l_chrom;

  return {ratio < 0.01 && run.seconds < 600.0 && all_zero && combined_is_chroma && split,
          "loss " + fmt("%.2f", run.result->initial.combined) + " -> " + fmt("%.3f", run.result->final.combined) + " (" +
              fmt("%.3f", 100.0 * ratio) + "% of initial) in 300 steps, " + fmt("%.0f", run.seconds) +
              " s; alpha=0 perceptual gradients " + (all_zero && combined_is_chroma ? "all zero" : "NONZERO") +
              "; split " + (split ? "4/4 every step" : "UNEVEN")};
}

Outcome self_reference() {
  ToyRun& run = toy_run();
  double err = 0.0;
  std::size_t n = 0;
  for (const image::LabImage& t : run.targets) {
    const image::LabImage out = colornet::colorize(t.L, t, run.gray, run.config.match, run.result->net);
    for (std::size_t p = 0; p < out.a.data.size(); ++p) {
      err += std::abs(out.a.data[p] - t.a.data[p]) + std::abs(out.b.data[p] - t.b.data[p]);
      n += 2;
    }
  }
  const double mean = err / static_cast<double>(n);
  return {mean < 10.0, "mean |P_ab - T_ab| " + fmt("%.3f", mean) + " over 8 training targets"};
}

// --- determinism ----------------------------------------------------------------------------

Outcome determinism() {
  ToyRun& run = toy_run();
  testing::TempDir dir("acceptance");
  const colornet::ColorizationModel model{run.gray, run.result->net};
  model.save(dir / "model.cwts");
  const auto loaded = colornet::ColorizationModel::load(dir / "model.cwts");
  loaded.save(dir / "again.cwts");
  const bool cwts_exact = read_file(dir / "model.cwts") == read_file(dir / "again.cwts") &&
                          loaded.weights().digest() == model.weights().digest();

  const image::LabImage target = testing::toy_lab(2, 48, 31), reference = testing::toy_lab(2, 48, 32);
  match::MatchConfig mc;
  mc.seed = 17;
  const auto first = colornet::colorize(target.L, reference, model.matcher, mc, model.net);
  const auto second = colornet::colorize(target.L, reference, loaded.matcher, mc, loaded.net);
  const bool colorize_exact = first.L == second.L && first.a == second.a && first.b == second.b;

  std::vector<image::Plane> planes;
  std::vector<std::string> names;
  for (const auto& item : synthetic::corpus(3, 48, 5)) {
    planes.push_back(image::rgb_to_lab(item.image).L);
    names.push_back(item.name);
  }
  const auto index = retrieval::build_index_from_planes(planes, names, run.gray, retrieval::IndexBuildOptions{});
  index.save(dir / "index.cwix");
  const auto back = retrieval::ReferenceIndex::load(dir / "index.cwix");
  back.save(dir / "index2.cwix");
  const bool index_exact = back == index && read_file(dir / "index.cwix") == read_file(dir / "index2.cwix");

  return {cwts_exact && colorize_exact && index_exact,
          std::string("colorize ") + (colorize_exact ? "bit-identical" : "DIFFERS") + ", CWTS " +
              (cwts_exact ? "bit-exact" : "DIFFERS") + ", index " + (index_exact ? "bit-exact" : "DIFFERS")};
}

// --- sampler ----------------------------------------------------------------------------------

Outcome sampler() {
  std::vector<training::ImageRecord> images;
  std::map<std::uint32_t, std::vector<std::uint32_t>> top;
  training::PairSamplerConfig config;
  for (std::uint32_t i = 0; i < 30; ++i) images.push_back({i, static_cast<int>(i / 5)});
  for (const auto& r : images)
    for (std::uint32_t k = 0; k < 5; ++k) top[r.id].push_back(r.id / 5 * 5 + k);
  for (int c = 0; c < 6; ++c) config.category_of_class[c] = c / 3;
  const auto result = training::sample_pairs(images, top, config, 10000, 2026);
  std::array<int, training::kStrata> counts{};
  for (const auto& p : result.pairs) ++counts[static_cast<std::size_t>(p.stratum)];
  const double stat = training::chi_square(counts, config.proportions);
  const double p = training::chi_square_p_df2(stat);
  return {result.pairs.size() == 10000 && p > 0.01,
          std::to_string(counts[0]) + "/" + std::to_string(counts[1]) + "/" + std::to_string(counts[2]) +
              ", chi-square " + fmt("%.3f", stat) + ", p " + fmt("%.3f", p)};
}

int run_all() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"differentiation", differentiation},
      {"similarity-maps", similarity},
      {"fake-reference", fake_reference},
      {"patchmatch-optimality", patchmatch},
      {"pca-oracle", pca},
      {"local-ranking", local_ranking},
      {"two-branch-training", two_branch_training},
      {"self-reference-colorization", self_reference},
      {"pipeline-determinism", determinism},
      {"sampler-proportions", sampler},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed;
}

}  // namespace
}  // namespace chromatix::acceptance

int main() { return chromatix::acceptance::run_all(); }
