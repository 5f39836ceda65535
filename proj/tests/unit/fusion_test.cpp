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

#include <cmath>
#include <set>

#include "chromatix/fusion.hpp"
#include "test_support.hpp"

namespace chromatix::fusion {
namespace {

using match::Coord;
using match::MappingField;
using testing::random_tensor;

// Half-pixel bilinear resampling of one [C, H, W] map, written as loops.
std::vector<std::vector<double>> upsample_oracle(const nn::Tensor& m, int ow, int oh) {
  const int c = m.dim(0), h = m.dim(1), w = m.dim(2);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(ow * oh), std::vector<double>(static_cast<std::size_t>(c)));
  auto src = [](int d, int in, int outn) {
    const double s = (d + 0.5) * in / outn - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(in - 1));
  };
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const double sy = src(y, h, oh), sx = src(x, w, ow);
      const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
      const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
      const double fy = sy - y0, fx = sx - x0;
      for (int k = 0; k < c; ++k) {
        auto v = [&](int yy, int xx) { return static_cast<double>(m[(static_cast<std::size_t>(k) * h + yy) * w + xx]); };
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
  if (na == 0 || nb == 0) return 0;
  return d / std::sqrt(na * nb);
}

MappingField random_field(int w, int h, int tw, int th, Rng& rng) {
  MappingField f(w, h, tw, th);
  for (Coord& c : f.map) c = {static_cast<int>(rng.below(static_cast<std::uint64_t>(tw))), static_cast<int>(rng.below(static_cast<std::uint64_t>(th)))};
  return f;
}

encoder::FeaturePyramid random_pyramid(int channels, int size, Rng& rng) {
  encoder::FeaturePyramid p;
  for (int i = 0; i < encoder::kLevels; ++i) {
    const int s = std::max(1, size >> i);
    p.levels[static_cast<std::size_t>(i)] = random_tensor(nn::Dims{channels + i, s, s}, rng);
  }
  return p;
}

TEST(Cosine, KnownValues) {
  const std::vector<float> x{1, 0}, y{0, 1}, u{1, 1}, v{2, 2}, z{0, 0};
  EXPECT_DOUBLE_EQ(cosine(x, x), 1.0);
  EXPECT_DOUBLE_EQ(cosine(x, y), 0.0);
  EXPECT_NEAR(cosine(u, v), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(cosine(z, u), 0.0);
  const std::vector<float> three{1, 2, 3};
  EXPECT_THROW(cosine(x, three), ContractError);
}

TEST(SimilarityMaps, MatchesLoopOracleOnTwoLevelFixtures) {
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    // 4x4 level 1 and 2x2 level 2; coarser levels are 1x1.
    const auto t = random_pyramid(3, 4, rng), r = random_pyramid(3, 4, rng);
    const MappingField t2r = random_field(4, 4, 4, 4, rng), r2t = random_field(4, 4, 4, 4, rng);
    const SimilarityMaps maps = similarity_maps(t, r, t2r, r2t);
    for (int i = 0; i < encoder::kLevels; ++i) {
      const auto ft = upsample_oracle(t.levels[static_cast<std::size_t>(i)], 4, 4);
      const auto fr = upsample_oracle(r.levels[static_cast<std::size_t>(i)], 4, 4);
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
          const Coord q = t2r.at(x, y), back = r2t.at(q);
          const double fwd = cosine_oracle(ft[static_cast<std::size_t>(y * 4 + x)], fr[static_cast<std::size_t>(q.y * 4 + q.x)]);
          const double bwd = cosine_oracle(ft[static_cast<std::size_t>(back.y * 4 + back.x)], fr[static_cast<std::size_t>(q.y * 4 + q.x)]);
          ASSERT_NEAR(maps.target_to_reference[static_cast<std::size_t>(i)].at(x, y), fwd, 1e-6);
          ASSERT_NEAR(maps.reference_to_target[static_cast<std::size_t>(i)].at(x, y), bwd, 1e-6);
        }
    }
  }
}

TEST(SimilarityMaps, SelfMatchIsOne) {
  Rng rng(2);
  const auto p = random_pyramid(4, 16, rng);
  const auto id = MappingField::identity(16, 16);
  const SimilarityMaps maps = similarity_maps(p, p, id, id);
  for (int c = 0; c < kSimilarityChannels; ++c)
    for (float v : maps.channel(c).data) ASSERT_NEAR(v, 1.0f, 1e-6);
}

TEST(SimilarityMaps, OrthogonalLevelIsZero) {
  Rng rng(3);
  auto t = random_pyramid(4, 8, rng), r = random_pyramid(4, 8, rng);
  // Level 2: target lives in channels 0-1, reference in channels 2-4.
  for (std::size_t i = 0; i < t.levels[1].size(); ++i) {
    const std::size_t c = i / (4 * 4);
    if (c >= 2) t.levels[1][i] = 0.0f;
    if (c < 2) r.levels[1][i] = 0.0f;
  }
  const SimilarityMaps maps = similarity_maps(t, r, random_field(8, 8, 8, 8, rng), random_field(8, 8, 8, 8, rng));
  for (float v : maps.target_to_reference[1].data) ASSERT_NEAR(v, 0.0f, 1e-7);
  for (float v : maps.reference_to_target[1].data) ASSERT_NEAR(v, 0.0f, 1e-7);
}

TEST(SimilarityMaps, RangeAndCycleConsistentPixelsAgree) {
  Rng rng(4);
  const auto t = random_pyramid(5, 12, rng), r = random_pyramid(5, 12, rng);
  // A permutation and its inverse: every pixel is cycle consistent.
  MappingField t2r(12, 12, 12, 12), r2t(12, 12, 12, 12);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) {
      t2r.at(x, y) = {11 - x, (y + 5) % 12};
      r2t.at(11 - x, (y + 5) % 12) = {x, y};
    }
  const SimilarityMaps maps = similarity_maps(t, r, t2r, r2t);
  for (int i = 0; i < encoder::kLevels; ++i) {
    EXPECT_EQ(maps.target_to_reference[static_cast<std::size_t>(i)], maps.reference_to_target[static_cast<std::size_t>(i)]);
  }
  const SimilarityMaps rnd = similarity_maps(t, r, random_field(12, 12, 12, 12, rng), random_field(12, 12, 12, 12, rng));
  for (int c = 0; c < kSimilarityChannels; ++c)
    for (float v : rnd.channel(c).data) {
      ASSERT_GE(v, -1.0f);
      ASSERT_LE(v, 1.0f);
    }
}

TEST(SimilarityMaps, ResolutionMismatchIsContractError) {
  Rng rng(5);
  const auto t = random_pyramid(3, 8, rng), r = random_pyramid(3, 8, rng);
  const auto bad = MappingField::identity(7, 8);
  EXPECT_THROW(similarity_maps(t, r, bad, MappingField::identity(8, 8)), ContractError);
  auto levels = upsample_pyramid(t, 8, 8);
  auto rlevels = upsample_pyramid(r, 8, 8);
  rlevels[3] = random_tensor(nn::Dims{6, 4, 4}, rng);
  const auto id = MappingField::identity(8, 8);
  EXPECT_THROW(similarity_maps(std::span<const nn::Tensor>(levels), std::span<const nn::Tensor>(rlevels), id, id),
               ContractError);
}

TEST(Warp, IdentityConstantAndHandPermutation) {
  Rng rng(6);
  image::Plane a(5, 4), b(5, 4);
  for (float& v : a.data) v = static_cast<float>(rng.uniform(-110, 110));
  for (float& v : b.data) v = static_cast<float>(rng.uniform(-110, 110));
  const Chrominance same = warp_chrominance(a, b, MappingField::identity(5, 4));
  EXPECT_EQ(same.a, a);
  EXPECT_EQ(same.b, b);

  const image::Plane ca(5, 4, 12.5f), cb(5, 4, -3.0f);
  const Chrominance c = warp_chrominance(ca, cb, random_field(7, 3, 5, 4, rng));
  for (float v : c.a.data) EXPECT_EQ(v, 12.5f);
  for (float v : c.b.data) EXPECT_EQ(v, -3.0f);

  image::Plane pa(2, 2), pb(2, 2);
  pa.data = {1, 2, 3, 4};
  pb.data = {-1, -2, -3, -4};
  MappingField perm(2, 2, 2, 2);
  perm.map = {{1, 1}, {0, 0}, {1, 0}, {0, 1}};
  const Chrominance p = warp_chrominance(pa, pb, perm);
  EXPECT_EQ(p.a.data, (std::vector<float>{4, 1, 2, 3}));
  EXPECT_EQ(p.b.data, (std::vector<float>{-4, -1, -2, -3}));
}

TEST(Warp, OutOfBoundsIsInternalError) {
  image::Plane a(2, 2), b(2, 2);
  MappingField f(2, 2, 2, 2);
  f.map[3] = {2, 0};
  try {
    warp_chrominance(a, b, f);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()).rfind("internal", 0), 0u) << e.what();
  }
}

TEST(FakeReference, IdentityIsBitExact) {
  Rng rng(7);
  image::Plane a(9, 6), b(9, 6);
  for (float& v : a.data) v = static_cast<float>(rng.uniform(-110, 110));
  for (float& v : b.data) v = static_cast<float>(rng.uniform(-110, 110));
  const auto id = MappingField::identity(9, 6);
  const Chrominance f = fake_reference(a, b, id, id);
  EXPECT_EQ(f.a, a);
  EXPECT_EQ(f.b, b);
}

TEST(FakeReference, RandomFieldsMatchLoopOracleAndAreGatherOnly) {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const int tw = 3 + static_cast<int>(rng.below(6)), th = 3 + static_cast<int>(rng.below(6));
    const int rw = 3 + static_cast<int>(rng.below(6)), rh = 3 + static_cast<int>(rng.below(6));
    image::Plane a(tw, th), b(tw, th);
    for (float& v : a.data) v = static_cast<float>(rng.uniform(-110, 110));
    for (float& v : b.data) v = static_cast<float>(rng.uniform(-110, 110));
    const MappingField t2r = random_field(tw, th, rw, rh, rng), r2t = random_field(rw, rh, tw, th, rng);
    const Chrominance f = fake_reference(a, b, t2r, r2t);
    const std::set<float> values(a.data.begin(), a.data.end());
    for (int y = 0; y < th; ++y)
      for (int x = 0; x < tw; ++x) {
        const Coord p = r2t.at(t2r.at(x, y));
        ASSERT_EQ(f.a.at(x, y), a.at(p.x, p.y));
        ASSERT_EQ(f.b.at(x, y), b.at(p.x, p.y));
        ASSERT_TRUE(values.count(f.a.at(x, y)));
      }
  }
}

TEST(FakeReference, CollapsesWhenReverseIsIdentityOnRange) {
  Rng rng(9);
  image::Plane a(6, 6), b(6, 6);
  for (float& v : a.data) v = static_cast<float>(rng.uniform(-110, 110));
  const MappingField t2r = random_field(6, 6, 6, 6, rng);
  const Chrominance f = fake_reference(a, b, t2r, MappingField::identity(6, 6));
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) EXPECT_EQ(f.a.at(x, y), a.at(t2r.at(x, y).x, t2r.at(x, y).y));
}

TEST(DumpSimilarity, WritesTenPngs) {
  Rng rng(10);
  const auto p = random_pyramid(3, 8, rng);
  const auto id = MappingField::identity(8, 8);
  testing::TempDir dir("sim");
  dump_similarity(similarity_maps(p, p, id, id), dir.path());
  int count = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir.path())) count += e.path().extension() == ".png";
  EXPECT_EQ(count, 10);
}

}  // namespace
}  // namespace chromatix::fusion
