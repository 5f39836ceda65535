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

#include <Eigen/Dense>
#include <cmath>

#include "chromatix/fusion.hpp"
#include "chromatix/retrieval.hpp"
#include "chromatix/synthetic.hpp"
#include "test_support.hpp"

namespace chromatix::retrieval {
namespace {

std::vector<std::vector<float>> random_rows(int n, int d, Rng& rng) {
  std::vector<std::vector<float>> rows(static_cast<std::size_t>(n), std::vector<float>(static_cast<std::size_t>(d)));
  for (auto& r : rows)
    for (float& v : r) v = static_cast<float>(rng.uniform(-1, 1));
  return rows;
}

Eigen::MatrixXd components_of(const PcaModel& m) {
  Eigen::MatrixXd w(m.k(), m.source_dim());
  for (int i = 0; i < m.k(); ++i)
    for (int j = 0; j < m.source_dim(); ++j) w(i, j) = m.components()[static_cast<std::size_t>(i * m.source_dim() + j)];
  return w;
}

TEST(Pca, SubspaceMatchesSvdOracle) {
  Rng rng(1);
  const auto rows = random_rows(50, 16, rng);
  Eigen::MatrixXd x(50, 16);
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 16; ++j) x(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  x.rowwise() -= x.colwise().mean();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
  for (int k : {1, 4, 8, 16}) {
    const PcaModel m = PcaModel::fit(rows, k);
    const Eigen::MatrixXd w = components_of(m);
    EXPECT_LT((w * w.transpose() - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff(), 1e-6);
    // Principal angles from the singular values of W V_k; all cosines must be 1.
    const Eigen::MatrixXd overlap = w * svd.matrixV().leftCols(k);
    const Eigen::VectorXd cosines = Eigen::JacobiSVD<Eigen::MatrixXd>(overlap).singularValues();
    for (int i = 0; i < k; ++i) EXPECT_LT(std::acos(std::min(1.0, cosines(i))), 1e-6) << "k " << k;
    for (int i = 0; i < k; ++i) {
      int arg = 0;
      for (int j = 1; j < 16; ++j)
        if (std::abs(w(i, j)) > std::abs(w(i, arg))) arg = j;
      EXPECT_GT(w(i, arg), 0.0);
    }
  }
}

TEST(Pca, FullRankReconstruction) {
  Rng rng(2);
  const auto rows = random_rows(50, 16, rng);
  const PcaModel m = PcaModel::fit(rows, 16);
  double worst = 0.0;
  for (const auto& r : rows) {
    const auto back = m.back_project(m.project(r));
    for (std::size_t j = 0; j < r.size(); ++j) worst = std::max(worst, std::abs(back[j] - r[j]));
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Pca, LineDataHasOneComponent) {
  Rng rng(3);
  std::vector<std::vector<float>> rows;
  for (int i = 0; i < 40; ++i) {
    const double t = rng.uniform(-5, 5);
    rows.push_back({static_cast<float>(2 * t + 1), static_cast<float>(-t + 3)});
  }
  EXPECT_EQ(PcaModel::rank(rows), 1);
  const PcaModel m = PcaModel::fit(rows, 1);
  EXPECT_GE(m.explained_variance_ratio(0), 0.999);
  EXPECT_THROW(PcaModel::fit(rows, 2), ContractError);
}

TEST(Pca, CompressionPreservesCosineAtFullRank) {
  Rng rng(4);
  const auto rows = random_rows(30, 12, rng);
  const PcaModel m = PcaModel::fit(rows, 12);
  for (int i = 0; i + 1 < 30; ++i) {
    const auto a = m.compress(rows[static_cast<std::size_t>(i)]), b = m.compress(rows[static_cast<std::size_t>(i + 1)]);
    EXPECT_NEAR(fusion::cosine(a, b), fusion::cosine(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(i + 1)]), 1e-6);
  }
}

TEST(Pca, SerializationRoundTrip) {
  Rng rng(5);
  const PcaModel m = PcaModel::fit(random_rows(20, 6, rng), 3);
  ByteWriter w;
  m.write(w);
  ByteReader r(w.buffer());
  EXPECT_EQ(PcaModel::read(r), m);
}

// Hand-built index: one candidate with two cells and 2-d local descriptors.
struct HandFixture {
  ReferenceIndex index;
  QueryDescriptors query;

  HandFixture() {
    const std::vector<std::vector<float>> basis{{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    index.pca_local = PcaModel::fit(basis, 2);
    index.pca_global = PcaModel::fit(basis, 2);
    IndexEntry e;
    e.id = 0;
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

    query.grid_width = 2;
    query.grid_height = 1;
    query.global = {1, 0};
    query.local = {1, 0, 0, 1};
    query.histograms.resize(2);
    query.histograms[0] = e.histograms[0];
    query.histograms[1].bins[0] = 1;
    query.histograms[1].total = 1;
  }
};

TEST(LocalScore, HandWorkedTwoCellFixture) {
  const HandFixture f;
  // Cell 0 -> candidate cell 0: cos 1/sqrt(2), identical histograms (r = 1).
  // Cell 1 -> candidate cell 1: cos 2/sqrt(5); one-hot bins 0 vs 1 over 32 bins give r = -1/31.
  const double expect = 1.0 / std::sqrt(2.0) + 0.25 * 1.0 + 2.0 / std::sqrt(5.0) + 0.25 * (-1.0 / 31.0);
  EXPECT_NEAR(local_score(f.query, f.index.entries[0], 2, 0.25), expect, 1e-9);
  const LocalRanking r = local_rank(f.query, std::vector<Candidate>{{0, 0.0}}, f.index);
  ASSERT_EQ(r.ranking.size(), 1u);
  EXPECT_NEAR(r.ranking[0].score, expect, 1e-9);
  EXPECT_EQ(RankOptions{}.beta, 0.25);
}

TEST(LocalRank, MissingLocalDescriptorsAreSkippedWithWarning) {
  HandFixture f;
  IndexEntry empty = f.index.entries[0];
  empty.id = 1;
  empty.local.clear();
  f.index.entries.push_back(empty);
  const LocalRanking r = local_rank(f.query, std::vector<Candidate>{{0, 0.0}, {1, 0.0}}, f.index);
  EXPECT_EQ(r.ranking.size(), 1u);
  EXPECT_EQ(r.warnings.size(), 1u);
}

// Builds an index directly from random descriptors.
ReferenceIndex synthetic_index(int n, int classes, Rng& rng) {
  ReferenceIndex idx;
  idx.pca_global = PcaModel::fit(random_rows(20, 4, rng), 4);
  idx.pca_local = PcaModel::fit(random_rows(20, 3, rng), 3);
  for (int i = 0; i < n; ++i) {
    IndexEntry e;
    e.id = static_cast<std::uint32_t>(i);
    e.locator = "img" + std::to_string(i);
    e.class_id = i % classes;
    e.grid_width = 2;
    e.grid_height = 2;
    for (int j = 0; j < 4; ++j) e.global.push_back(static_cast<float>(rng.uniform(-1, 1)));
    for (int j = 0; j < 12; ++j) e.local.push_back(static_cast<float>(rng.uniform(-1, 1)));
    e.histograms.resize(4);
    for (auto& h : e.histograms) {
      for (auto& b : h.bins) b = static_cast<std::uint32_t>(rng.below(9));
      h.total = 0;
      for (auto b : h.bins) h.total += b;
    }
    idx.entries.push_back(e);
  }
  return idx;
}

QueryDescriptors query_of(const IndexEntry& e) {
  QueryDescriptors q;
  q.class_id = e.class_id;
  q.global = e.global;
  q.grid_width = e.grid_width;
  q.grid_height = e.grid_height;
  q.local = e.local;
  q.histograms = e.histograms;
  return q;
}

TEST(GlobalRank, SelfFirstCapAndTieBreak) {
  Rng rng(6);
  const ReferenceIndex idx = synthetic_index(301, 1, rng);
  const auto ranked = global_rank(query_of(idx.entries[17]), idx);
  ASSERT_EQ(ranked.size(), 200u);
  EXPECT_EQ(ranked[0].id, 17u);
  EXPECT_NEAR(ranked[0].score, 1.0, 1e-6);
  for (std::size_t i = 1; i < ranked.size(); ++i) {
    EXPECT_TRUE(ranked[i - 1].score > ranked[i].score ||
                (ranked[i - 1].score == ranked[i].score && ranked[i - 1].id < ranked[i].id));
  }

  ReferenceIndex ties = synthetic_index(6, 1, rng);
  for (auto& e : ties.entries) e.global = {1, 2, 3, 4};
  const auto tied = global_rank(query_of(ties.entries[3]), ties);
  for (std::size_t i = 0; i < tied.size(); ++i) EXPECT_EQ(tied[i].id, i);
}

TEST(GlobalRank, ClassFilterAndFallback) {
  Rng rng(7);
  ReferenceIndex idx = synthetic_index(30, 3, rng);
  const auto ranked = global_rank(query_of(idx.entries[4]), idx);
  EXPECT_EQ(ranked.size(), 10u);
  for (const Candidate& c : ranked) EXPECT_EQ(idx.find(c.id)->class_id, 1);
  QueryDescriptors lonely = query_of(idx.entries[4]);
  lonely.class_id = 9;
  EXPECT_EQ(global_rank(lonely, idx).size(), 30u);
  for (int i = 0; i < 26; ++i) idx.entries[static_cast<std::size_t>(i)].class_id = 0;
  // Class 1 now has 1 member (id 28 has class 1), below the threshold of 5.
  EXPECT_EQ(global_rank(query_of(idx.entries[28]), idx).size(), 30u);
  EXPECT_THROW(global_rank(lonely, ReferenceIndex{}), ContractError);
}

TEST(GlobalRank, InvariantToPositiveScaling) {
  Rng rng(8);
  const ReferenceIndex idx = synthetic_index(40, 1, rng);
  ReferenceIndex scaled = idx;
  for (auto& e : scaled.entries)
    for (float& v : e.global) v *= 3.5f;
  const QueryDescriptors q = query_of(idx.entries[2]);
  const auto a = global_rank(q, idx), b = global_rank(q, scaled);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].id, b[i].id);
}

TEST(LocalRank, SelfMaximizesAndBetaZeroIgnoresHistograms) {
  Rng rng(9);
  const ReferenceIndex idx = synthetic_index(25, 1, rng);
  const QueryDescriptors q = query_of(idx.entries[11]);
  const auto cands = global_rank(q, idx);
  const LocalRanking r = local_rank(q, cands, idx);
  EXPECT_EQ(r.ranking[0].id, 11u);
  EXPECT_NEAR(r.ranking[0].score, 4 * 1.25, 1e-6);

  ReferenceIndex permuted = idx;
  for (auto& e : permuted.entries) std::reverse(e.histograms.begin(), e.histograms.end());
  const auto a = local_rank(q, cands, idx, 0.0).ranking, b = local_rank(q, cands, permuted, 0.0).ranking;
  EXPECT_EQ(a, b);
}

TEST(LocalRank, MonotoneInBetaForEqualSemanticTerms) {
  HandFixture f;
  IndexEntry other = f.index.entries[0];
  other.id = 1;
  other.histograms[0].bins = {};
  other.histograms[0].bins[20] = 7;
  f.index.entries.push_back(other);
  double prev_gap = -1.0;
  for (double beta : {0.0, 0.25, 0.5, 1.0}) {
    const double gap = local_score(f.query, f.index.entries[0], 2, beta) - local_score(f.query, f.index.entries[1], 2, beta);
    EXPECT_GE(gap, prev_gap);
    prev_gap = gap;
  }
}

class ToyCorpus : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    encoder_ = new encoder::Encoder(testing::trained_gray_encoder());
    const auto items = synthetic::corpus(8, 48, 21);
    for (std::size_t i = 0; i < 30; ++i) {
      planes_.push_back(image::rgb_to_lab(items[i].image).L);
      locators_.push_back(items[i].name);
    }
    index_ = new ReferenceIndex(build_index_from_planes(planes_, locators_, *encoder_, IndexBuildOptions{}));
  }
  static void TearDownTestSuite() {
    delete encoder_;
    delete index_;
  }

  static encoder::Encoder* encoder_;
  static ReferenceIndex* index_;
  static std::vector<image::Plane> planes_;
  static std::vector<std::string> locators_;
};

encoder::Encoder* ToyCorpus::encoder_ = nullptr;
ReferenceIndex* ToyCorpus::index_ = nullptr;
std::vector<image::Plane> ToyCorpus::planes_;
std::vector<std::string> ToyCorpus::locators_;

double cos_oracle(std::span<const float> a, std::span<const float> b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += double(a[i]) * b[i];
    na += double(a[i]) * a[i];
    nb += double(b[i]) * b[i];
  }
  return na == 0 || nb == 0 ? 0.0 : d / std::sqrt(na * nb);
}

TEST_F(ToyCorpus, IndexShape) {
  ASSERT_EQ(index_->entries.size(), 30u);
  for (const IndexEntry& e : index_->entries) {
    EXPECT_EQ(e.grid_width, 3);
    EXPECT_EQ(e.grid_height, 3);
    EXPECT_EQ(e.global.size(), static_cast<std::size_t>(index_->pca_global.k()));
    EXPECT_EQ(e.local.size(), static_cast<std::size_t>(9 * index_->pca_local.k()));
    EXPECT_GE(e.class_id, 0);
    EXPECT_LT(e.class_id, 4);
  }
  EXPECT_LE(index_->pca_global.k(), 128);
  EXPECT_LE(index_->pca_local.k(), 64);
}

TEST_F(ToyCorpus, SaveLoadIsBitExact) {
  testing::TempDir dir("index");
  index_->save(dir / "i.cwix");
  const ReferenceIndex back = ReferenceIndex::load(dir / "i.cwix");
  EXPECT_EQ(back, *index_);
  EXPECT_EQ(back.serialize(), index_->serialize());
  auto bytes = index_->serialize();
  bytes.resize(bytes.size() - 3);
  EXPECT_THROW(ReferenceIndex::deserialize(bytes), LoadError);
}

TEST_F(ToyCorpus, SelfDuplicateRankedFirstAndMatchesBruteForce) {
  for (std::uint32_t qi : {0u, 7u, 13u, 29u}) {
    const QueryDescriptors q = describe(planes_[qi], *encoder_, *index_);
    const auto top = recommend(planes_[qi], *encoder_, *index_, 1);
    ASSERT_EQ(top.size(), 1u);
    EXPECT_EQ(top[0].id, qi);

    // Brute-force local score over the class members (or everything on fallback).
    const int k = index_->pca_local.k();
    std::size_t members = 0;
    for (const auto& e : index_->entries) members += e.class_id == q.class_id;
    std::vector<Candidate> oracle;
    for (const auto& e : index_->entries) {
      if (members >= 5 && e.class_id != q.class_id) continue;
      double s = 0.0;
      for (int p = 0; p < q.cells(); ++p) {
        const auto fq = std::span<const float>(q.local).subspan(static_cast<std::size_t>(p * k), static_cast<std::size_t>(k));
        int best = 0;
        for (int c = 1; c < e.cells(); ++c)
          if (cos_oracle(fq, e.cell(c, k)) > cos_oracle(fq, e.cell(best, k))) best = c;
        s += cos_oracle(fq, e.cell(best, k)) +
             0.25 * image::histogram_correlation(q.histograms[static_cast<std::size_t>(p)], e.histograms[static_cast<std::size_t>(best)]);
      }
      oracle.push_back({e.id, s});
    }
    std::sort(oracle.begin(), oracle.end(), [](const Candidate& a, const Candidate& b) {
      return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    const auto all = recommend(q, *index_, 1000);
    ASSERT_EQ(all.size(), oracle.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
      EXPECT_EQ(all[i].id, oracle[i].id) << "query " << qi << " rank " << i;
      EXPECT_NEAR(all[i].score, oracle[i].score, 1e-9);
    }
    EXPECT_EQ(recommend(q, *index_, 1000), all);
  }
}

TEST_F(ToyCorpus, UnreadableSourcesAreSkipped) {
  testing::TempDir dir("sources");
  std::vector<IndexSource> sources;
  const auto items = synthetic::corpus(2, 40, 5);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto path = dir / (items[i].name + ".png");
    image::write_png(path, items[i].image);
    sources.push_back({path.string()});
  }
  sources.push_back({(dir / "missing.png").string()});
  write_file(dir / "junk.png", std::vector<std::uint8_t>{1, 2, 3});
  sources.push_back({(dir / "junk.png").string()});
  std::vector<SkippedSource> skipped;
  const ReferenceIndex idx = build_index(sources, *encoder_, IndexBuildOptions{}, &skipped);
  EXPECT_EQ(idx.entries.size(), items.size());
  EXPECT_EQ(skipped.size(), 2u);
  IndexBuildOptions bad;
  bad.cell_size = 8;
  EXPECT_THROW(build_index(sources, *encoder_, bad), ContractError);
}

}  // namespace
}  // namespace chromatix::retrieval
