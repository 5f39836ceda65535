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

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "chromatix/bytes.hpp"
#include "chromatix/encoder.hpp"
#include "chromatix/image.hpp"

namespace chromatix::retrieval {

/// Top-k principal directions of a sample set.
class PcaModel {
 public:
  /// Rows of `samples` are observations. Throws ContractError when k exceeds
  /// the numeric rank of the centered data.
  static PcaModel fit(std::span<const std::vector<float>> samples, int k);

  /// Numeric rank of the centered samples.
  static int rank(std::span<const std::vector<float>> samples);

  int source_dim() const noexcept { return source_dim_; }
  int k() const noexcept { return k_; }
  const std::vector<double>& mean() const noexcept { return mean_; }
  /// Row-major k x source_dim, orthonormal rows.
  const std::vector<double>& components() const noexcept { return components_; }
  /// Eigenvalues of the sample covariance, descending.
  const std::vector<double>& variances() const noexcept { return variances_; }
  double explained_variance_ratio(int i) const;

  /// W (x - mean).
  std::vector<double> project(std::span<const float> x) const;
  /// W^T y + mean.
  std::vector<double> back_project(std::span<const double> y) const;
  /// W x: coordinates in the principal basis without centering. Dot
  /// products are preserved exactly when k == source_dim.
  std::vector<float> compress(std::span<const float> x) const;

  void write(ByteWriter& out) const;
  static PcaModel read(ByteReader& in);

  friend bool operator==(const PcaModel&, const PcaModel&) = default;

 private:
  int source_dim_ = 0;
  int k_ = 0;
  std::vector<double> mean_;
  std::vector<double> components_;
  std::vector<double> variances_;
  double total_variance_ = 0.0;
};

/// Eigen-decomposition of a symmetric n x n row-major matrix by cyclic
/// Jacobi rotations. Eigenvalues descending; eigenvectors as matrix rows.
void symmetric_eigen(std::vector<double> matrix, int n, std::vector<double>& values,
                     std::vector<double>& vectors);

struct IndexEntry {
  std::uint32_t id = 0;
  std::string locator;
  int class_id = 0;
  int grid_width = 0;
  int grid_height = 0;
  std::vector<float> global;  // pca_global.k()
  std::vector<float> local;   // cells x pca_local.k(), row-major cells
  std::vector<image::LumaHistogram> histograms;  // one per cell

  int cells() const { return grid_width * grid_height; }
  std::span<const float> cell(int i, int k) const {
    return std::span<const float>(local).subspan(static_cast<std::size_t>(i) * k, static_cast<std::size_t>(k));
  }

  friend bool operator==(const IndexEntry&, const IndexEntry&) = default;
};

struct IndexMeta {
  int cell_size = 16;
  std::string encoder_digest;
  std::string encoder_locator;

  friend bool operator==(const IndexMeta&, const IndexMeta&) = default;
};

/// Reference database. Binary layout is documented in docs/formats.md.
struct ReferenceIndex {
  static constexpr std::uint32_t kVersion = 1;

  IndexMeta meta;
  PcaModel pca_global;
  PcaModel pca_local;
  std::vector<IndexEntry> entries;

  const IndexEntry* find(std::uint32_t id) const;

  std::vector<std::uint8_t> serialize() const;
  static ReferenceIndex deserialize(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static ReferenceIndex load(const std::filesystem::path& path);

  friend bool operator==(const ReferenceIndex&, const ReferenceIndex&) = default;
};

struct IndexBuildOptions {
  int cell_size = 16;
  int global_k = 128;
  int local_k = 64;
};

struct IndexSource {
  std::string locator;  // image path
};

struct SkippedSource {
  std::string locator;
  std::string reason;
};

/// Uncompressed descriptors of one luminance plane.
struct RawDescriptors {
  int class_id = 0;
  std::vector<float> global;
  int grid_width = 0;
  int grid_height = 0;
  std::vector<std::vector<float>> cells;
  std::vector<image::LumaHistogram> histograms;
};

RawDescriptors describe_raw(const image::Plane& L, const encoder::Encoder& encoder, int cell_size);

/// Entry ids are positions in `sources`. Unreadable or too-small images are
/// listed in `skipped` and left out. PCA k is capped at the data rank.
ReferenceIndex build_index(std::span<const IndexSource> sources, const encoder::Encoder& encoder,
                           const IndexBuildOptions& options, std::vector<SkippedSource>* skipped = nullptr,
                           const std::string& encoder_locator = {});

/// Same as build_index but from in-memory planes (locators are labels only).
ReferenceIndex build_index_from_planes(std::span<const image::Plane> planes,
                                       std::span<const std::string> locators,
                                       const encoder::Encoder& encoder, const IndexBuildOptions& options);

/// Compressed descriptors of a query, ready for ranking.
struct QueryDescriptors {
  int class_id = 0;
  std::vector<float> global;
  int grid_width = 0;
  int grid_height = 0;
  std::vector<float> local;
  std::vector<image::LumaHistogram> histograms;

  int cells() const { return grid_width * grid_height; }
};

QueryDescriptors describe(const image::Plane& L, const encoder::Encoder& encoder,
                          const ReferenceIndex& index);

struct Candidate {
  std::uint32_t id = 0;
  double score = 0.0;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct RankOptions {
  int top_n = 200;
  int min_class_size = 5;
  double beta = 0.25;
};

/// Cosine of compressed global descriptors within the query's class, or the
/// whole index when the class has fewer than min_class_size entries.
/// Descending score, ascending id on ties, at most top_n.
std::vector<Candidate> global_rank(const QueryDescriptors& query, const ReferenceIndex& index,
                                   const RankOptions& options = {});

/// For each query cell p: q = argmax cosine over candidate cells (lowest
/// index on ties); score += cosine + beta * histogram correlation.
double local_score(const QueryDescriptors& query, const IndexEntry& candidate, int local_k, double beta);

struct LocalRanking {
  std::vector<Candidate> ranking;
  std::vector<std::string> warnings;
};

LocalRanking local_rank(const QueryDescriptors& query, std::span<const Candidate> candidates,
                        const ReferenceIndex& index, double beta = 0.25);

/// global_rank then local_rank; the first k of the local ranking.
std::vector<Candidate> recommend(const QueryDescriptors& query, const ReferenceIndex& index, int k,
                                 const RankOptions& options = {});
std::vector<Candidate> recommend(const image::Plane& L, const encoder::Encoder& encoder,
                                 const ReferenceIndex& index, int k, const RankOptions& options = {});

}  // namespace chromatix::retrieval
