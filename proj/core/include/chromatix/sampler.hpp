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

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace chromatix::training {

struct ImageRecord {
  std::uint32_t id = 0;
  int class_id = 0;
};

enum class Stratum { kTopSimilar = 0, kSameClass = 1, kCrossClass = 2 };

inline constexpr int kStrata = 3;

const char* stratum_name(Stratum s);

struct PairSamplerConfig {
  std::array<double, kStrata> proportions{0.45, 0.45, 0.10};
  /// class id -> category id; classes absent from the map form their own category.
  std::map<int, int> category_of_class;

  void validate() const;
};

struct SampledPair {
  std::uint32_t target = 0;
  std::uint32_t reference = 0;
  Stratum stratum = Stratum::kTopSimilar;

  friend bool operator==(const SampledPair&, const SampledPair&) = default;
};

struct SampleResult {
  std::vector<SampledPair> pairs;
  std::array<int, kStrata> counts{};
  std::vector<std::string> warnings;
};

/// Largest-remainder apportionment of `count`; equal remainders favor the
/// lower stratum index.
std::array<int, kStrata> stratum_quotas(const PairSamplerConfig& config, int count);

/// Draws `count` (target, reference) pairs. `top_similar` maps an image id
/// to its retrieval neighbors. A stratum with no possible pair hands its
/// quota to the same-class stratum and records a warning.
SampleResult sample_pairs(std::span<const ImageRecord> images,
                          const std::map<std::uint32_t, std::vector<std::uint32_t>>& top_similar,
                          const PairSamplerConfig& config, int count, std::uint64_t seed);

/// Pearson chi-square statistic of observed counts against proportions.
double chi_square(std::span<const int> observed, std::span<const double> proportions);

/// Upper tail of the chi-square distribution with 2 degrees of freedom.
inline double chi_square_p_df2(double statistic) { return std::exp(-statistic / 2.0); }

}  // namespace chromatix::training
