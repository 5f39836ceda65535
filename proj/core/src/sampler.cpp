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

#include "chromatix/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "chromatix/error.hpp"
#include "chromatix/random.hpp"

namespace chromatix::training {

const char* stratum_name(Stratum s) {
  switch (s) {
    case Stratum::kTopSimilar: return "top_similar";
    case Stratum::kSameClass: return "same_class";
    case Stratum::kCrossClass: return "cross_class";
  }
  return "unknown";
}

void PairSamplerConfig::validate() const {
  double total = 0.0;
  for (double p : proportions) {
    if (!(p >= 0.0)) throw ContractError("sampler: proportions must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractError("sampler: proportions must sum to 1");
}

std::array<int, kStrata> stratum_quotas(const PairSamplerConfig& config, int count) {
  config.validate();
  if (count < 0) throw ContractError("sampler: negative count");
  std::array<int, kStrata> q{};
  std::array<double, kStrata> rem{};
  int assigned = 0;
  for (int i = 0; i < kStrata; ++i) {
    const double exact = config.proportions[static_cast<std::size_t>(i)] * count;
    q[static_cast<std::size_t>(i)] = static_cast<int>(std::floor(exact + 1e-9));
    rem[static_cast<std::size_t>(i)] = exact - q[static_cast<std::size_t>(i)];
    assigned += q[static_cast<std::size_t>(i)];
  }
  std::array<int, kStrata> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return rem[static_cast<std::size_t>(a)] > rem[static_cast<std::size_t>(b)] + 1e-12;
  });
  for (int k = 0; assigned < count; ++k, ++assigned) ++q[static_cast<std::size_t>(order[static_cast<std::size_t>(k % kStrata)])];
  return q;
}

SampleResult sample_pairs(std::span<const ImageRecord> images,
                          const std::map<std::uint32_t, std::vector<std::uint32_t>>& top_similar,
                          const PairSamplerConfig& config, int count, std::uint64_t seed) {
  config.validate();
  auto category = [&](int cls) {
    const auto it = config.category_of_class.find(cls);
    // Unmapped classes get a private category keyed away from user ids.
    return it == config.category_of_class.end() ? std::pair{1, cls} : std::pair{0, it->second};
  };

  std::map<int, std::vector<std::uint32_t>> by_class;
  for (const ImageRecord& r : images) by_class[r.class_id].push_back(r.id);
  std::map<std::uint32_t, int> class_of;
  for (const ImageRecord& r : images) class_of[r.id] = r.class_id;

  // Candidate targets per stratum.
  std::vector<std::uint32_t> top_targets, same_targets, cross_targets;
  for (const ImageRecord& r : images) {
    const auto it = top_similar.find(r.id);
    if (it != top_similar.end() &&
        std::any_of(it->second.begin(), it->second.end(), [&](std::uint32_t n) { return n != r.id; })) {
      top_targets.push_back(r.id);
    }
    if (by_class[r.class_id].size() >= 2) same_targets.push_back(r.id);
    for (const auto& [cls, members] : by_class) {
      if (cls != r.class_id && category(cls) == category(r.class_id)) {
        cross_targets.push_back(r.id);
        break;
      }
    }
  }

  SampleResult out;
  out.counts = stratum_quotas(config, count);
  const std::array<const std::vector<std::uint32_t>*, kStrata> targets{&top_targets, &same_targets,
                                                                       &cross_targets};
  for (int s : {0, 2}) {
    if (out.counts[static_cast<std::size_t>(s)] > 0 && targets[static_cast<std::size_t>(s)]->empty()) {
      out.warnings.push_back(std::string("stratum ") + stratum_name(static_cast<Stratum>(s)) +
                             " impossible; " + std::to_string(out.counts[static_cast<std::size_t>(s)]) +
                             " pairs moved to same_class");
      out.counts[1] += out.counts[static_cast<std::size_t>(s)];
      out.counts[static_cast<std::size_t>(s)] = 0;
    }
  }
  if (out.counts[1] > 0 && same_targets.empty()) {
    throw ContractError("sampler: no class has two images; cannot draw same-class pairs");
  }

  Rng rng(seed);
  auto pick = [&](const std::vector<std::uint32_t>& v) { return v[rng.below(v.size())]; };
  for (int s = 0; s < kStrata; ++s) {
    for (int k = 0; k < out.counts[static_cast<std::size_t>(s)]; ++k) {
      SampledPair p;
      p.stratum = static_cast<Stratum>(s);
      p.target = pick(*targets[static_cast<std::size_t>(s)]);
      const int cls = class_of[p.target];
      std::vector<std::uint32_t> refs;
      if (s == 0) {
        for (std::uint32_t n : top_similar.at(p.target)) {
          if (n != p.target) refs.push_back(n);
        }
      } else if (s == 1) {
        for (std::uint32_t n : by_class[cls]) {
          if (n != p.target) refs.push_back(n);
        }
      } else {
        for (const auto& [other, members] : by_class) {
          if (other != cls && category(other) == category(cls)) refs.insert(refs.end(), members.begin(), members.end());
        }
      }
      p.reference = pick(refs);
      out.pairs.push_back(p);
    }
  }
  rng.shuffle(out.pairs.begin(), out.pairs.end());
  return out;
}

double chi_square(std::span<const int> observed, std::span<const double> proportions) {
  if (observed.size() != proportions.size()) throw ContractError("chi_square: length mismatch");
  const double n = std::accumulate(observed.begin(), observed.end(), 0.0);
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double expected = n * proportions[i];
    if (expected <= 0.0) {
      if (observed[i] != 0) return INFINITY;
      continue;
    }
    const double d = observed[i] - expected;
    stat += d * d / expected;
  }
  return stat;
}

}  // namespace chromatix::training
