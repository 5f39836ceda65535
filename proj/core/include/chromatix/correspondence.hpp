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
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "chromatix/encoder.hpp"
#include "chromatix/image.hpp"
#include "chromatix/tensor.hpp"

namespace chromatix::match {

struct Coord {
  int x = 0;
  int y = 0;
  friend bool operator==(Coord, Coord) = default;
};

/// Dense lookup field: at(p) is the coordinate in the other image sampled
/// when synthesizing pixel p of the source image.
struct MappingField {
  int width = 0;          // source extent
  int height = 0;
  int target_width = 0;   // extent of the image coordinates point into
  int target_height = 0;
  std::vector<Coord> map;

  MappingField() = default;
  MappingField(int w, int h, int tw, int th)
      : width(w), height(h), target_width(tw), target_height(th),
        map(static_cast<std::size_t>(w) * h) {}

  static MappingField identity(int w, int h);

  Coord& at(int x, int y) { return map[static_cast<std::size_t>(y) * width + x]; }
  Coord at(int x, int y) const { return map[static_cast<std::size_t>(y) * width + x]; }
  Coord at(Coord p) const { return at(p.x, p.y); }

  bool in_bounds() const;
  /// Throws Error if any coordinate leaves the target.
  void validate() const;

  friend bool operator==(const MappingField&, const MappingField&) = default;
};

struct MatchConfig {
  int patch_radius = 1;   // 3x3 patches
  int iterations = 5;     // per level
  int levels = 5;         // coarsest level used; solved down to level 1
  double search_decay = 0.5;
  int search_samples = 2;  // random candidates per search radius
  std::uint64_t seed = 0;

  friend bool operator==(const MatchConfig&, const MatchConfig&) = default;
};

/// Stable digest of the config, used in cache keys.
std::string config_digest(const MatchConfig& config);

/// Per-pixel L2-normalized features, pixel-major. Zero vectors stay zero.
class NormalizedFeatures {
 public:
  explicit NormalizedFeatures(const nn::Tensor& chw);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  const float* pixel(int x, int y) const {
    return data_.data() + (static_cast<std::size_t>(y) * width_ + x) * channels_;
  }
  bool nonzero(int x, int y) const { return nonzero_[static_cast<std::size_t>(y) * width_ + x] != 0; }

 private:
  int width_, height_, channels_;
  std::vector<float> data_;
  std::vector<std::uint8_t> nonzero_;
};

/// 1 - cosine similarity of the concatenated normalized patch features,
/// over offsets valid in both images. 1 when either patch is all zero.
double patch_cost(const NormalizedFeatures& source, const NormalizedFeatures& target,
                  Coord s, Coord t, int radius);

/// Mean patch cost of a field over all source pixels.
double mean_field_cost(const NormalizedFeatures& source, const NormalizedFeatures& target,
                       const MappingField& field, int radius);

/// Reports (level, iteration, total cost) after initialization (iteration
/// -1) and after each PatchMatch iteration.
using IterationObserver = std::function<void(int level, int iteration, double total_cost)>;

/// Coarse-to-fine PatchMatch. `source` and `target` list [C, H, W] maps,
/// finest first; level i + 1 must be about half the size of level i.
MappingField nnf(std::span<const nn::Tensor> source, std::span<const nn::Tensor> target,
                 const MatchConfig& config, const IterationObserver& observer = {});

MappingField nnf(const encoder::FeaturePyramid& source, const encoder::FeaturePyramid& target,
                 const MatchConfig& config, const IterationObserver& observer = {});

struct FieldPair {
  MappingField target_to_reference;
  MappingField reference_to_target;
};

/// Two independent nnf runs with the same seed, one per direction.
FieldPair bidirectional(const encoder::FeaturePyramid& target,
                        const encoder::FeaturePyramid& reference, const MatchConfig& config);

/// Fraction of target pixels p with r2t(t2r(p)) == p.
double cross_check_ratio(const MappingField& t2r, const MappingField& r2t);

/// Offset visualization: red = dx, green = dy, mid-gray = zero offset.
image::RgbImage field_to_rgb(const MappingField& field);

}  // namespace chromatix::match
