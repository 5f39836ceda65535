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
#include <filesystem>
#include <span>

#include "chromatix/correspondence.hpp"
#include "chromatix/encoder.hpp"
#include "chromatix/image.hpp"
#include "chromatix/tensor.hpp"

namespace chromatix::fusion {

/// x.y / (|x| |y|); 0 when either norm is 0.
double cosine(std::span<const float> x, std::span<const float> y);

inline constexpr int kSimilarityChannels = 2 * encoder::kLevels;

/// Bidirectional similarity planes at target resolution.
struct SimilarityMaps {
  std::array<image::Plane, encoder::kLevels> target_to_reference;
  std::array<image::Plane, encoder::kLevels> reference_to_target;

  int width() const { return target_to_reference[0].width; }
  int height() const { return target_to_reference[0].height; }

  /// Channel order: T->R levels 1..5, then R->T levels 1..5.
  const image::Plane& channel(int i) const;
  image::Plane& channel(int i);

  friend bool operator==(const SimilarityMaps&, const SimilarityMaps&) = default;
};

/// Bilinearly resamples every level to width x height.
std::array<nn::Tensor, encoder::kLevels> upsample_pyramid(const encoder::FeaturePyramid& pyramid,
                                                          int width, int height);

/// Similarity maps from feature levels already at input resolution. Each
/// span holds [C_i, H, W] maps; target and reference may differ in extent.
SimilarityMaps similarity_maps(std::span<const nn::Tensor> target_levels,
                               std::span<const nn::Tensor> reference_levels,
                               const match::MappingField& t2r, const match::MappingField& r2t);

/// Upsamples both pyramids to their input resolution, then evaluates.
SimilarityMaps similarity_maps(const encoder::FeaturePyramid& target,
                               const encoder::FeaturePyramid& reference,
                               const match::MappingField& t2r, const match::MappingField& r2t);

/// out(p) = source(field(p)), nearest-pixel gather.
image::Plane gather(const image::Plane& source, const match::MappingField& field);

struct Chrominance {
  image::Plane a, b;
};

/// R'_ab(p) = R_ab(t2r(p)).
Chrominance warp_chrominance(const image::Plane& ref_a, const image::Plane& ref_b,
                             const match::MappingField& t2r);

/// T'_ab(p) = T_ab(r2t(t2r(p))).
Chrominance fake_reference(const image::Plane& target_a, const image::Plane& target_b,
                           const match::MappingField& t2r, const match::MappingField& r2t);

/// Writes error_{t2r,r2t}_{level}.png as 1 - sim grayscale images.
void dump_similarity(const SimilarityMaps& maps, const std::filesystem::path& dir);

}  // namespace chromatix::fusion
