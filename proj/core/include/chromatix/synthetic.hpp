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
#include <string>
#include <vector>

#include "chromatix/image.hpp"

// Seeded toy images for demos, tests and benchmarks.
namespace chromatix::synthetic {

enum class Pattern { kHorizontalStripes = 0, kVerticalStripes = 1, kCircles = 2, kChecker = 3 };

inline constexpr int kPatterns = 4;

const char* pattern_name(Pattern p);

/// Two-color pattern with a random palette, period and phase, plus mild
/// per-pixel noise.
image::RgbImage render(Pattern pattern, int width, int height, std::uint64_t seed);

struct LabeledImage {
  image::RgbImage image;
  int label = 0;
  std::string name;
};

/// per_class images of each pattern, labels 0..3, names "<pattern>_<i>".
std::vector<LabeledImage> corpus(int per_class, int size, std::uint64_t seed);

}  // namespace chromatix::synthetic
