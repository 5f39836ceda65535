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

#include "chromatix/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "chromatix/random.hpp"

namespace chromatix::synthetic {

const char* pattern_name(Pattern p) {
  switch (p) {
    case Pattern::kHorizontalStripes: return "hstripes";
    case Pattern::kVerticalStripes: return "vstripes";
    case Pattern::kCircles: return "circles";
    case Pattern::kChecker: return "checker";
  }
  return "unknown";
}

image::RgbImage render(Pattern pattern, int width, int height, std::uint64_t seed) {
  Rng rng(seed);
  std::array<std::array<double, 3>, 2> palette{};
  for (auto& c : palette) {
    for (double& v : c) v = rng.uniform(20.0, 235.0);
  }
  // Keep the two tones apart in brightness so luminance carries the pattern.
  if (std::abs(palette[0][0] + palette[0][1] + palette[0][2] - palette[1][0] - palette[1][1] - palette[1][2]) < 120.0) {
    for (double& v : palette[0]) v = std::min(255.0, v * 0.35);
    for (double& v : palette[1]) v = std::min(255.0, v * 0.5 + 127.0);
  }
  const double period = rng.uniform(6.0, 14.0);
  const double phase = rng.uniform(0.0, period);
  const double cx = rng.uniform(0.3, 0.7) * width, cy = rng.uniform(0.3, 0.7) * height;

  image::RgbImage img(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      int tone = 0;
      switch (pattern) {
        case Pattern::kHorizontalStripes:
          tone = static_cast<int>(std::floor((y + phase) / (period / 2))) & 1;
          break;
        case Pattern::kVerticalStripes:
          tone = static_cast<int>(std::floor((x + phase) / (period / 2))) & 1;
          break;
        case Pattern::kCircles:
          tone = static_cast<int>(std::floor((std::hypot(x - cx, y - cy) + phase) / (period / 2))) & 1;
          break;
        case Pattern::kChecker:
          tone = (static_cast<int>(std::floor((x + phase) / period)) + static_cast<int>(std::floor((y + phase) / period))) & 1;
          break;
      }
      std::uint8_t* p = img.px(x, y);
      for (int c = 0; c < 3; ++c) {
        const double v = palette[static_cast<std::size_t>(tone)][static_cast<std::size_t>(c)] + rng.uniform(-4.0, 4.0);
        p[c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return img;
}

std::vector<LabeledImage> corpus(int per_class, int size, std::uint64_t seed) {
  std::vector<LabeledImage> out;
  for (int k = 0; k < kPatterns; ++k) {
    for (int i = 0; i < per_class; ++i) {
      const auto pattern = static_cast<Pattern>(k);
      const std::uint64_t s = seed * 1000003ULL + static_cast<std::uint64_t>(k) * 7919ULL + static_cast<std::uint64_t>(i);
      out.push_back({render(pattern, size, size, s), k, std::string(pattern_name(pattern)) + "_" + std::to_string(i)});
    }
  }
  return out;
}

}  // namespace chromatix::synthetic
