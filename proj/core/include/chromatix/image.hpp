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
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "chromatix/error.hpp"

namespace chromatix::image {

/// Single-channel float plane, row-major.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  Plane() = default;
  Plane(int w, int h, float fill = 0.0f)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  bool empty() const noexcept { return data.empty(); }

  friend bool operator==(const Plane&, const Plane&) = default;
};

/// 8-bit sRGB, interleaved RGB.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3) {}

  std::uint8_t* px(int x, int y) { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* px(int x, int y) const {
    return &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
  }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

inline constexpr float kMaxL = 100.0f;
inline constexpr float kMaxAb = 110.0f;

/// CIE Lab planes: L in [0, 100], a and b in [-110, 110].
struct LabImage {
  Plane L, a, b;

  LabImage() = default;
  LabImage(int w, int h) : L(w, h), a(w, h), b(w, h) {}

  int width() const noexcept { return L.width; }
  int height() const noexcept { return L.height; }

  friend bool operator==(const LabImage&, const LabImage&) = default;
};

struct Lab {
  double L, a, b;
};

/// D65 white, IEC 61966-2-1 transfer curve. Results clamped to LabImage ranges.
Lab srgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b);
std::array<std::uint8_t, 3> lab_to_srgb(const Lab& lab);

LabImage rgb_to_lab(const RgbImage& rgb);
RgbImage lab_to_rgb(const LabImage& lab);

/// Lab image with the chrominance of `ab` and the luminance `L`.
LabImage compose(const Plane& L, const Plane& a, const Plane& b);

/// Neutral (a = b = 0) Lab image from a luminance plane.
LabImage gray_lab(const Plane& L);

// --- codecs -----------------------------------------------------------------

/// Decodes any PNG (gray, palette, alpha, 16-bit) to 8-bit RGB.
RgbImage decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const RgbImage& img);
/// Encodes values in [lo, hi] to an 8-bit grayscale PNG.
std::vector<std::uint8_t> encode_png_gray(const Plane& plane, float lo, float hi);

RgbImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& img);

/// Plain ASCII PPM (P3, maxval 255) used for golden fixtures.
std::string encode_ppm(const RgbImage& img);
RgbImage decode_ppm(std::string_view text);

/// Reads .png or .ppm by extension.
RgbImage read_image(const std::filesystem::path& path);

// --- geometry ---------------------------------------------------------------

/// Box-filtered resampling to exactly width x height.
RgbImage resize(const RgbImage& img, int width, int height);

/// Scales so the short edge equals `short_edge`, keeping aspect.
RgbImage resize_short_edge(const RgbImage& img, int short_edge);

/// Short edge to `size`, then a centered size x size crop.
RgbImage resize_center_crop(const RgbImage& img, int size);

// --- luminance statistics ---------------------------------------------------

struct Rect {
  int x = 0, y = 0, width = 0, height = 0;
};

inline constexpr int kHistogramBins = 32;

/// 32 equal-width bins over L in [0, 100]; L = 100 lands in the last bin.
struct LumaHistogram {
  std::array<std::uint32_t, kHistogramBins> bins{};
  std::uint32_t total = 0;

  friend bool operator==(const LumaHistogram&, const LumaHistogram&) = default;
};

int luma_bin(float L);

LumaHistogram luma_histogram(const Plane& L, const Rect& window);

/// Pearson correlation of two bin vectors. When either has zero variance the
/// result is 1 if the vectors are identical and 0 otherwise.
double histogram_correlation(std::span<const double> h1, std::span<const double> h2);
double histogram_correlation(const LumaHistogram& h1, const LumaHistogram& h2);

}  // namespace chromatix::image
