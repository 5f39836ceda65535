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

#include "chromatix/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "chromatix/bytes.hpp"

namespace chromatix::image {

namespace {

// Linear sRGB -> XYZ, D65.
constexpr double kRgbToXyz[3][3] = {
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
};

struct XyzTables {
  double white[3];
  double inverse[3][3];
  double linear[256];
};

const XyzTables& tables() {
  static const XyzTables t = [] {
    XyzTables x{};
    // White is the image of RGB (1,1,1), so neutral inputs map to a = b = 0.
    for (int r = 0; r < 3; ++r) x.white[r] = kRgbToXyz[r][0] + kRgbToXyz[r][1] + kRgbToXyz[r][2];
    const auto& m = kRgbToXyz;
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const int r0 = (j + 1) % 3, r1 = (j + 2) % 3, c0 = (i + 1) % 3, c1 = (i + 2) % 3;
        x.inverse[i][j] = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
      }
    }
    for (int v = 0; v < 256; ++v) {
      const double c = v / 255.0;
      x.linear[v] = c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
    }
    return x;
  }();
  return t;
}

constexpr double kDelta = 6.0 / 29.0;

double lab_f(double t) {
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

double lab_f_inv(double f) {
  return f > kDelta ? f * f * f : 3.0 * kDelta * kDelta * (f - 4.0 / 29.0);
}

double gamma_encode(double c) {
  return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
}

void require_nonempty(int w, int h, const char* what) {
  if (w <= 0 || h <= 0) throw ContractError(std::string(what) + ": zero-sized image");
}

}  // namespace

Lab srgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const XyzTables& t = tables();
  const double lin[3] = {t.linear[r], t.linear[g], t.linear[b]};
  double f[3];
  for (int i = 0; i < 3; ++i) {
    const double xyz = kRgbToXyz[i][0] * lin[0] + kRgbToXyz[i][1] * lin[1] + kRgbToXyz[i][2] * lin[2];
    f[i] = lab_f(xyz / t.white[i]);
  }
  Lab out{116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])};
  out.L = std::clamp(out.L, 0.0, static_cast<double>(kMaxL));
  out.a = std::clamp(out.a, -static_cast<double>(kMaxAb), static_cast<double>(kMaxAb));
  out.b = std::clamp(out.b, -static_cast<double>(kMaxAb), static_cast<double>(kMaxAb));
  return out;
}

std::array<std::uint8_t, 3> lab_to_srgb(const Lab& lab) {
  const XyzTables& t = tables();
  const double fy = (lab.L + 16.0) / 116.0;
  const double fx = fy + lab.a / 500.0;
  const double fz = fy - lab.b / 200.0;
  const double xyz[3] = {t.white[0] * lab_f_inv(fx), t.white[1] * lab_f_inv(fy),
                         t.white[2] * lab_f_inv(fz)};
  std::array<std::uint8_t, 3> out{};
  for (int i = 0; i < 3; ++i) {
    const double lin = t.inverse[i][0] * xyz[0] + t.inverse[i][1] * xyz[1] + t.inverse[i][2] * xyz[2];
    out[static_cast<std::size_t>(i)] = to_byte(gamma_encode(std::clamp(lin, 0.0, 1.0)));
  }
  return out;
}

LabImage rgb_to_lab(const RgbImage& rgb) {
  require_nonempty(rgb.width, rgb.height, "rgb_to_lab");
  LabImage out(rgb.width, rgb.height);
  for (std::size_t i = 0; i < out.L.data.size(); ++i) {
    const std::uint8_t* p = &rgb.pixels[i * 3];
    const Lab lab = srgb_to_lab(p[0], p[1], p[2]);
    out.L.data[i] = static_cast<float>(lab.L);
    out.a.data[i] = static_cast<float>(lab.a);
    out.b.data[i] = static_cast<float>(lab.b);
  }
  return out;
}

RgbImage lab_to_rgb(const LabImage& lab) {
  require_nonempty(lab.width(), lab.height(), "lab_to_rgb");
  RgbImage out(lab.width(), lab.height());
  for (std::size_t i = 0; i < lab.L.data.size(); ++i) {
    const auto px = lab_to_srgb({lab.L.data[i], lab.a.data[i], lab.b.data[i]});
    std::copy(px.begin(), px.end(), &out.pixels[i * 3]);
  }
  return out;
}

LabImage compose(const Plane& L, const Plane& a, const Plane& b) {
  if (a.width != L.width || a.height != L.height || b.width != L.width || b.height != L.height) {
    throw ContractError("compose: plane dims differ");
  }
  LabImage out;
  out.L = L;
  out.a = a;
  out.b = b;
  return out;
}

LabImage gray_lab(const Plane& L) {
  return compose(L, Plane(L.width, L.height), Plane(L.width, L.height));
}

// --- codecs -----------------------------------------------------------------

RgbImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw LoadError(std::string("png: ") + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  if (img.width == 0 || img.height == 0 || img.width > 1u << 15 || img.height > 1u << 15) {
    png_image_free(&img);
    throw LoadError("png: unsupported dimensions");
  }
  RgbImage out(static_cast<int>(img.width), static_cast<int>(img.height));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw LoadError("png: " + msg);
  }
  return out;
}

namespace {

std::vector<std::uint8_t> write_png_memory(const void* pixels, int w, int h, png_uint_32 format) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, pixels, 0, nullptr)) {
    throw Error(std::string("png encode: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, pixels, 0, nullptr)) {
    throw Error(std::string("png encode: ") + img.message);
  }
  out.resize(size);
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  require_nonempty(img.width, img.height, "encode_png");
  return write_png_memory(img.pixels.data(), img.width, img.height, PNG_FORMAT_RGB);
}

std::vector<std::uint8_t> encode_png_gray(const Plane& plane, float lo, float hi) {
  require_nonempty(plane.width, plane.height, "encode_png_gray");
  std::vector<std::uint8_t> px(plane.data.size());
  const double range = hi - lo;
  for (std::size_t i = 0; i < px.size(); ++i) {
    px[i] = to_byte(range > 0 ? (plane.data[i] - lo) / range : 0.0);
  }
  return write_png_memory(px.data(), plane.width, plane.height, PNG_FORMAT_GRAY);
}

RgbImage read_png(const std::filesystem::path& path) {
  try {
    return decode_png(read_file(path));
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

void write_png(const std::filesystem::path& path, const RgbImage& img) {
  write_file(path, encode_png(img));
}

std::string encode_ppm(const RgbImage& img) {
  require_nonempty(img.width, img.height, "encode_ppm");
  std::ostringstream out;
  out << "P3\n" << img.width << ' ' << img.height << "\n255\n";
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const std::uint8_t* p = img.px(x, y);
      out << int(p[0]) << ' ' << int(p[1]) << ' ' << int(p[2]) << (x + 1 == img.width ? '\n' : ' ');
    }
  }
  return out.str();
}

RgbImage decode_ppm(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  if (!(in >> magic >> w >> h >> maxval) || magic != "P3" || w <= 0 || h <= 0 || maxval != 255) {
    throw LoadError("ppm: expected 'P3 <w> <h> 255' header");
  }
  RgbImage out(w, h);
  for (std::uint8_t& v : out.pixels) {
    int x;
    if (!(in >> x) || x < 0 || x > 255) throw LoadError("ppm: truncated or out-of-range sample");
    v = static_cast<std::uint8_t>(x);
  }
  return out;
}

RgbImage read_image(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".ppm") {
    const auto bytes = read_file(path);
    return decode_ppm(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  }
  return read_png(path);
}

// --- geometry ---------------------------------------------------------------

RgbImage resize(const RgbImage& img, int width, int height) {
  require_nonempty(img.width, img.height, "resize");
  if (width <= 0 || height <= 0) throw ContractError("resize: zero-sized target");
  if (width == img.width && height == img.height) return img;
  // Separable box filter: each output sample averages its source footprint
  // with fractional edge coverage.
  auto weights = [](int in, int out) {
    std::vector<std::vector<std::pair<int, double>>> taps(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      double lo = o * scale, hi = (o + 1) * scale;
      if (hi - lo < 1.0) {  // upsampling: unit footprint centered on the sample
        const double c = (lo + hi) / 2.0;
        lo = std::max(0.0, c - 0.5);
        hi = std::min(static_cast<double>(in), lo + 1.0);
        lo = hi - 1.0;
      }
      double total = 0.0;
      auto& t = taps[static_cast<std::size_t>(o)];
      for (int i = static_cast<int>(std::floor(lo)); i < static_cast<int>(std::ceil(hi)); ++i) {
        const double cover = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
        if (cover > 1e-12) {
          t.emplace_back(std::clamp(i, 0, in - 1), cover);
          total += cover;
        }
      }
      for (auto& [i, wgt] : t) wgt /= total;
    }
    return taps;
  };
  const auto wx = weights(img.width, width);
  const auto wy = weights(img.height, height);
  std::vector<double> tmp(static_cast<std::size_t>(width) * img.height * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (const auto& [sx, wgt] : wx[static_cast<std::size_t>(x)]) {
        const std::uint8_t* p = img.px(sx, y);
        for (int c = 0; c < 3; ++c) tmp[(static_cast<std::size_t>(y) * width + x) * 3 + c] += wgt * p[c];
      }
    }
  }
  RgbImage out(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc[3] = {0, 0, 0};
      for (const auto& [sy, wgt] : wy[static_cast<std::size_t>(y)]) {
        for (int c = 0; c < 3; ++c) acc[c] += wgt * tmp[(static_cast<std::size_t>(sy) * width + x) * 3 + c];
      }
      std::uint8_t* p = out.px(x, y);
      for (int c = 0; c < 3; ++c) p[c] = static_cast<std::uint8_t>(std::clamp(std::lround(acc[c]), 0L, 255L));
    }
  }
  return out;
}

RgbImage resize_short_edge(const RgbImage& img, int short_edge) {
  require_nonempty(img.width, img.height, "resize_short_edge");
  const int s = std::min(img.width, img.height);
  const int w = std::max(1, static_cast<int>(std::lround(static_cast<double>(img.width) * short_edge / s)));
  const int h = std::max(1, static_cast<int>(std::lround(static_cast<double>(img.height) * short_edge / s)));
  return resize(img, w, h);
}

RgbImage resize_center_crop(const RgbImage& img, int size) {
  const RgbImage scaled = resize_short_edge(img, size);
  const int x0 = (scaled.width - size) / 2, y0 = (scaled.height - size) / 2;
  RgbImage out(size, size);
  for (int y = 0; y < size; ++y) {
    std::copy_n(scaled.px(x0, y0 + y), static_cast<std::size_t>(size) * 3, out.px(0, y));
  }
  return out;
}

// --- luminance statistics ---------------------------------------------------

int luma_bin(float L) {
  const double v = std::clamp(static_cast<double>(L), 0.0, static_cast<double>(kMaxL));
  return std::min(kHistogramBins - 1, static_cast<int>(v / kMaxL * kHistogramBins));
}

LumaHistogram luma_histogram(const Plane& L, const Rect& w) {
  if (w.width <= 0 || w.height <= 0) throw ContractError("luma_histogram: empty window");
  if (w.x < 0 || w.y < 0 || w.x + w.width > L.width || w.y + w.height > L.height) {
    throw ContractError("luma_histogram: window outside image bounds");
  }
  LumaHistogram h;
  for (int y = w.y; y < w.y + w.height; ++y) {
    for (int x = w.x; x < w.x + w.width; ++x) ++h.bins[static_cast<std::size_t>(luma_bin(L.at(x, y)))];
  }
  h.total = static_cast<std::uint32_t>(w.width) * static_cast<std::uint32_t>(w.height);
  return h;
}

double histogram_correlation(std::span<const double> h1, std::span<const double> h2) {
  if (h1.size() != h2.size()) throw ContractError("histogram_correlation: bin-count mismatch");
  if (h1.empty()) throw ContractError("histogram_correlation: no bins");
  const double n = static_cast<double>(h1.size());
  double m1 = 0, m2 = 0;
  for (std::size_t i = 0; i < h1.size(); ++i) {
    m1 += h1[i];
    m2 += h2[i];
  }
  m1 /= n;
  m2 /= n;
  double s11 = 0, s22 = 0, s12 = 0;
  for (std::size_t i = 0; i < h1.size(); ++i) {
    const double d1 = h1[i] - m1, d2 = h2[i] - m2;
    s11 += d1 * d1;
    s22 += d2 * d2;
    s12 += d1 * d2;
  }
  if (s11 == 0.0 || s22 == 0.0) {
    return std::equal(h1.begin(), h1.end(), h2.begin()) ? 1.0 : 0.0;
  }
  return std::clamp(s12 / std::sqrt(s11 * s22), -1.0, 1.0);
}

double histogram_correlation(const LumaHistogram& h1, const LumaHistogram& h2) {
  std::array<double, kHistogramBins> a{}, b{};
  std::copy(h1.bins.begin(), h1.bins.end(), a.begin());
  std::copy(h2.bins.begin(), h2.bins.end(), b.begin());
  return histogram_correlation(a, b);
}

}  // namespace chromatix::image
