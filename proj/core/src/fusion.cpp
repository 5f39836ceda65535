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

#include "chromatix/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "chromatix/bytes.hpp"
#include "chromatix/graph.hpp"
#include "chromatix/ops.hpp"

namespace chromatix::fusion {

double cosine(std::span<const float> x, std::span<const float> y) {
  if (x.size() != y.size()) {
    throw ContractError("cosine: length mismatch " + std::to_string(x.size()) + " vs " +
                        std::to_string(y.size()));
  }
  double dot = 0.0, nx = 0.0, ny = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += static_cast<double>(x[i]) * y[i];
    nx += static_cast<double>(x[i]) * x[i];
    ny += static_cast<double>(y[i]) * y[i];
  }
  if (nx == 0.0 || ny == 0.0) return 0.0;
  return dot / (std::sqrt(nx) * std::sqrt(ny));
}

const image::Plane& SimilarityMaps::channel(int i) const {
  if (i < 0 || i >= kSimilarityChannels) throw ContractError("similarity channel out of range");
  return i < encoder::kLevels ? target_to_reference[static_cast<std::size_t>(i)]
                              : reference_to_target[static_cast<std::size_t>(i - encoder::kLevels)];
}

image::Plane& SimilarityMaps::channel(int i) {
  return const_cast<image::Plane&>(std::as_const(*this).channel(i));
}

std::array<nn::Tensor, encoder::kLevels> upsample_pyramid(const encoder::FeaturePyramid& pyramid,
                                                          int width, int height) {
  std::array<nn::Tensor, encoder::kLevels> out;
  for (int i = 0; i < encoder::kLevels; ++i) {
    const nn::Tensor& level = pyramid.levels[static_cast<std::size_t>(i)];
    if (level.dim(1) == height && level.dim(2) == width) {
      out[static_cast<std::size_t>(i)] = level;
      continue;
    }
    nn::Graph g;
    const nn::Var x = g.input(level.reshaped({1, level.dim(0), level.dim(1), level.dim(2)}));
    const nn::Var up = nn::upsample_bilinear(g, x, height, width);
    out[static_cast<std::size_t>(i)] = g.value(up).reshaped({level.dim(0), height, width});
  }
  return out;
}

namespace {

// Pixel-major unit vectors of one feature level; zero vectors stay zero, so
// dot products reproduce cosine() including its zero convention.
struct UnitFeatures {
  int width, height, channels;
  std::vector<double> data;

  explicit UnitFeatures(const nn::Tensor& chw)
      : width(chw.dim(2)), height(chw.dim(1)), channels(chw.dim(0)),
        data(chw.size(), 0.0) {
    const std::size_t plane = static_cast<std::size_t>(width) * height;
    for (std::size_t p = 0; p < plane; ++p) {
      double norm = 0.0;
      for (int c = 0; c < channels; ++c) {
        const double v = chw[static_cast<std::size_t>(c) * plane + p];
        norm += v * v;
      }
      if (norm == 0.0) continue;
      const double inv = 1.0 / std::sqrt(norm);
      for (int c = 0; c < channels; ++c) {
        data[p * channels + c] = chw[static_cast<std::size_t>(c) * plane + p] * inv;
      }
    }
  }

  const double* at(match::Coord p) const {
    return data.data() + (static_cast<std::size_t>(p.y) * width + p.x) * channels;
  }
};

double dot(const double* u, const double* v, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += u[i] * v[i];
  return std::clamp(s, -1.0, 1.0);
}

void check_field(const match::MappingField& f, int w, int h, int tw, int th, const char* name) {
  if (f.width != w || f.height != h || f.target_width != tw || f.target_height != th) {
    throw ContractError(std::string("similarity_maps: ") + name + " field is " +
                        std::to_string(f.width) + "x" + std::to_string(f.height) + " -> " +
                        std::to_string(f.target_width) + "x" + std::to_string(f.target_height) +
                        ", expected " + std::to_string(w) + "x" + std::to_string(h) + " -> " +
                        std::to_string(tw) + "x" + std::to_string(th));
  }
  f.validate();
}

}  // namespace

SimilarityMaps similarity_maps(std::span<const nn::Tensor> target_levels,
                               std::span<const nn::Tensor> reference_levels,
                               const match::MappingField& t2r, const match::MappingField& r2t) {
  if (target_levels.size() != encoder::kLevels || reference_levels.size() != encoder::kLevels) {
    throw ContractError("similarity_maps: expected " + std::to_string(encoder::kLevels) + " levels");
  }
  const int tw = target_levels[0].dim(2), th = target_levels[0].dim(1);
  const int rw = reference_levels[0].dim(2), rh = reference_levels[0].dim(1);
  for (int i = 0; i < encoder::kLevels; ++i) {
    const nn::Tensor& t = target_levels[static_cast<std::size_t>(i)];
    const nn::Tensor& r = reference_levels[static_cast<std::size_t>(i)];
    if (t.rank() != 3 || r.rank() != 3 || t.dim(1) != th || t.dim(2) != tw || r.dim(1) != rh ||
        r.dim(2) != rw || t.dim(0) != r.dim(0)) {
      throw ContractError("similarity_maps: level " + std::to_string(i + 1) +
                          " resolution mismatch: " + nn::dims_string(t.dims()) + " vs " +
                          nn::dims_string(r.dims()));
    }
  }
  check_field(t2r, tw, th, rw, rh, "T->R");
  check_field(r2t, rw, rh, tw, th, "R->T");

  SimilarityMaps out;
  for (int i = 0; i < encoder::kLevels; ++i) {
    const UnitFeatures ft(target_levels[static_cast<std::size_t>(i)]);
    const UnitFeatures fr(reference_levels[static_cast<std::size_t>(i)]);
    image::Plane fwd(tw, th), bwd(tw, th);
    for (int y = 0; y < th; ++y) {
      for (int x = 0; x < tw; ++x) {
        const match::Coord q = t2r.at(x, y);
        const match::Coord back = r2t.at(q);
        const double* fr_q = fr.at(q);
        fwd.at(x, y) = static_cast<float>(dot(ft.at({x, y}), fr_q, ft.channels));
        bwd.at(x, y) = static_cast<float>(dot(ft.at(back), fr_q, ft.channels));
      }
    }
    out.target_to_reference[static_cast<std::size_t>(i)] = std::move(fwd);
    out.reference_to_target[static_cast<std::size_t>(i)] = std::move(bwd);
  }
  return out;
}

SimilarityMaps similarity_maps(const encoder::FeaturePyramid& target,
                               const encoder::FeaturePyramid& reference,
                               const match::MappingField& t2r, const match::MappingField& r2t) {
  const auto t = upsample_pyramid(target, target.width(), target.height());
  const auto r = upsample_pyramid(reference, reference.width(), reference.height());
  return similarity_maps(std::span<const nn::Tensor>(t), std::span<const nn::Tensor>(r), t2r, r2t);
}

image::Plane gather(const image::Plane& source, const match::MappingField& field) {
  if (field.target_width != source.width || field.target_height != source.height) {
    throw ContractError("gather: field targets " + std::to_string(field.target_width) + "x" +
                        std::to_string(field.target_height) + ", plane is " +
                        std::to_string(source.width) + "x" + std::to_string(source.height));
  }
  image::Plane out(field.width, field.height);
  for (int y = 0; y < field.height; ++y) {
    for (int x = 0; x < field.width; ++x) {
      const match::Coord q = field.at(x, y);
      if (q.x < 0 || q.y < 0 || q.x >= source.width || q.y >= source.height) {
        throw Error("internal: mapping coordinate (" + std::to_string(q.x) + ", " +
                    std::to_string(q.y) + ") outside " + std::to_string(source.width) + "x" +
                    std::to_string(source.height));
      }
      out.at(x, y) = source.at(q.x, q.y);
    }
  }
  return out;
}

Chrominance warp_chrominance(const image::Plane& ref_a, const image::Plane& ref_b,
                             const match::MappingField& t2r) {
  return {gather(ref_a, t2r), gather(ref_b, t2r)};
}

Chrominance fake_reference(const image::Plane& target_a, const image::Plane& target_b,
                           const match::MappingField& t2r, const match::MappingField& r2t) {
  if (r2t.width != t2r.target_width || r2t.height != t2r.target_height) {
    throw ContractError("fake_reference: fields do not compose");
  }
  match::MappingField composed(t2r.width, t2r.height, r2t.target_width, r2t.target_height);
  for (int y = 0; y < t2r.height; ++y) {
    for (int x = 0; x < t2r.width; ++x) {
      const match::Coord q = t2r.at(x, y);
      if (q.x < 0 || q.y < 0 || q.x >= r2t.width || q.y >= r2t.height) {
        throw Error("internal: T->R coordinate outside reference bounds");
      }
      composed.at(x, y) = r2t.at(q);
    }
  }
  return {gather(target_a, composed), gather(target_b, composed)};
}

void dump_similarity(const SimilarityMaps& maps, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (int i = 0; i < kSimilarityChannels; ++i) {
    const image::Plane& sim = maps.channel(i);
    image::Plane err(sim.width, sim.height);
    for (std::size_t k = 0; k < sim.data.size(); ++k) err.data[k] = 1.0f - sim.data[k];
    const std::string name = std::string("error_") + (i < encoder::kLevels ? "t2r_" : "r2t_") +
                             std::to_string(i % encoder::kLevels + 1) + ".png";
    write_file(dir / name, image::encode_png_gray(err, 0.0f, 2.0f));
  }
}

}  // namespace chromatix::fusion
