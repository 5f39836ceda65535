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

#include "chromatix/correspondence.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "chromatix/bytes.hpp"
#include "chromatix/random.hpp"

namespace chromatix::match {

MappingField MappingField::identity(int w, int h) {
  MappingField f(w, h, w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f.at(x, y) = {x, y};
  }
  return f;
}

bool MappingField::in_bounds() const {
  return std::all_of(map.begin(), map.end(), [&](Coord c) {
    return c.x >= 0 && c.y >= 0 && c.x < target_width && c.y < target_height;
  });
}

void MappingField::validate() const {
  if (map.size() != static_cast<std::size_t>(width) * height) {
    throw Error("mapping field: storage does not match extent");
  }
  if (!in_bounds()) throw Error("mapping field: coordinate outside target bounds");
}

std::string config_digest(const MatchConfig& c) {
  std::ostringstream s;
  s << "r" << c.patch_radius << ";i" << c.iterations << ";l" << c.levels << ";d" << c.search_decay
    << ";n" << c.search_samples
    << ";s" << c.seed;
  return sha256_hex(s.str());
}

NormalizedFeatures::NormalizedFeatures(const nn::Tensor& chw) {
  if (chw.rank() != 3) throw ContractError("match: feature maps must be [C, H, W]");
  channels_ = chw.dim(0);
  height_ = chw.dim(1);
  width_ = chw.dim(2);
  const std::size_t plane = static_cast<std::size_t>(width_) * height_;
  data_.assign(plane * channels_, 0.0f);
  nonzero_.assign(plane, 0);
  for (std::size_t p = 0; p < plane; ++p) {
    double norm = 0.0;
    for (int c = 0; c < channels_; ++c) {
      const double v = chw[static_cast<std::size_t>(c) * plane + p];
      norm += v * v;
    }
    if (norm <= 0.0) continue;
    nonzero_[p] = 1;
    const double inv = 1.0 / std::sqrt(norm);
    for (int c = 0; c < channels_; ++c) {
      data_[p * channels_ + c] = static_cast<float>(chw[static_cast<std::size_t>(c) * plane + p] * inv);
    }
  }
}

double patch_cost(const NormalizedFeatures& s, const NormalizedFeatures& t, Coord sp, Coord tp,
                  int radius) {
  double dot = 0.0;
  int ns = 0, nt = 0;
  const int c = s.channels();
  for (int dy = -radius; dy <= radius; ++dy) {
    const int sy = sp.y + dy, ty = tp.y + dy;
    if (sy < 0 || sy >= s.height() || ty < 0 || ty >= t.height()) continue;
    for (int dx = -radius; dx <= radius; ++dx) {
      const int sx = sp.x + dx, tx = tp.x + dx;
      if (sx < 0 || sx >= s.width() || tx < 0 || tx >= t.width()) continue;
      const bool a = s.nonzero(sx, sy), b = t.nonzero(tx, ty);
      ns += a;
      nt += b;
      if (!a || !b) continue;
      const float* u = s.pixel(sx, sy);
      const float* v = t.pixel(tx, ty);
      float acc = 0.0f;
      for (int k = 0; k < c; ++k) acc += u[k] * v[k];
      dot += acc;
    }
  }
  if (ns == 0 || nt == 0) return 1.0;
  return 1.0 - dot / std::sqrt(static_cast<double>(ns) * nt);
}

double mean_field_cost(const NormalizedFeatures& s, const NormalizedFeatures& t,
                       const MappingField& f, int radius) {
  double total = 0.0;
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) total += patch_cost(s, t, {x, y}, f.at(x, y), radius);
  }
  return total / (static_cast<double>(f.width) * f.height);
}

namespace {

class LevelSolver {
 public:
  LevelSolver(const NormalizedFeatures& s, const NormalizedFeatures& t, MappingField field,
              int radius)
      : s_(s), t_(t), field_(std::move(field)), radius_(radius),
        cost_(field_.map.size()) {
    for (int y = 0; y < field_.height; ++y) {
      for (int x = 0; x < field_.width; ++x) cost_[index(x, y)] = cost({x, y}, field_.at(x, y));
    }
  }

  double total() const {
    double sum = 0.0;
    for (double c : cost_) sum += c;
    return sum;
  }

  void iterate(int iteration, Rng& rng, double decay, int samples) {
    const bool forward = iteration % 2 == 0;
    const int step = forward ? 1 : -1;
    const int x0 = forward ? 0 : field_.width - 1, x1 = forward ? field_.width : -1;
    const int y0 = forward ? 0 : field_.height - 1, y1 = forward ? field_.height : -1;
    const int max_radius = std::max(t_.width(), t_.height());
    for (int y = y0; y != y1; y += step) {
      for (int x = x0; x != x1; x += step) {
        // Propagation: shift the already-visited neighbors' matches.
        const int nx = x - step, ny = y - step;
        if (nx >= 0 && nx < field_.width) {
          const Coord q = field_.at(nx, y);
          try_candidate(x, y, {q.x + step, q.y});
        }
        if (ny >= 0 && ny < field_.height) {
          const Coord q = field_.at(x, ny);
          try_candidate(x, y, {q.x, q.y + step});
        }
        // Random search in windows shrinking around the current match.
        for (double r = max_radius; r >= 1.0; r *= decay) {
          const Coord cur = field_.at(x, y);
          const int ri = static_cast<int>(r);
          const int lx = std::max(0, cur.x - ri), hx = std::min(t_.width() - 1, cur.x + ri);
          const int ly = std::max(0, cur.y - ri), hy = std::min(t_.height() - 1, cur.y + ri);
          for (int k = 0; k < samples; ++k) {
            const Coord cand{lx + static_cast<int>(rng.below(static_cast<std::uint64_t>(hx - lx + 1))),
                             ly + static_cast<int>(rng.below(static_cast<std::uint64_t>(hy - ly + 1)))};
            try_candidate(x, y, cand);
          }
          if (decay <= 0.0 || decay >= 1.0) break;
        }
      }
    }
  }

  MappingField take() { return std::move(field_); }

 private:
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * field_.width + x; }

  double cost(Coord sp, Coord tp) const { return patch_cost(s_, t_, sp, tp, radius_); }

  void try_candidate(int x, int y, Coord c) {
    c.x = std::clamp(c.x, 0, t_.width() - 1);
    c.y = std::clamp(c.y, 0, t_.height() - 1);
    if (c == field_.at(x, y)) return;
    const double v = cost({x, y}, c);
    if (v < cost_[index(x, y)]) {
      cost_[index(x, y)] = v;
      field_.at(x, y) = c;
    }
  }

  const NormalizedFeatures& s_;
  const NormalizedFeatures& t_;
  MappingField field_;
  int radius_;
  std::vector<double> cost_;
};

MappingField random_field(int w, int h, int tw, int th, Rng& rng) {
  MappingField f(w, h, tw, th);
  for (Coord& c : f.map) {
    c.x = static_cast<int>(rng.below(static_cast<std::uint64_t>(tw)));
    c.y = static_cast<int>(rng.below(static_cast<std::uint64_t>(th)));
  }
  return f;
}

// Pixel-doubling upscale of a coarse field onto the next finer grid.
MappingField upscale(const MappingField& coarse, int w, int h, int tw, int th) {
  MappingField f(w, h, tw, th);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Coord c = coarse.at(std::min(x / 2, coarse.width - 1), std::min(y / 2, coarse.height - 1));
      f.at(x, y) = {std::clamp(2 * c.x + x % 2, 0, tw - 1), std::clamp(2 * c.y + y % 2, 0, th - 1)};
    }
  }
  return f;
}

}  // namespace

MappingField nnf(std::span<const nn::Tensor> source, std::span<const nn::Tensor> target,
                 const MatchConfig& config, const IterationObserver& observer) {
  if (source.size() != target.size()) {
    throw ContractError("nnf: pyramid level-count mismatch (" + std::to_string(source.size()) +
                        " vs " + std::to_string(target.size()) + ")");
  }
  if (source.empty()) throw ContractError("nnf: empty pyramids");
  if (config.patch_radius < 0) throw ContractError("nnf: patch radius must be >= 0");
  if (config.iterations < 1) throw ContractError("nnf: iterations must be >= 1");
  if (config.levels < 1) throw ContractError("nnf: levels must be >= 1");
  if (config.search_samples < 1) throw ContractError("nnf: search samples must be >= 1");
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (source[i].rank() != 3 || target[i].rank() != 3 || source[i].dim(0) != target[i].dim(0)) {
      throw ContractError("nnf: level " + std::to_string(i + 1) + " feature dims differ: " +
                          nn::dims_string(source[i].dims()) + " vs " +
                          nn::dims_string(target[i].dims()));
    }
  }

  const int top = std::min<int>(config.levels, static_cast<int>(source.size()));
  MappingField field;
  for (int level = top; level >= 1; --level) {
    const NormalizedFeatures s(source[static_cast<std::size_t>(level - 1)]);
    const NormalizedFeatures t(target[static_cast<std::size_t>(level - 1)]);
    Rng rng(config.seed * 0x100000001b3ULL + static_cast<std::uint64_t>(level));
    MappingField init = level == top
                            ? random_field(s.width(), s.height(), t.width(), t.height(), rng)
                            : upscale(field, s.width(), s.height(), t.width(), t.height());
    LevelSolver solver(s, t, std::move(init), config.patch_radius);
    if (observer) observer(level, -1, solver.total());
    for (int it = 0; it < config.iterations; ++it) {
      solver.iterate(it, rng, config.search_decay, config.search_samples);
      if (observer) observer(level, it, solver.total());
    }
    field = solver.take();
  }
  return field;
}

MappingField nnf(const encoder::FeaturePyramid& source, const encoder::FeaturePyramid& target,
                 const MatchConfig& config, const IterationObserver& observer) {
  return nnf(std::span<const nn::Tensor>(source.levels), std::span<const nn::Tensor>(target.levels),
             config, observer);
}

FieldPair bidirectional(const encoder::FeaturePyramid& target,
                        const encoder::FeaturePyramid& reference, const MatchConfig& config) {
  FieldPair out;
  out.target_to_reference = nnf(target, reference, config);
  out.reference_to_target = nnf(reference, target, config);
  return out;
}

double cross_check_ratio(const MappingField& t2r, const MappingField& r2t) {
  if (t2r.target_width != r2t.width || t2r.target_height != r2t.height ||
      r2t.target_width != t2r.width || r2t.target_height != t2r.height) {
    throw ContractError("cross_check_ratio: fields are not mutually inverse in extent");
  }
  std::size_t hits = 0;
  for (int y = 0; y < t2r.height; ++y) {
    for (int x = 0; x < t2r.width; ++x) {
      if (r2t.at(t2r.at(x, y)) == Coord{x, y}) ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(t2r.map.size());
}

image::RgbImage field_to_rgb(const MappingField& f) {
  image::RgbImage out(f.width, f.height);
  const double sx = 127.0 / std::max(1, f.target_width), sy = 127.0 / std::max(1, f.target_height);
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      const Coord c = f.at(x, y);
      std::uint8_t* p = out.px(x, y);
      p[0] = static_cast<std::uint8_t>(std::clamp(128.0 + (c.x - x) * sx, 0.0, 255.0));
      p[1] = static_cast<std::uint8_t>(std::clamp(128.0 + (c.y - y) * sy, 0.0, 255.0));
      p[2] = 128;
    }
  }
  return out;
}

}  // namespace chromatix::match
