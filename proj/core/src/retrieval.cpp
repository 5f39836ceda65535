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

#include "chromatix/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "chromatix/fusion.hpp"

namespace chromatix::retrieval {

// --- PCA --------------------------------------------------------------------

void symmetric_eigen(std::vector<double> a, int n, std::vector<double>& values,
                     std::vector<double>& vectors) {
  const auto N = static_cast<std::size_t>(n);
  if (a.size() != N * N) throw ContractError("symmetric_eigen: matrix is not n x n");
  std::vector<double> v(N * N, 0.0);
  for (std::size_t i = 0; i < N; ++i) v[i * N + i] = 1.0;
  auto A = [&](std::size_t i, std::size_t j) -> double& { return a[i * N + j]; };

  double scale = 0.0;
  for (double x : a) scale += x * x;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < N; ++p) {
      for (std::size_t q = p + 1; q < N; ++q) off += A(p, q) * A(p, q);
    }
    if (off <= 1e-30 * scale || off == 0.0) break;
    for (std::size_t p = 0; p < N; ++p) {
      for (std::size_t q = p + 1; q < N; ++q) {
        const double apq = A(p, q);
        if (apq == 0.0) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < N; ++k) {
          const double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < N; ++k) {
          const double apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < N; ++k) {
          const double vkp = v[k * N + p], vkq = v[k * N + q];
          v[k * N + p] = c * vkp - s * vkq;
          v[k * N + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return A(x, x) > A(y, y); });
  values.resize(N);
  vectors.assign(N * N, 0.0);
  for (std::size_t r = 0; r < N; ++r) {
    values[r] = A(order[r], order[r]);
    for (std::size_t k = 0; k < N; ++k) vectors[r * N + k] = v[k * N + order[r]];
  }
}

namespace {

struct Centered {
  std::size_t n = 0, d = 0;
  std::vector<double> mean;
  std::vector<double> x;  // n x d
};

Centered center(std::span<const std::vector<float>> samples) {
  if (samples.empty()) throw ContractError("pca: no samples");
  Centered c;
  c.n = samples.size();
  c.d = samples[0].size();
  if (c.d == 0) throw ContractError("pca: zero-length samples");
  c.mean.assign(c.d, 0.0);
  for (const auto& s : samples) {
    if (s.size() != c.d) throw ContractError("pca: samples differ in length");
    for (std::size_t j = 0; j < c.d; ++j) c.mean[j] += s[j];
  }
  for (double& m : c.mean) m /= static_cast<double>(c.n);
  c.x.resize(c.n * c.d);
  for (std::size_t i = 0; i < c.n; ++i) {
    for (std::size_t j = 0; j < c.d; ++j) c.x[i * c.d + j] = samples[i][j] - c.mean[j];
  }
  return c;
}

// Covariance spectrum; eigenvectors in sample space when n < d.
struct Spectrum {
  std::vector<double> values;
  std::vector<double> vectors;
  bool gram = false;
};

Spectrum spectrum(const Centered& c) {
  Spectrum s;
  const double denom = c.n > 1 ? static_cast<double>(c.n - 1) : 1.0;
  s.gram = c.n < c.d;
  const std::size_t m = s.gram ? c.n : c.d;
  std::vector<double> mat(m * m, 0.0);
  if (s.gram) {
    for (std::size_t i = 0; i < c.n; ++i) {
      for (std::size_t j = i; j < c.n; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < c.d; ++k) acc += c.x[i * c.d + k] * c.x[j * c.d + k];
        mat[i * m + j] = mat[j * m + i] = acc / denom;
      }
    }
  } else {
    for (std::size_t r = 0; r < c.n; ++r) {
      const double* row = &c.x[r * c.d];
      for (std::size_t i = 0; i < c.d; ++i) {
        if (row[i] == 0.0) continue;
        for (std::size_t j = i; j < c.d; ++j) mat[i * m + j] += row[i] * row[j];
      }
    }
    for (std::size_t i = 0; i < c.d; ++i) {
      for (std::size_t j = i; j < c.d; ++j) mat[j * m + i] = (mat[i * m + j] /= denom);
    }
  }
  symmetric_eigen(std::move(mat), static_cast<int>(m), s.values, s.vectors);
  return s;
}

int numeric_rank(const std::vector<double>& values) {
  if (values.empty() || values[0] <= 0.0) return 0;
  const double tol = values[0] * 1e-10;
  return static_cast<int>(std::count_if(values.begin(), values.end(), [&](double v) { return v > tol; }));
}

}  // namespace

int PcaModel::rank(std::span<const std::vector<float>> samples) {
  return numeric_rank(spectrum(center(samples)).values);
}

PcaModel PcaModel::fit(std::span<const std::vector<float>> samples, int k) {
  const Centered c = center(samples);
  if (k < 1) throw ContractError("pca: k must be >= 1");
  if (static_cast<std::size_t>(k) > c.d) throw ContractError("pca: k exceeds source dim");
  const Spectrum s = spectrum(c);
  const int r = numeric_rank(s.values);
  if (k > r) {
    throw ContractError("pca: k = " + std::to_string(k) + " exceeds data rank " + std::to_string(r));
  }
  PcaModel m;
  m.source_dim_ = static_cast<int>(c.d);
  m.k_ = k;
  m.mean_ = c.mean;
  m.variances_.assign(s.values.begin(), s.values.begin() + k);
  for (double v : s.values) m.total_variance_ += std::max(v, 0.0);
  m.components_.assign(static_cast<std::size_t>(k) * c.d, 0.0);
  const std::size_t m_dim = s.gram ? c.n : c.d;
  for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
    double* row = &m.components_[i * c.d];
    if (s.gram) {
      // v = X^T u, normalized.
      for (std::size_t r2 = 0; r2 < c.n; ++r2) {
        const double u = s.vectors[i * m_dim + r2];
        for (std::size_t j = 0; j < c.d; ++j) row[j] += u * c.x[r2 * c.d + j];
      }
      // Re-orthogonalize against earlier rows to absorb rounding.
      for (std::size_t p = 0; p < i; ++p) {
        const double* prev = &m.components_[p * c.d];
        double dot = 0.0;
        for (std::size_t j = 0; j < c.d; ++j) dot += prev[j] * row[j];
        for (std::size_t j = 0; j < c.d; ++j) row[j] -= dot * prev[j];
      }
      double norm = 0.0;
      for (std::size_t j = 0; j < c.d; ++j) norm += row[j] * row[j];
      norm = std::sqrt(norm);
      for (std::size_t j = 0; j < c.d; ++j) row[j] /= norm;
    } else {
      std::copy_n(&s.vectors[i * m_dim], c.d, row);
    }
    // Sign convention: largest-magnitude entry positive.
    std::size_t big = 0;
    for (std::size_t j = 1; j < c.d; ++j) {
      if (std::abs(row[j]) > std::abs(row[big])) big = j;
    }
    if (row[big] < 0.0) {
      for (std::size_t j = 0; j < c.d; ++j) row[j] = -row[j];
    }
  }
  return m;
}

double PcaModel::explained_variance_ratio(int i) const {
  if (i < 0 || i >= k_) throw ContractError("pca: component index out of range");
  return total_variance_ > 0.0 ? variances_[static_cast<std::size_t>(i)] / total_variance_ : 0.0;
}

std::vector<double> PcaModel::project(std::span<const float> x) const {
  if (x.size() != static_cast<std::size_t>(source_dim_)) throw ContractError("pca: input length mismatch");
  std::vector<double> y(static_cast<std::size_t>(k_), 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double* row = &components_[i * x.size()];
    for (std::size_t j = 0; j < x.size(); ++j) y[i] += row[j] * (x[j] - mean_[j]);
  }
  return y;
}

std::vector<double> PcaModel::back_project(std::span<const double> y) const {
  if (y.size() != static_cast<std::size_t>(k_)) throw ContractError("pca: code length mismatch");
  std::vector<double> x(mean_);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double* row = &components_[i * x.size()];
    for (std::size_t j = 0; j < x.size(); ++j) x[j] += y[i] * row[j];
  }
  return x;
}

std::vector<float> PcaModel::compress(std::span<const float> x) const {
  if (x.size() != static_cast<std::size_t>(source_dim_)) throw ContractError("pca: input length mismatch");
  std::vector<float> y(static_cast<std::size_t>(k_));
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double* row = &components_[i * x.size()];
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) acc += row[j] * x[j];
    y[i] = static_cast<float>(acc);
  }
  return y;
}

void PcaModel::write(ByteWriter& out) const {
  out.u32(static_cast<std::uint32_t>(source_dim_));
  out.u32(static_cast<std::uint32_t>(k_));
  for (double v : mean_) out.f64(v);
  for (double v : components_) out.f64(v);
  for (double v : variances_) out.f64(v);
  out.f64(total_variance_);
}

PcaModel PcaModel::read(ByteReader& in) {
  PcaModel m;
  m.source_dim_ = static_cast<int>(in.u32());
  m.k_ = static_cast<int>(in.u32());
  if (m.source_dim_ < 1 || m.k_ < 1 || m.k_ > m.source_dim_ || m.source_dim_ > (1 << 20)) {
    throw LoadError("index: malformed PCA header");
  }
  const auto d = static_cast<std::size_t>(m.source_dim_), k = static_cast<std::size_t>(m.k_);
  if (in.remaining() < (d + k * d + k + 1) * sizeof(double)) throw LoadError("index: truncated PCA section");
  m.mean_.resize(d);
  for (double& v : m.mean_) v = in.f64();
  m.components_.resize(k * d);
  for (double& v : m.components_) v = in.f64();
  m.variances_.resize(k);
  for (double& v : m.variances_) v = in.f64();
  m.total_variance_ = in.f64();
  return m;
}

// --- index ------------------------------------------------------------------

const IndexEntry* ReferenceIndex::find(std::uint32_t id) const {
  for (const IndexEntry& e : entries) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

namespace {

constexpr char kMagic[4] = {'C', 'W', 'I', 'X'};

void put_string(ByteWriter& w, const std::string& s) {
  if (s.size() > 0xffff) throw ContractError("index: string too long");
  w.u16(static_cast<std::uint16_t>(s.size()));
  w.text(s);
}

std::string get_string(ByteReader& r) { return r.text(r.u16()); }

void put_section(ByteWriter& out, const char (&tag)[5], const std::vector<std::uint8_t>& body) {
  out.text(std::string_view(tag, 4));
  out.u64(body.size());
  out.bytes(body);
}

std::span<const std::uint8_t> get_section(ByteReader& in, const char (&tag)[5]) {
  const std::string t = in.text(4);
  if (t != std::string_view(tag, 4)) throw LoadError("index: expected section " + std::string(tag) + ", found '" + t + "'");
  const std::uint64_t n = in.u64();
  if (n > in.remaining()) throw LoadError("index: section " + std::string(tag) + " truncated");
  return in.take(static_cast<std::size_t>(n));
}

void write_entry(ByteWriter& out, const IndexEntry& e) {
  out.u32(e.id);
  put_string(out, e.locator);
  out.u32(static_cast<std::uint32_t>(e.class_id));
  out.u32(static_cast<std::uint32_t>(e.grid_width));
  out.u32(static_cast<std::uint32_t>(e.grid_height));
  for (float v : e.global) out.f32(v);
  for (float v : e.local) out.f32(v);
  for (const image::LumaHistogram& h : e.histograms) {
    out.u32(h.total);
    for (std::uint32_t b : h.bins) out.u32(b);
  }
}

IndexEntry read_entry(ByteReader& in, int gk, int lk) {
  IndexEntry e;
  e.id = in.u32();
  e.locator = get_string(in);
  e.class_id = static_cast<int>(in.u32());
  e.grid_width = static_cast<int>(in.u32());
  e.grid_height = static_cast<int>(in.u32());
  if (e.grid_width < 0 || e.grid_height < 0 || e.grid_width > 65536 || e.grid_height > 65536) {
    throw LoadError("index: malformed grid extent");
  }
  const auto cells = static_cast<std::size_t>(e.cells());
  if (in.remaining() < (static_cast<std::size_t>(gk) + cells * lk) * 4 + cells * 4 * (1 + image::kHistogramBins)) {
    throw LoadError("index: entry " + std::to_string(e.id) + " truncated");
  }
  e.global.resize(static_cast<std::size_t>(gk));
  for (float& v : e.global) v = in.f32();
  e.local.resize(cells * static_cast<std::size_t>(lk));
  for (float& v : e.local) v = in.f32();
  e.histograms.resize(cells);
  for (image::LumaHistogram& h : e.histograms) {
    h.total = in.u32();
    for (std::uint32_t& b : h.bins) b = in.u32();
  }
  return e;
}

}  // namespace

std::vector<std::uint8_t> ReferenceIndex::serialize() const {
  ByteWriter out;
  out.raw(kMagic, 4);
  out.u32(kVersion);

  ByteWriter meta_w;
  meta_w.u32(static_cast<std::uint32_t>(meta.cell_size));
  put_string(meta_w, meta.encoder_digest);
  put_string(meta_w, meta.encoder_locator);
  meta_w.u32(static_cast<std::uint32_t>(entries.size()));
  put_section(out, "META", meta_w.buffer());

  ByteWriter pg, pl;
  pca_global.write(pg);
  pca_local.write(pl);
  put_section(out, "PCAG", pg.buffer());
  put_section(out, "PCAL", pl.buffer());

  ByteWriter ents;
  ents.u32(static_cast<std::uint32_t>(entries.size()));
  for (const IndexEntry& e : entries) {
    if (e.global.size() != static_cast<std::size_t>(pca_global.k()) ||
        e.local.size() != static_cast<std::size_t>(e.cells()) * pca_local.k() ||
        e.histograms.size() != static_cast<std::size_t>(e.cells())) {
      throw ContractError("index: entry " + std::to_string(e.id) + " does not match PCA dims");
    }
    ByteWriter one;
    write_entry(one, e);
    ents.u32(static_cast<std::uint32_t>(one.size()));
    ents.bytes(one.buffer());
  }
  put_section(out, "ENTS", ents.buffer());
  return out.take();
}

ReferenceIndex ReferenceIndex::deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes, "index");
  if (in.text(4) != std::string_view(kMagic, 4)) throw LoadError("index: bad magic");
  if (const std::uint32_t v = in.u32(); v != kVersion) {
    throw LoadError("index: unsupported version " + std::to_string(v));
  }
  ReferenceIndex idx;
  ByteReader meta_r(get_section(in, "META"), "index meta");
  idx.meta.cell_size = static_cast<int>(meta_r.u32());
  idx.meta.encoder_digest = get_string(meta_r);
  idx.meta.encoder_locator = get_string(meta_r);
  const std::uint32_t count = meta_r.u32();

  ByteReader pg(get_section(in, "PCAG"), "index pca_global");
  idx.pca_global = PcaModel::read(pg);
  ByteReader pl(get_section(in, "PCAL"), "index pca_local");
  idx.pca_local = PcaModel::read(pl);
  if (pg.remaining() || pl.remaining() || meta_r.remaining()) throw LoadError("index: trailing section bytes");

  ByteReader ents(get_section(in, "ENTS"), "index entries");
  if (ents.u32() != count) throw LoadError("index: entry count disagrees with meta");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = ents.u32();
    ByteReader one(ents.take(len), "index entry");
    idx.entries.push_back(read_entry(one, idx.pca_global.k(), idx.pca_local.k()));
    if (one.remaining()) throw LoadError("index: entry length mismatch");
  }
  if (ents.remaining() || in.remaining()) throw LoadError("index: trailing bytes");
  return idx;
}

void ReferenceIndex::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

ReferenceIndex ReferenceIndex::load(const std::filesystem::path& path) {
  return deserialize(read_file(path));
}

// --- descriptors ------------------------------------------------------------

RawDescriptors describe_raw(const image::Plane& L, const encoder::Encoder& enc, int cell_size) {
  if (cell_size != 1 << (encoder::kLevels - 1)) {
    throw ContractError("index: cell size must equal the encoder's level-5 stride (16)");
  }
  RawDescriptors d;
  const encoder::FeaturePyramid p = enc.extract(L);
  d.class_id = enc.classify(L).class_id;
  d.global = p.global;
  const int c = p.local.dim(0), h = p.local.dim(1), w = p.local.dim(2);
  d.grid_width = w;
  d.grid_height = h;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int cy = 0; cy < h; ++cy) {
    for (int cx = 0; cx < w; ++cx) {
      std::vector<float> v(static_cast<std::size_t>(c));
      for (int ch = 0; ch < c; ++ch) v[static_cast<std::size_t>(ch)] = p.local[ch * plane + static_cast<std::size_t>(cy) * w + cx];
      d.cells.push_back(std::move(v));
      image::Rect r{cx * cell_size, cy * cell_size, cell_size, cell_size};
      r.width = std::min(r.width, L.width - r.x);
      r.height = std::min(r.height, L.height - r.y);
      d.histograms.push_back(image::luma_histogram(L, r));
    }
  }
  return d;
}

namespace {

ReferenceIndex assemble_index(std::vector<std::pair<IndexEntry, RawDescriptors>> raw,
                              const encoder::Encoder& enc, const IndexBuildOptions& options,
                              const std::string& encoder_locator) {
  if (raw.empty()) throw ContractError("index: no readable images");
  std::vector<std::vector<float>> globals, cells;
  for (const auto& [e, d] : raw) {
    globals.push_back(d.global);
    cells.insert(cells.end(), d.cells.begin(), d.cells.end());
  }
  ReferenceIndex idx;
  idx.meta.cell_size = options.cell_size;
  idx.meta.encoder_digest = enc.weights().digest();
  idx.meta.encoder_locator = encoder_locator;
  const int gk = std::min(options.global_k, PcaModel::rank(globals));
  const int lk = std::min(options.local_k, PcaModel::rank(cells));
  if (gk < 1 || lk < 1) throw ContractError("index: descriptors have zero variance; need more distinct images");
  idx.pca_global = PcaModel::fit(globals, gk);
  idx.pca_local = PcaModel::fit(cells, lk);
  for (auto& [e, d] : raw) {
    e.global = idx.pca_global.compress(d.global);
    for (const auto& cell : d.cells) {
      const auto v = idx.pca_local.compress(cell);
      e.local.insert(e.local.end(), v.begin(), v.end());
    }
    idx.entries.push_back(std::move(e));
  }
  return idx;
}

IndexEntry entry_from(std::uint32_t id, const std::string& locator, RawDescriptors& d) {
  IndexEntry e;
  e.id = id;
  e.locator = locator;
  e.class_id = d.class_id;
  e.grid_width = d.grid_width;
  e.grid_height = d.grid_height;
  e.histograms = d.histograms;
  return e;
}

}  // namespace

ReferenceIndex build_index(std::span<const IndexSource> sources, const encoder::Encoder& enc,
                           const IndexBuildOptions& options, std::vector<SkippedSource>* skipped,
                           const std::string& encoder_locator) {
  if (!enc.has_classifier()) throw CapabilityError("index: encoder has no classifier head");
  std::vector<std::pair<IndexEntry, RawDescriptors>> raw;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    RawDescriptors d;
    try {
      const image::LabImage lab = image::rgb_to_lab(image::read_image(sources[i].locator));
      d = describe_raw(lab.L, enc, options.cell_size);
    } catch (const LoadError& e) {
      if (skipped) skipped->push_back({sources[i].locator, e.what()});
      continue;
    } catch (const ContractError& e) {
      if (skipped) skipped->push_back({sources[i].locator, e.what()});
      continue;
    }
    IndexEntry e = entry_from(static_cast<std::uint32_t>(i), sources[i].locator, d);
    raw.emplace_back(std::move(e), std::move(d));
  }
  return assemble_index(std::move(raw), enc, options, encoder_locator);
}

ReferenceIndex build_index_from_planes(std::span<const image::Plane> planes,
                                       std::span<const std::string> locators,
                                       const encoder::Encoder& enc, const IndexBuildOptions& options) {
  if (!enc.has_classifier()) throw CapabilityError("index: encoder has no classifier head");
  if (planes.size() != locators.size()) throw ContractError("index: planes and locators differ in count");
  std::vector<std::pair<IndexEntry, RawDescriptors>> raw;
  for (std::size_t i = 0; i < planes.size(); ++i) {
    RawDescriptors d = describe_raw(planes[i], enc, options.cell_size);
    IndexEntry e = entry_from(static_cast<std::uint32_t>(i), locators[i], d);
    raw.emplace_back(std::move(e), std::move(d));
  }
  return assemble_index(std::move(raw), enc, options, {});
}

QueryDescriptors describe(const image::Plane& L, const encoder::Encoder& enc, const ReferenceIndex& index) {
  RawDescriptors d = describe_raw(L, enc, index.meta.cell_size);
  QueryDescriptors q;
  q.class_id = d.class_id;
  q.global = index.pca_global.compress(d.global);
  q.grid_width = d.grid_width;
  q.grid_height = d.grid_height;
  for (const auto& cell : d.cells) {
    const auto v = index.pca_local.compress(cell);
    q.local.insert(q.local.end(), v.begin(), v.end());
  }
  q.histograms = std::move(d.histograms);
  return q;
}

// --- ranking ----------------------------------------------------------------

namespace {

void sort_candidates(std::vector<Candidate>& c) {
  std::sort(c.begin(), c.end(), [](const Candidate& a, const Candidate& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  });
}

}  // namespace

std::vector<Candidate> global_rank(const QueryDescriptors& query, const ReferenceIndex& index,
                                   const RankOptions& options) {
  if (index.entries.empty()) throw ContractError("global_rank: empty index");
  if (options.top_n < 1) throw ContractError("global_rank: top_n must be >= 1");
  const auto in_class = std::count_if(index.entries.begin(), index.entries.end(),
                                      [&](const IndexEntry& e) { return e.class_id == query.class_id; });
  const bool whole = in_class < options.min_class_size;
  std::vector<Candidate> out;
  for (const IndexEntry& e : index.entries) {
    if (!whole && e.class_id != query.class_id) continue;
    out.push_back({e.id, fusion::cosine(query.global, e.global)});
  }
  sort_candidates(out);
  if (out.size() > static_cast<std::size_t>(options.top_n)) out.resize(static_cast<std::size_t>(options.top_n));
  return out;
}

double local_score(const QueryDescriptors& query, const IndexEntry& candidate, int k, double beta) {
  double score = 0.0;
  for (int p = 0; p < query.cells(); ++p) {
    const auto fq = std::span<const float>(query.local).subspan(static_cast<std::size_t>(p) * k, static_cast<std::size_t>(k));
    int best = 0;
    double best_sim = -INFINITY;
    for (int q = 0; q < candidate.cells(); ++q) {
      const double s = fusion::cosine(fq, candidate.cell(q, k));
      if (s > best_sim) {
        best_sim = s;
        best = q;
      }
    }
    score += best_sim + beta * image::histogram_correlation(query.histograms[static_cast<std::size_t>(p)],
                                                            candidate.histograms[static_cast<std::size_t>(best)]);
  }
  return score;
}

LocalRanking local_rank(const QueryDescriptors& query, std::span<const Candidate> candidates,
                        const ReferenceIndex& index, double beta) {
  const int k = index.pca_local.k();
  if (query.local.size() != static_cast<std::size_t>(query.cells()) * k ||
      query.histograms.size() != static_cast<std::size_t>(query.cells())) {
    throw ContractError("local_rank: query descriptors do not match the index");
  }
  LocalRanking out;
  for (const Candidate& c : candidates) {
    const IndexEntry* e = index.find(c.id);
    if (e == nullptr) throw ContractError("local_rank: candidate " + std::to_string(c.id) + " not in index");
    if (e->cells() == 0 || e->local.size() != static_cast<std::size_t>(e->cells()) * k ||
        e->histograms.size() != static_cast<std::size_t>(e->cells())) {
      out.warnings.push_back("candidate " + std::to_string(c.id) + " has no local descriptors; skipped");
      continue;
    }
    out.ranking.push_back({c.id, local_score(query, *e, k, beta)});
  }
  sort_candidates(out.ranking);
  return out;
}

std::vector<Candidate> recommend(const QueryDescriptors& query, const ReferenceIndex& index, int k,
                                 const RankOptions& options) {
  if (k < 1) throw ContractError("recommend: k must be >= 1");
  const std::vector<Candidate> global = global_rank(query, index, options);
  std::vector<Candidate> ranking = local_rank(query, global, index, options.beta).ranking;
  if (ranking.size() > static_cast<std::size_t>(k)) ranking.resize(static_cast<std::size_t>(k));
  return ranking;
}

std::vector<Candidate> recommend(const image::Plane& L, const encoder::Encoder& enc,
                                 const ReferenceIndex& index, int k, const RankOptions& options) {
  if (k < 1) throw ContractError("recommend: k must be >= 1");
  return recommend(describe(L, enc, index), index, k, options);
}

}  // namespace chromatix::retrieval
