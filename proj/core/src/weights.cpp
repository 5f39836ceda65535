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

#include "chromatix/weights.hpp"

#include <cmath>

#include "chromatix/bytes.hpp"

namespace chromatix::nn {

namespace {
constexpr char kMagic[4] = {'C', 'W', 'T', 'S'};
constexpr std::uint8_t kDtypeF32 = 0;
}  // namespace

void ModelWeights::set(const std::string& name, Tensor value) {
  if (name.empty() || name.size() > UINT16_MAX) {
    throw ContractError("weights: tensor name length must be in [1, 65535]");
  }
  if (value.empty()) throw ContractError("weights: tensor '" + name + "' is empty");
  tensors_[name] = std::move(value);
}

const Tensor& ModelWeights::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw LoadError("weights: missing tensor '" + name + "'");
  return it->second;
}

Tensor& ModelWeights::get_mutable(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw LoadError("weights: missing tensor '" + name + "'");
  return it->second;
}

const Tensor& ModelWeights::require(const std::string& name, const Dims& dims) const {
  const Tensor& t = get(name);
  if (t.dims() != dims) {
    throw LoadError("weights: tensor '" + name + "' has dims " + dims_string(t.dims()) +
                    ", expected " + dims_string(dims));
  }
  return t;
}

std::vector<std::uint8_t> ModelWeights::serialize() const {
  ByteWriter w;
  w.raw(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(tensors_.size()));
  for (const auto& [name, t] : tensors_) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.text(name);
    w.u8(kDtypeF32);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (int d : t.dims()) w.u32(static_cast<std::uint32_t>(d));
    w.raw(t.ptr(), t.size() * sizeof(float));
  }
  return w.take();
}

ModelWeights ModelWeights::deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "CWTS");
  if (r.text(4) != std::string(kMagic, 4)) throw LoadError("CWTS: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw LoadError("CWTS: unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  ModelWeights out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.text(r.u16());
    const std::uint8_t dtype = r.u8();
    if (dtype != kDtypeF32) throw LoadError("CWTS: tensor '" + name + "' has unsupported dtype");
    const std::uint8_t ndim = r.u8();
    if (ndim == 0) throw LoadError("CWTS: tensor '" + name + "' has rank 0");
    Dims dims;
    std::size_t n = 1;
    for (std::uint8_t k = 0; k < ndim; ++k) {
      const std::uint32_t d = r.u32();
      if (d == 0 || d > (1u << 30)) throw LoadError("CWTS: tensor '" + name + "' has bad extent");
      dims.push_back(static_cast<int>(d));
      n *= d;
    }
    if (n * sizeof(float) > r.remaining()) {
      throw LoadError("CWTS: truncated payload for tensor '" + name + "'");
    }
    std::vector<float> data(n);
    r.read_into(data.data(), n * sizeof(float));
    if (out.contains(name)) throw LoadError("CWTS: duplicate tensor '" + name + "'");
    out.tensors_.emplace(name, Tensor(std::move(dims), std::move(data)));
  }
  if (r.remaining() != 0) throw LoadError("CWTS: trailing bytes after last tensor");
  return out;
}

void ModelWeights::save(const std::filesystem::path& path) const {
  write_file(path, serialize());
}

ModelWeights ModelWeights::load(const std::filesystem::path& path) {
  return deserialize(read_file(path));
}

std::string ModelWeights::digest() const { return sha256_hex(serialize()); }

Tensor kaiming_uniform(Dims dims, int fan_in, Rng& rng) {
  Tensor t(std::move(dims));
  const double bound = std::sqrt(6.0 / std::max(1, fan_in));
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace chromatix::nn
