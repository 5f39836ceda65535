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
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "chromatix/random.hpp"
#include "chromatix/tensor.hpp"

namespace chromatix::nn {

/// Named f32 tensors, serialized in the CWTS container:
///
///   "CWTS" | u32 version = 1 | u32 count |
///   count x ( u16 name_len | name (UTF-8) | u8 dtype = 0 (f32) | u8 ndim |
///             u32 dims[ndim] | f32 payload[product(dims)] )
///
/// All integers and floats little-endian, no padding. Tensors are written
/// in name order, so equal contents give equal bytes.
class ModelWeights {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void set(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  bool erase(const std::string& name) { return tensors_.erase(name) != 0; }

  /// Throws LoadError naming the tensor when absent.
  const Tensor& get(const std::string& name) const;
  Tensor& get_mutable(const std::string& name);

  /// Throws LoadError when absent or when dims differ.
  const Tensor& require(const std::string& name, const Dims& dims) const;

  const std::map<std::string, Tensor>& tensors() const noexcept { return tensors_; }
  std::size_t size() const noexcept { return tensors_.size(); }

  std::vector<std::uint8_t> serialize() const;
  static ModelWeights deserialize(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static ModelWeights load(const std::filesystem::path& path);

  /// SHA-256 of the serialized form.
  std::string digest() const;

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;

 private:
  std::map<std::string, Tensor> tensors_;
};

/// Fan-in scaled uniform init, bound sqrt(6 / fan_in).
Tensor kaiming_uniform(Dims dims, int fan_in, Rng& rng);

}  // namespace chromatix::nn
