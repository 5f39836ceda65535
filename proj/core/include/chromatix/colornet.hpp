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
#include <map>
#include <string>
#include <vector>

#include "chromatix/binder.hpp"
#include "chromatix/correspondence.hpp"
#include "chromatix/encoder.hpp"
#include "chromatix/fusion.hpp"
#include "chromatix/image.hpp"
#include "chromatix/weights.hpp"

namespace chromatix::colornet {

inline constexpr int kBlocks = 10;
inline constexpr int kInputChannels = 3 + fusion::kSimilarityChannels;
/// Blocks 1..4 each halve the resolution.
inline constexpr int kSizeMultiple = 16;

/// U-net layout. Blocks 1..4 run conv-relu pairs, tap the skip, then halve
/// the resolution with a stride-2 conv; blocks 5..6 are dilated; blocks 7..10
/// open with a x2 transposed conv and add the mirrored skip before their
/// convs. Every block but the last ends in batch norm.
struct NetConfig {
  int base_width = 16;
  std::array<int, kBlocks> width_multipliers{1, 2, 4, 8, 8, 8, 8, 4, 2, 1};
  int convs_per_block = 2;
  int dilation = 2;  // blocks 5..6; 1 gives the no-dilation ablation
  /// Skips (1,10), (2,9), (3,8).
  std::array<bool, 3> skips{true, true, true};

  static NetConfig toy() { return {}; }
  static NetConfig full_scale();

  int width(int block) const {
    return base_width * width_multipliers[static_cast<std::size_t>(block - 1)];
  }

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

/// Training-mode batch statistics live here; keyed by tensor name.
template <typename T>
using RunningStats = std::map<std::string, nn::BasicTensor<T>>;

/// 13-plane network input [1, 13, H, W]: L / 50 - 1, a / 110, b / 110,
/// then the ten similarity planes unchanged.
nn::Tensor assemble(const image::Plane& L, const image::Plane& a, const image::Plane& b,
                    const fusion::SimilarityMaps& sims);

/// Stacks single-image tensors [1, C, H, W] of equal dims along the batch axis.
nn::Tensor stack_batch(const std::vector<const nn::Tensor*>& items);

class ColorNet {
 public:
  /// Throws LoadError when a tensor the config needs is missing or mis-shaped.
  ColorNet(NetConfig config, nn::ModelWeights weights);

  static ColorNet initialize(const NetConfig& config, std::uint64_t seed);

  /// Reads the "net.*" tensors of a CWTS file (other prefixes are ignored).
  static ColorNet load(const std::filesystem::path& path);
  static ColorNet from_weights(const nn::ModelWeights& weights);
  void save(const std::filesystem::path& path) const;

  const NetConfig& config() const noexcept { return config_; }
  const nn::ModelWeights& weights() const noexcept { return weights_; }
  nn::ModelWeights& mutable_weights() noexcept { return weights_; }

  /// Copies of the stored batch-norm statistics.
  template <typename T>
  RunningStats<T> running_stats() const;

  /// Network on an existing graph; returns tanh output [N, 2, H, W] in
  /// normalized ab units. H and W must be multiples of kSizeMultiple. In
  /// training mode batch norm uses batch statistics and updates `stats`.
  template <typename T>
  nn::Var build(nn::ParamBinder<T>& params, nn::Var input, bool training,
                RunningStats<T>& stats) const;

  /// Inference on [N, 13, H, W] of any size: edge-replicates up to a
  /// multiple of 16, runs, crops. Returns ab in [-110, 110] units.
  nn::Tensor predict(const nn::Tensor& stack) const;

  static std::vector<std::pair<std::string, nn::Dims>> layout(const NetConfig& config);

 private:
  NetConfig config_;
  nn::ModelWeights weights_;
};

/// Deployable bundle: the gray encoder used for matching plus the network,
/// stored together in one CWTS file ("enc.*" and "net.*" tensors).
struct ColorizationModel {
  encoder::Encoder matcher;
  ColorNet net;

  nn::ModelWeights weights() const;
  static ColorizationModel from_weights(const nn::ModelWeights& weights);
  static ColorizationModel load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// Per-stage products of one colorize call.
struct Intermediates {
  match::FieldPair fields;
  fusion::SimilarityMaps sims;
  fusion::Chrominance warped;
  nn::Tensor stack;
  fusion::Chrominance predicted;
};

/// extract -> bidirectional -> similarity_maps -> warp -> assemble -> predict.
/// Failures are rethrown as StageError tagged with the stage name.
image::LabImage colorize(const image::Plane& target_L, const image::LabImage& reference,
                         const encoder::Encoder& encoder, const match::MatchConfig& matcher,
                         const ColorNet& net, Intermediates* intermediates = nullptr);

/// Writes the input planes, fields, similarity errors and P_ab as PNGs.
void dump_intermediates(const Intermediates& in, const std::filesystem::path& dir);

}  // namespace chromatix::colornet
