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
#include <functional>
#include <string>
#include <vector>

#include "chromatix/binder.hpp"
#include "chromatix/image.hpp"
#include "chromatix/tensor.hpp"
#include "chromatix/weights.hpp"

namespace chromatix::encoder {

inline constexpr int kLevels = 5;

/// Shape of the feature extractor. Block i (1-based) runs convs_per_block[i]
/// 3x3 conv-relu pairs; blocks 2..5 open with a stride-2 conv, so level i
/// sits at ceil(input / 2^(i-1)).
///
/// Taps: the first relu of each block ("relu{i}_1") feeds similarity, the
/// last relu of block 5 is the local retrieval descriptor, and "fc6" (global
/// mean of the local map, fully connected, relu) is the global descriptor.
struct EncoderConfig {
  int input_channels = 1;
  std::array<int, kLevels> channels{8, 16, 32, 64, 64};
  std::array<int, kLevels> convs_per_block{2, 2, 2, 2, 2};
  int global_dim = 128;
  int num_classes = 0;  // 0: no classifier head

  static EncoderConfig toy(int input_channels = 1, int num_classes = 0);
  static EncoderConfig vgg19_shape(int input_channels = 1, int num_classes = 1000);

  std::string similarity_tap(int level) const;  // "relu{level}_1"
  std::string local_tap() const;                // "relu5_{n}"
  static constexpr const char* global_tap() { return "fc6"; }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Encoder outputs for one image.
struct FeaturePyramid {
  std::array<nn::Tensor, kLevels> levels;  // [C_i, H_i, W_i]
  nn::Tensor local;                        // [C_5, H_5, W_5]
  std::vector<float> global;

  int width() const { return levels[0].dim(2); }
  int height() const { return levels[0].dim(1); }
};

struct Classification {
  int class_id = 0;
  std::vector<double> probabilities;
};

/// Graph handles produced by Encoder::build.
struct EncoderNodes {
  std::array<nn::Var, kLevels> taps;
  nn::Var local;
  nn::Var global;
  nn::Var logits;  // invalid without a classifier head
};

/// L plane -> [1, 1, H, W] with L / 50 - 1.
nn::Tensor gray_input(const image::Plane& L);
/// Lab image -> [1, 3, H, W] with (L / 50 - 1, a / 110, b / 110).
nn::Tensor color_input(const image::LabImage& lab);

inline constexpr int kMinInputSide = 32;

class Encoder {
 public:
  /// Validates that every tensor required by `config` is present.
  Encoder(EncoderConfig config, nn::ModelWeights weights);

  /// Seeded fan-in uniform initialization.
  static Encoder initialize(const EncoderConfig& config, std::uint64_t seed);

  /// Reads a CWTS file; fails on missing or mis-shaped tensors.
  static Encoder load(const std::filesystem::path& path);
  /// Uses the "enc.*" tensors of `weights`; the config comes from "enc.config".
  static Encoder from_weights(const nn::ModelWeights& weights);
  void save(const std::filesystem::path& path) const;

  const EncoderConfig& config() const noexcept { return config_; }
  const nn::ModelWeights& weights() const noexcept { return weights_; }
  bool has_classifier() const noexcept { return config_.num_classes > 0; }

  FeaturePyramid extract(const image::Plane& L) const;
  FeaturePyramid extract(const nn::Tensor& input) const;

  Classification classify(const image::Plane& L) const;
  Classification classify(const nn::Tensor& input) const;

  /// Builds the forward pass on an existing graph. `input` is [N, Cin, H, W].
  template <typename T>
  EncoderNodes build(nn::ParamBinder<T>& params, nn::Var input) const;

  /// Tensor names the config requires, with dims.
  static std::vector<std::pair<std::string, nn::Dims>> layout(const EncoderConfig& config);

 private:
  EncoderConfig config_;
  nn::ModelWeights weights_;
};

struct LabeledInput {
  nn::Tensor input;  // [1, Cin, H, W], normalized
  int label = 0;
};

struct ClassifierTrainOptions {
  int steps = 200;
  double lr = 1e-3;
  int batch_size = 0;  // 0: full batch
  std::uint64_t seed = 1;
};

struct ClassifierTrainResult {
  Encoder encoder;
  std::vector<double> loss_history;
};

/// Cross-entropy training of the whole encoder with Adam.
ClassifierTrainResult train_classifier(const std::vector<LabeledInput>& data,
                                       EncoderConfig config,
                                       const ClassifierTrainOptions& options);

}  // namespace chromatix::encoder
