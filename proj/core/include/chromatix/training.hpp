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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chromatix/adam.hpp"
#include "chromatix/binder.hpp"
#include "chromatix/colornet.hpp"
#include "chromatix/correspondence.hpp"
#include "chromatix/encoder.hpp"
#include "chromatix/image.hpp"

namespace chromatix::training {

// --- losses -----------------------------------------------------------------

/// Sum of elementwise smooth L1 over pixels and channels.
template <typename T>
nn::Var chrominance_loss(nn::BasicGraph<T>& g, nn::Var predicted, nn::Var target);
double chrominance_loss(const nn::Tensor& predicted, const nn::Tensor& target);

/// Sum over positions of the squared L2 distance between the top-tap
/// features of two normalized Lab batches [N, 3, H, W]. The encoder is bound
/// through `frozen` and receives no gradient.
template <typename T>
nn::Var perceptual_loss(nn::ParamBinder<T>& frozen, const encoder::Encoder* perceptual,
                        nn::Var predicted_lab, nn::Var target_lab);
double perceptual_loss(const image::LabImage& predicted, const image::LabImage& target,
                       const encoder::Encoder* perceptual);

// --- configuration ----------------------------------------------------------

struct TrainConfig {
  double alpha = 0.005;
  int batch_size = 8;
  double branch_split = 0.5;
  double lr = 1e-4;
  double lr_decay = 0.1;
  int lr_decay_epochs = 3;
  int epochs = 10;
  int max_steps = 0;  // > 0 caps the run regardless of epochs
  std::uint64_t seed = 1;
  double role_switch_probability = 0.5;
  int image_size = 32;
  colornet::NetConfig net;
  match::MatchConfig match;
  std::string encoder_path;             // gray encoder used for matching
  std::string perceptual_encoder_path;  // frozen color encoder
  std::string cache_dir;

  /// Throws ContractError on values outside their domain.
  void validate() const;
};

/// Parses `key = value` lines; `#` starts a comment. Relative paths are
/// resolved against `base_dir`. Unknown keys are errors.
TrainConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
TrainConfig load_config(const std::filesystem::path& path);

/// lr * lr_decay ^ floor(epoch / lr_decay_epochs).
double learning_rate(const TrainConfig& config, int epoch);

// --- data -------------------------------------------------------------------

/// Network inputs and targets for one (target, reference) orientation.
struct BranchData {
  nn::Tensor chroma_input;     // [1, 13, H, W] with the fake reference T'_ab
  nn::Tensor reference_input;  // [1, 13, H, W] with the warped reference R'_ab
  nn::Tensor target_ab;        // [1, 2, H, W], ab / 110
  nn::Tensor target_lab;       // [1, 3, H, W], encoder color normalization
};

/// Both orientations of a color pair; [1] swaps target and reference, which
/// swaps the two mapping fields.
struct PreparedPair {
  std::array<BranchData, 2> orientation;
  int width() const { return orientation[0].target_ab.width(); }
  int height() const { return orientation[0].target_ab.height(); }
};

/// Runs matching once and derives both orientations. With a non-empty
/// `cache_dir`, results are stored under the SHA-256 of the inputs, the
/// matcher weights and the match config, and reused on later calls.
PreparedPair prepare_pair(const image::LabImage& first, const image::LabImage& second,
                          const encoder::Encoder& matcher, const match::MatchConfig& config,
                          const std::filesystem::path& cache_dir = {});

/// "target reference" path pairs, one per line, relative to the list file.
std::vector<std::pair<std::filesystem::path, std::filesystem::path>> read_pair_list(
    const std::filesystem::path& list_file);

// --- trainer ----------------------------------------------------------------

struct BatchItem {
  std::size_t pair = 0;
  bool swapped = false;
};

struct LossValue {
  double l_chrom = 0.0;
  double l_perc = 0.0;
  double combined = 0.0;
};

struct GradientResult {
  LossValue loss;
  std::map<std::string, nn::Tensor> grads;  // every trainable tensor
};

struct StepRecord {
  int step = 0;
  int epoch = 0;
  double l_chrom = 0.0;
  double l_perc = 0.0;
  double lr = 0.0;
  int chroma_items = 0;
  int perceptual_items = 0;
};

class Trainer {
 public:
  Trainer(TrainConfig config, colornet::ColorNet net, const encoder::Encoder& perceptual,
          std::vector<PreparedPair> pairs);

  /// Loss mean(L_chrom over `chroma`) + alpha * mean(L_perc over `perceptual`)
  /// and its gradient; both halves form one batch-norm batch. Running
  /// statistics are updated when `update_stats` is set.
  GradientResult compute_gradients(std::span<const BatchItem> chroma,
                                   std::span<const BatchItem> perceptual, bool update_stats);

  /// Draws the next batch, splits it, applies one Adam update.
  StepRecord step();

  /// Combined loss over every pair in its stored orientation, both branches,
  /// batch statistics, no state change.
  LossValue evaluate();

  /// Next batch as (chroma half, perceptual half) without consuming it.
  std::pair<std::vector<BatchItem>, std::vector<BatchItem>> peek_batch() const;

  const colornet::ColorNet& net() const noexcept { return net_; }
  const std::vector<StepRecord>& history() const noexcept { return history_; }
  int steps_per_epoch() const;
  int total_steps() const;

 private:
  std::vector<BatchItem> batch_for_step(int step) const;
  void apply(const GradientResult& grads, double lr);

  TrainConfig config_;
  colornet::ColorNet net_;
  const encoder::Encoder& perceptual_;
  std::vector<PreparedPair> pairs_;
  nn::AdamState adam_;
  std::vector<StepRecord> history_;
  int step_ = 0;
};

struct TrainResult {
  colornet::ColorNet net;
  std::vector<StepRecord> history;
  LossValue initial;
  LossValue final;
};

/// Full run: total_steps() steps from a seeded initialization.
TrainResult train(std::vector<PreparedPair> pairs, const encoder::Encoder& perceptual,
                  const TrainConfig& config);

/// CSV with header "step,l_chrom,l_perc,lr".
std::string history_csv(std::span<const StepRecord> history);

}  // namespace chromatix::training
