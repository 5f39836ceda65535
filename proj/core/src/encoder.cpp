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

#include "chromatix/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "chromatix/adam.hpp"
#include "chromatix/ops.hpp"
#include "chromatix/random.hpp"

namespace chromatix::encoder {

namespace {

constexpr const char* kConfigTensor = "enc.config";
constexpr int kConfigFields = 1 + 1 + kLevels + kLevels + 2;
constexpr float kConfigVersion = 1.0f;

std::string conv_name(int block, int conv) {
  return "enc.b" + std::to_string(block) + ".conv" + std::to_string(conv);
}

nn::Tensor config_tensor(const EncoderConfig& c) {
  std::vector<float> v{kConfigVersion, static_cast<float>(c.input_channels)};
  for (int ch : c.channels) v.push_back(static_cast<float>(ch));
  for (int n : c.convs_per_block) v.push_back(static_cast<float>(n));
  v.push_back(static_cast<float>(c.global_dim));
  v.push_back(static_cast<float>(c.num_classes));
  return nn::Tensor(nn::Dims{kConfigFields}, std::move(v));
}

EncoderConfig parse_config(const nn::ModelWeights& w) {
  const nn::Tensor& t = w.require(kConfigTensor, nn::Dims{kConfigFields});
  if (t[0] != kConfigVersion) throw LoadError("encoder: unsupported config version");
  auto as_int = [&](std::size_t i) {
    const float v = t[i];
    if (v < 0 || v != std::floor(v) || v > 1e6f) throw LoadError("encoder: malformed config tensor");
    return static_cast<int>(v);
  };
  EncoderConfig c;
  c.input_channels = as_int(1);
  for (int i = 0; i < kLevels; ++i) {
    c.channels[static_cast<std::size_t>(i)] = as_int(2 + static_cast<std::size_t>(i));
    c.convs_per_block[static_cast<std::size_t>(i)] = as_int(2 + kLevels + static_cast<std::size_t>(i));
  }
  c.global_dim = as_int(2 + 2 * kLevels);
  c.num_classes = as_int(3 + 2 * kLevels);
  return c;
}

void validate_config(const EncoderConfig& c) {
  if (c.input_channels < 1) throw ContractError("encoder: input_channels must be >= 1");
  for (int i = 0; i < kLevels; ++i) {
    if (c.channels[static_cast<std::size_t>(i)] < 1 || c.convs_per_block[static_cast<std::size_t>(i)] < 1) {
      throw ContractError("encoder: every block needs >= 1 conv and >= 1 channel");
    }
  }
  if (c.global_dim < 1) throw ContractError("encoder: global_dim must be >= 1");
  if (c.num_classes < 0 || c.num_classes == 1) {
    throw ContractError("encoder: num_classes must be 0 (no head) or >= 2");
  }
}

void check_input(const nn::Tensor& input, int channels) {
  if (input.rank() != 4 || input.channels() != channels) {
    throw ContractError("encoder: expected [N, " + std::to_string(channels) + ", H, W] input, got " +
                        nn::dims_string(input.dims()));
  }
  if (std::min(input.height(), input.width()) < kMinInputSide) {
    throw ContractError("encoder: input " + std::to_string(input.width()) + "x" +
                        std::to_string(input.height()) + " below minimum side " +
                        std::to_string(kMinInputSide));
  }
}

nn::Tensor strip_batch(const nn::Tensor& t) {
  return t.reshaped(nn::Dims{t.channels(), t.height(), t.width()});
}

}  // namespace

EncoderConfig EncoderConfig::toy(int input_channels, int num_classes) {
  EncoderConfig c;
  c.input_channels = input_channels;
  c.num_classes = num_classes;
  return c;
}

EncoderConfig EncoderConfig::vgg19_shape(int input_channels, int num_classes) {
  EncoderConfig c;
  c.input_channels = input_channels;
  c.channels = {64, 128, 256, 512, 512};
  c.convs_per_block = {2, 2, 4, 4, 4};
  c.global_dim = 4096;
  c.num_classes = num_classes;
  return c;
}

std::string EncoderConfig::similarity_tap(int level) const {
  return "relu" + std::to_string(level) + "_1";
}

std::string EncoderConfig::local_tap() const {
  return "relu5_" + std::to_string(convs_per_block[kLevels - 1]);
}

nn::Tensor gray_input(const image::Plane& L) {
  nn::Tensor t(nn::Dims{1, 1, L.height, L.width});
  for (std::size_t i = 0; i < L.data.size(); ++i) t[i] = L.data[i] / 50.0f - 1.0f;
  return t;
}

nn::Tensor color_input(const image::LabImage& lab) {
  const std::size_t plane = lab.L.data.size();
  nn::Tensor t(nn::Dims{1, 3, lab.height(), lab.width()});
  for (std::size_t i = 0; i < plane; ++i) {
    t[i] = lab.L.data[i] / 50.0f - 1.0f;
    t[plane + i] = lab.a.data[i] / image::kMaxAb;
    t[2 * plane + i] = lab.b.data[i] / image::kMaxAb;
  }
  return t;
}

std::vector<std::pair<std::string, nn::Dims>> Encoder::layout(const EncoderConfig& c) {
  std::vector<std::pair<std::string, nn::Dims>> out;
  int in = c.input_channels;
  for (int b = 0; b < kLevels; ++b) {
    const int ch = c.channels[static_cast<std::size_t>(b)];
    for (int k = 0; k < c.convs_per_block[static_cast<std::size_t>(b)]; ++k) {
      out.emplace_back(conv_name(b + 1, k) + ".weight", nn::Dims{ch, in, 3, 3});
      out.emplace_back(conv_name(b + 1, k) + ".bias", nn::Dims{ch});
      in = ch;
    }
  }
  out.emplace_back("enc.fc6.weight", nn::Dims{c.global_dim, in, 1, 1});
  out.emplace_back("enc.fc6.bias", nn::Dims{c.global_dim});
  if (c.num_classes > 0) {
    out.emplace_back("enc.cls.weight", nn::Dims{c.num_classes, c.global_dim, 1, 1});
    out.emplace_back("enc.cls.bias", nn::Dims{c.num_classes});
  }
  return out;
}

Encoder::Encoder(EncoderConfig config, nn::ModelWeights weights)
    : config_(config), weights_(std::move(weights)) {
  validate_config(config_);
  for (const auto& [name, dims] : layout(config_)) weights_.require(name, dims);
  weights_.set(kConfigTensor, config_tensor(config_));
}

Encoder Encoder::initialize(const EncoderConfig& config, std::uint64_t seed) {
  validate_config(config);
  Rng rng(seed);
  nn::ModelWeights w;
  for (const auto& [name, dims] : layout(config)) {
    if (dims.size() == 1) {
      w.set(name, nn::Tensor(dims, 0.0f));
    } else {
      w.set(name, nn::kaiming_uniform(dims, dims[1] * dims[2] * dims[3], rng));
    }
  }
  return Encoder(config, std::move(w));
}

Encoder Encoder::load(const std::filesystem::path& path) {
  return from_weights(nn::ModelWeights::load(path));
}

Encoder Encoder::from_weights(const nn::ModelWeights& weights) {
  nn::ModelWeights w;
  for (const auto& [name, t] : weights.tensors()) {
    if (name.rfind("enc.", 0) == 0) w.set(name, t);
  }
  EncoderConfig c = parse_config(w);
  return Encoder(c, std::move(w));
}

void Encoder::save(const std::filesystem::path& path) const { weights_.save(path); }

template <typename T>
EncoderNodes Encoder::build(nn::ParamBinder<T>& params, nn::Var input) const {
  auto& g = params.graph();
  EncoderNodes out;
  nn::Var x = input;
  for (int b = 0; b < kLevels; ++b) {
    for (int k = 0; k < config_.convs_per_block[static_cast<std::size_t>(b)]; ++k) {
      const std::string name = conv_name(b + 1, k);
      nn::Conv2dOptions opt;
      opt.padding = 1;
      opt.stride = (b > 0 && k == 0) ? 2 : 1;
      x = nn::relu(g, nn::conv2d(g, x, params(name + ".weight"), params(name + ".bias"), opt));
      if (k == 0) out.taps[static_cast<std::size_t>(b)] = x;
    }
  }
  out.local = x;
  const nn::Var pooled = nn::spatial_mean(g, x);
  out.global = nn::relu(
      g, nn::conv2d(g, pooled, params("enc.fc6.weight"), params("enc.fc6.bias"), nn::Conv2dOptions{}));
  if (has_classifier()) {
    out.logits = nn::conv2d(g, out.global, params("enc.cls.weight"), params("enc.cls.bias"),
                            nn::Conv2dOptions{});
  }
  return out;
}

template EncoderNodes Encoder::build<float>(nn::ParamBinder<float>&, nn::Var) const;
template EncoderNodes Encoder::build<double>(nn::ParamBinder<double>&, nn::Var) const;

FeaturePyramid Encoder::extract(const image::Plane& L) const {
  if (config_.input_channels != 1) {
    throw ContractError("encoder: extract(L) needs a 1-channel encoder");
  }
  return extract(gray_input(L));
}

FeaturePyramid Encoder::extract(const nn::Tensor& input) const {
  check_input(input, config_.input_channels);
  if (input.batch() != 1) throw ContractError("encoder: extract takes a single image");
  nn::Graph g;
  nn::ParamBinder<float> params(g, weights_, false);
  const EncoderNodes nodes = build(params, g.input(input));
  FeaturePyramid p;
  for (int i = 0; i < kLevels; ++i) {
    p.levels[static_cast<std::size_t>(i)] = strip_batch(g.value(nodes.taps[static_cast<std::size_t>(i)]));
  }
  p.local = strip_batch(g.value(nodes.local));
  const auto gd = g.value(nodes.global).data();
  p.global.assign(gd.begin(), gd.end());
  return p;
}

Classification Encoder::classify(const image::Plane& L) const {
  if (config_.input_channels != 1) {
    throw ContractError("encoder: classify(L) needs a 1-channel encoder");
  }
  return classify(gray_input(L));
}

Classification Encoder::classify(const nn::Tensor& input) const {
  if (!has_classifier()) throw CapabilityError("encoder: no classifier head");
  check_input(input, config_.input_channels);
  if (input.batch() != 1) throw ContractError("encoder: classify takes a single image");
  nn::Graph g;
  nn::ParamBinder<float> params(g, weights_, false);
  const EncoderNodes nodes = build(params, g.input(input));
  const auto ld = g.value(nodes.logits).data();
  std::vector<double> logits(ld.begin(), ld.end());
  Classification c;
  c.probabilities = nn::softmax(logits);
  // max_element returns the first maximum: lowest index wins ties.
  c.class_id = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  return c;
}

ClassifierTrainResult train_classifier(const std::vector<LabeledInput>& data,
                                       EncoderConfig config,
                                       const ClassifierTrainOptions& options) {
  if (data.empty()) throw ContractError("train_classifier: empty dataset");
  int max_label = 0;
  std::vector<int> seen;
  for (const LabeledInput& d : data) {
    check_input(d.input, config.input_channels);
    if (d.input.batch() != 1) throw ContractError("train_classifier: inputs must be single images");
    if (d.label < 0) throw ContractError("train_classifier: negative label");
    max_label = std::max(max_label, d.label);
    if (std::find(seen.begin(), seen.end(), d.label) == seen.end()) seen.push_back(d.label);
  }
  if (seen.size() < 2) throw ContractError("train_classifier: need >= 2 classes");
  if (options.steps < 1) throw ContractError("train_classifier: steps must be >= 1");
  config.num_classes = std::max(config.num_classes, max_label + 1);

  Encoder enc = Encoder::initialize(config, options.seed);
  nn::ModelWeights weights = enc.weights();
  nn::AdamState adam;
  adam.options.lr = options.lr;
  Rng rng(options.seed ^ 0x9e3779b97f4a7c15ULL);

  const std::size_t batch = options.batch_size > 0
                                ? std::min<std::size_t>(static_cast<std::size_t>(options.batch_size), data.size())
                                : data.size();
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  ClassifierTrainResult result{enc, {}};
  for (int step = 0; step < options.steps; ++step) {
    std::vector<std::size_t> pick;
    if (batch == data.size()) {
      pick = order;
    } else {
      rng.shuffle(order.begin(), order.end());
      pick.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(batch));
      std::sort(pick.begin(), pick.end());
    }
    // Same-sized inputs share one batch tensor.
    std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
    for (std::size_t i : pick) groups[{data[i].input.height(), data[i].input.width()}].push_back(i);

    nn::Graph g;
    nn::ParamBinder<float> params(g, weights, true);
    nn::Var total;
    for (const auto& [hw, members] : groups) {
      nn::Tensor stacked(nn::Dims{static_cast<int>(members.size()), config.input_channels, hw.first, hw.second});
      std::vector<int> labels;
      const std::size_t item = data[members[0]].input.size();
      for (std::size_t m = 0; m < members.size(); ++m) {
        std::copy(data[members[m]].input.data().begin(), data[members[m]].input.data().end(),
                  stacked.data().begin() + static_cast<std::ptrdiff_t>(m * item));
        labels.push_back(data[members[m]].label);
      }
      const EncoderNodes nodes = enc.build(params, g.input(std::move(stacked)));
      nn::Var ce = nn::softmax_cross_entropy(g, nodes.logits, labels);
      ce = nn::scale(g, ce, static_cast<float>(members.size()) / static_cast<float>(pick.size()));
      total = total.valid() ? nn::add(g, total, ce) : ce;
    }
    g.backward(total);
    result.loss_history.push_back(g.value(total).item());

    std::vector<nn::Tensor*> ps;
    std::vector<const nn::Tensor*> gs;
    std::vector<nn::Tensor> zero_grads;
    zero_grads.reserve(params.bound().size());
    for (const auto& [name, var] : params.bound()) {
      ps.push_back(&weights.get_mutable(name));
      const nn::Tensor& gr = g.grad(var);
      if (gr.empty()) {
        zero_grads.emplace_back(ps.back()->dims(), 0.0f);
        gs.push_back(&zero_grads.back());
      } else {
        gs.push_back(&gr);
      }
    }
    nn::adam_step(ps, gs, adam);
  }
  result.encoder = Encoder(config, std::move(weights));
  return result;
}

}  // namespace chromatix::encoder
