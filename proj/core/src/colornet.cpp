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

#include "chromatix/colornet.hpp"

#include <algorithm>
#include <cmath>

#include "chromatix/bytes.hpp"
#include "chromatix/ops.hpp"
#include "chromatix/random.hpp"

namespace chromatix::colornet {

namespace {

constexpr const char* kConfigTensor = "net.config";
constexpr int kConfigFields = 2 + kBlocks + 2 + 3;
constexpr float kConfigVersion = 1.0f;

std::string block_name(int block) { return "net.b" + std::to_string(block); }

nn::Tensor config_tensor(const NetConfig& c) {
  std::vector<float> v{kConfigVersion, static_cast<float>(c.base_width)};
  for (int m : c.width_multipliers) v.push_back(static_cast<float>(m));
  v.push_back(static_cast<float>(c.convs_per_block));
  v.push_back(static_cast<float>(c.dilation));
  for (bool s : c.skips) v.push_back(s ? 1.0f : 0.0f);
  return nn::Tensor(nn::Dims{kConfigFields}, std::move(v));
}

NetConfig parse_config(const nn::ModelWeights& w) {
  const nn::Tensor& t = w.require(kConfigTensor, nn::Dims{kConfigFields});
  if (t[0] != kConfigVersion) throw LoadError("colornet: unsupported config version");
  auto as_int = [&](std::size_t i) {
    const float v = t[i];
    if (v < 0 || v != std::floor(v) || v > 1e6f) throw LoadError("colornet: malformed config tensor");
    return static_cast<int>(v);
  };
  NetConfig c;
  c.base_width = as_int(1);
  for (std::size_t i = 0; i < kBlocks; ++i) c.width_multipliers[i] = as_int(2 + i);
  c.convs_per_block = as_int(2 + kBlocks);
  c.dilation = as_int(3 + kBlocks);
  for (std::size_t i = 0; i < 3; ++i) c.skips[i] = as_int(4 + kBlocks + i) != 0;
  return c;
}

void validate_config(const NetConfig& c) {
  if (c.base_width < 1 || c.convs_per_block < 1 || c.dilation < 1) {
    throw ContractError("colornet: base width, convs per block and dilation must be >= 1");
  }
  for (int m : c.width_multipliers) {
    if (m < 1) throw ContractError("colornet: width multipliers must be >= 1");
  }
  for (int s = 1; s <= 3; ++s) {
    if (c.skips[static_cast<std::size_t>(s - 1)] && c.width(s) != c.width(kBlocks + 1 - s)) {
      throw ContractError("colornet: skip (" + std::to_string(s) + ", " +
                          std::to_string(kBlocks + 1 - s) + ") joins unequal widths");
    }
  }
}

bool has_bn(int block) { return block < kBlocks; }

template <typename T>
nn::BasicTensor<T> edge_pad(const nn::BasicTensor<T>& x, int H, int W) {
  nn::BasicTensor<T> out(nn::Dims{x.batch(), x.channels(), H, W});
  for (int n = 0; n < x.batch(); ++n) {
    for (int c = 0; c < x.channels(); ++c) {
      for (int y = 0; y < H; ++y) {
        const int sy = std::min(y, x.height() - 1);
        for (int xx = 0; xx < W; ++xx) out.at(n, c, y, xx) = x.at(n, c, sy, std::min(xx, x.width() - 1));
      }
    }
  }
  return out;
}

}  // namespace

NetConfig NetConfig::full_scale() {
  NetConfig c;
  c.base_width = 64;
  return c;
}

nn::Tensor assemble(const image::Plane& L, const image::Plane& a, const image::Plane& b,
                    const fusion::SimilarityMaps& sims) {
  const int w = L.width, h = L.height;
  auto same = [&](const image::Plane& p) { return p.width == w && p.height == h; };
  if (L.empty()) throw ContractError("assemble: empty luminance plane");
  if (!same(a) || !same(b)) {
    throw ContractError("assemble: chrominance is " + std::to_string(a.width) + "x" +
                        std::to_string(a.height) + ", luminance " + std::to_string(w) + "x" +
                        std::to_string(h));
  }
  for (int i = 0; i < fusion::kSimilarityChannels; ++i) {
    if (!same(sims.channel(i))) {
      throw ContractError("assemble: similarity plane " + std::to_string(i) + " dims differ from luminance");
    }
  }
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  nn::Tensor t(nn::Dims{1, kInputChannels, h, w});
  float* p = t.ptr();
  for (std::size_t i = 0; i < plane; ++i) {
    p[i] = L.data[i] / 50.0f - 1.0f;
    p[plane + i] = a.data[i] / image::kMaxAb;
    p[2 * plane + i] = b.data[i] / image::kMaxAb;
  }
  for (int c = 0; c < fusion::kSimilarityChannels; ++c) {
    std::copy(sims.channel(c).data.begin(), sims.channel(c).data.end(),
              p + static_cast<std::size_t>(3 + c) * plane);
  }
  return t;
}

nn::Tensor stack_batch(const std::vector<const nn::Tensor*>& items) {
  if (items.empty()) throw ContractError("stack_batch: no items");
  const nn::Dims& d = items.front()->dims();
  if (d.size() != 4 || d[0] != 1) throw ContractError("stack_batch: items must be [1, C, H, W]");
  nn::Tensor out(nn::Dims{static_cast<int>(items.size()), d[1], d[2], d[3]});
  const std::size_t n = items.front()->size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i]->dims() != d) {
      throw ContractError("stack_batch: item " + std::to_string(i) + " is " +
                          nn::dims_string(items[i]->dims()) + ", expected " + nn::dims_string(d));
    }
    std::copy(items[i]->data().begin(), items[i]->data().end(), out.ptr() + i * n);
  }
  return out;
}

std::vector<std::pair<std::string, nn::Dims>> ColorNet::layout(const NetConfig& c) {
  std::vector<std::pair<std::string, nn::Dims>> out;
  int in = kInputChannels;
  for (int k = 1; k <= kBlocks; ++k) {
    const int w = c.width(k);
    const std::string b = block_name(k);
    if (k >= 7) {
      out.emplace_back(b + ".up.weight", nn::Dims{in, w, 4, 4});
      out.emplace_back(b + ".up.bias", nn::Dims{w});
      in = w;
    }
    for (int j = 0; j < c.convs_per_block; ++j) {
      out.emplace_back(b + ".conv" + std::to_string(j) + ".weight", nn::Dims{w, in, 3, 3});
      out.emplace_back(b + ".conv" + std::to_string(j) + ".bias", nn::Dims{w});
      in = w;
    }
    if (k <= 4) {
      out.emplace_back(b + ".down.weight", nn::Dims{w, w, 3, 3});
      out.emplace_back(b + ".down.bias", nn::Dims{w});
    }
    if (has_bn(k)) {
      for (const char* p : {".bn.gamma", ".bn.beta", ".bn.running_mean", ".bn.running_var"}) {
        out.emplace_back(b + p, nn::Dims{w});
      }
    }
  }
  out.emplace_back("net.out.weight", nn::Dims{2, in, 1, 1});
  out.emplace_back("net.out.bias", nn::Dims{2});
  return out;
}

ColorNet::ColorNet(NetConfig config, nn::ModelWeights weights)
    : config_(config), weights_(std::move(weights)) {
  validate_config(config_);
  for (const auto& [name, dims] : layout(config_)) weights_.require(name, dims);
  weights_.set(kConfigTensor, config_tensor(config_));
}

ColorNet ColorNet::initialize(const NetConfig& config, std::uint64_t seed) {
  validate_config(config);
  Rng rng(seed);
  nn::ModelWeights w;
  for (const auto& [name, dims] : layout(config)) {
    const bool ones = name.ends_with(".gamma") || name.ends_with(".running_var");
    if (dims.size() == 1) {
      w.set(name, nn::Tensor(dims, ones ? 1.0f : 0.0f));
    } else if (name.find(".up.") != std::string::npos) {
      // Each transposed-conv output sees a quarter of the 4x4 taps per input channel.
      w.set(name, nn::kaiming_uniform(dims, dims[0] * dims[2] * dims[3] / 4, rng));
    } else {
      w.set(name, nn::kaiming_uniform(dims, dims[1] * dims[2] * dims[3], rng));
    }
  }
  return ColorNet(config, std::move(w));
}

ColorNet ColorNet::from_weights(const nn::ModelWeights& weights) {
  nn::ModelWeights w;
  for (const auto& [name, t] : weights.tensors()) {
    if (name.rfind("net.", 0) == 0) w.set(name, t);
  }
  NetConfig c = parse_config(w);
  return ColorNet(c, std::move(w));
}

ColorNet ColorNet::load(const std::filesystem::path& path) {
  return from_weights(nn::ModelWeights::load(path));
}

void ColorNet::save(const std::filesystem::path& path) const { weights_.save(path); }

template <typename T>
RunningStats<T> ColorNet::running_stats() const {
  RunningStats<T> out;
  for (int k = 1; k < kBlocks; ++k) {
    for (const char* p : {".bn.running_mean", ".bn.running_var"}) {
      const std::string name = block_name(k) + p;
      out.emplace(name, nn::tensor_cast<T>(weights_.get(name)));
    }
  }
  return out;
}

template <typename T>
nn::Var ColorNet::build(nn::ParamBinder<T>& params, nn::Var input, bool training,
                        RunningStats<T>& stats) const {
  auto& g = params.graph();
  const auto& xd = g.value(input).dims();
  if (xd.size() != 4 || xd[1] != kInputChannels) {
    throw ContractError("colornet: expected [N, 13, H, W] input, got " + nn::dims_string(xd));
  }
  if (xd[2] % kSizeMultiple != 0 || xd[3] % kSizeMultiple != 0) {
    throw ContractError("colornet: build needs H and W divisible by 16, got " + nn::dims_string(xd));
  }

  auto conv = [&](nn::Var x, const std::string& name, nn::Conv2dOptions opt) {
    return nn::relu(g, nn::conv2d(g, x, params(name + ".weight"), params(name + ".bias"), opt));
  };
  auto bn = [&](nn::Var x, const std::string& b) {
    nn::BatchNormRunning<T> run{&stats.at(b + ".bn.running_mean"), &stats.at(b + ".bn.running_var")};
    nn::BatchNormOptions opt;
    opt.training = training;
    return nn::batch_norm(g, x, params(b + ".bn.gamma"), params(b + ".bn.beta"), run, opt);
  };

  std::array<nn::Var, 3> skip;
  nn::Var x = input;
  for (int k = 1; k <= kBlocks; ++k) {
    const std::string b = block_name(k);
    if (k >= 7) {
      x = nn::relu(g, nn::conv_transpose2d(g, x, params(b + ".up.weight"), params(b + ".up.bias"),
                                           nn::ConvTranspose2dOptions{}));
      const int from = kBlocks + 1 - k;
      if (from <= 3 && config_.skips[static_cast<std::size_t>(from - 1)]) {
        x = nn::add(g, x, skip[static_cast<std::size_t>(from - 1)]);
      }
    }
    nn::Conv2dOptions opt;
    opt.dilation = (k == 5 || k == 6) ? config_.dilation : 1;
    opt.padding = opt.dilation;
    for (int j = 0; j < config_.convs_per_block; ++j) x = conv(x, b + ".conv" + std::to_string(j), opt);
    if (k <= 4) {
      if (k <= 3) skip[static_cast<std::size_t>(k - 1)] = x;
      nn::Conv2dOptions down;
      down.stride = 2;
      down.padding = 1;
      x = conv(x, b + ".down", down);
    }
    if (has_bn(k)) x = bn(x, b);
  }
  const nn::Var logits =
      nn::conv2d(g, x, params("net.out.weight"), params("net.out.bias"), nn::Conv2dOptions{});
  return nn::tanh(g, logits);
}

template RunningStats<float> ColorNet::running_stats<float>() const;
template RunningStats<double> ColorNet::running_stats<double>() const;
template nn::Var ColorNet::build<float>(nn::ParamBinder<float>&, nn::Var, bool, RunningStats<float>&) const;
template nn::Var ColorNet::build<double>(nn::ParamBinder<double>&, nn::Var, bool, RunningStats<double>&) const;

nn::Tensor ColorNet::predict(const nn::Tensor& stack) const {
  if (stack.rank() != 4 || stack.channels() != kInputChannels) {
    throw ContractError("colornet: expected [N, 13, H, W] input, got " + nn::dims_string(stack.dims()));
  }
  const int h = stack.height(), w = stack.width();
  const int ph = (h + kSizeMultiple - 1) / kSizeMultiple * kSizeMultiple;
  const int pw = (w + kSizeMultiple - 1) / kSizeMultiple * kSizeMultiple;
  nn::Graph g;
  nn::ParamBinder<float> params(g, weights_, false);
  RunningStats<float> stats = running_stats<float>();
  const nn::Var in = g.input(ph == h && pw == w ? stack : edge_pad(stack, ph, pw));
  const nn::Tensor& y = g.value(build(params, in, false, stats));

  // tanh can round to exactly 1 in f32; keep the open bound.
  const float limit = std::nextafter(image::kMaxAb, 0.0f);
  nn::Tensor out(nn::Dims{stack.batch(), 2, h, w});
  for (int n = 0; n < stack.batch(); ++n) {
    for (int c = 0; c < 2; ++c) {
      for (int yy = 0; yy < h; ++yy) {
        for (int xx = 0; xx < w; ++xx) {
          out.at(n, c, yy, xx) = std::clamp(y.at(n, c, yy, xx) * image::kMaxAb, -limit, limit);
        }
      }
    }
  }
  return out;
}

nn::ModelWeights ColorizationModel::weights() const {
  nn::ModelWeights w = matcher.weights();
  for (const auto& [name, t] : net.weights().tensors()) w.set(name, t);
  return w;
}

ColorizationModel ColorizationModel::from_weights(const nn::ModelWeights& weights) {
  return {encoder::Encoder::from_weights(weights), ColorNet::from_weights(weights)};
}

ColorizationModel ColorizationModel::load(const std::filesystem::path& path) {
  return from_weights(nn::ModelWeights::load(path));
}

void ColorizationModel::save(const std::filesystem::path& path) const { weights().save(path); }

namespace {

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace

image::LabImage colorize(const image::Plane& target_L, const image::LabImage& reference,
                         const encoder::Encoder& enc, const match::MatchConfig& matcher,
                         const ColorNet& net, Intermediates* intermediates) {
  Intermediates local;
  Intermediates& st = intermediates ? *intermediates : local;
  const auto ft = stage("extract", [&] { return enc.extract(target_L); });
  const auto fr = stage("extract", [&] { return enc.extract(reference.L); });
  st.fields = stage("match", [&] { return match::bidirectional(ft, fr, matcher); });
  st.sims = stage("similarity", [&] {
    return fusion::similarity_maps(ft, fr, st.fields.target_to_reference,
                                   st.fields.reference_to_target);
  });
  st.warped = stage("warp", [&] {
    return fusion::warp_chrominance(reference.a, reference.b, st.fields.target_to_reference);
  });
  st.stack = stage("assemble", [&] { return assemble(target_L, st.warped.a, st.warped.b, st.sims); });
  const nn::Tensor ab = stage("forward", [&] { return net.predict(st.stack); });
  const std::size_t plane = target_L.data.size();
  st.predicted.a = image::Plane(target_L.width, target_L.height);
  st.predicted.b = image::Plane(target_L.width, target_L.height);
  std::copy(ab.data().begin(), ab.data().begin() + static_cast<std::ptrdiff_t>(plane),
            st.predicted.a.data.begin());
  std::copy(ab.data().begin() + static_cast<std::ptrdiff_t>(plane), ab.data().end(),
            st.predicted.b.data.begin());
  return image::compose(target_L, st.predicted.a, st.predicted.b);
}

void dump_intermediates(const Intermediates& in, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const int h = in.stack.height(), w = in.stack.width();
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  for (int c = 0; c < kInputChannels; ++c) {
    image::Plane p(w, h);
    std::copy(in.stack.ptr() + c * plane, in.stack.ptr() + (c + 1) * plane, p.data.begin());
    const std::string name = "input_" + (c < 10 ? std::string("0") : std::string()) + std::to_string(c) + ".png";
    write_file(dir / name, image::encode_png_gray(p, -1.0f, 1.0f));
  }
  fusion::dump_similarity(in.sims, dir);
  write_file(dir / "field_t2r.png", image::encode_png(match::field_to_rgb(in.fields.target_to_reference)));
  write_file(dir / "field_r2t.png", image::encode_png(match::field_to_rgb(in.fields.reference_to_target)));
  write_file(dir / "pred_a.png", image::encode_png_gray(in.predicted.a, -image::kMaxAb, image::kMaxAb));
  write_file(dir / "pred_b.png", image::encode_png_gray(in.predicted.b, -image::kMaxAb, image::kMaxAb));
}

}  // namespace chromatix::colornet
