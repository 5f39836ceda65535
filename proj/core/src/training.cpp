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

#include "chromatix/training.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "chromatix/bytes.hpp"
#include "chromatix/fusion.hpp"
#include "chromatix/ops.hpp"
#include "chromatix/random.hpp"

namespace chromatix::training {

// --- losses -----------------------------------------------------------------

template <typename T>
nn::Var chrominance_loss(nn::BasicGraph<T>& g, nn::Var predicted, nn::Var target) {
  if (g.value(predicted).dims() != g.value(target).dims()) {
    throw ContractError("chrominance_loss: dims " + nn::dims_string(g.value(predicted).dims()) +
                        " vs " + nn::dims_string(g.value(target).dims()));
  }
  return nn::sum(g, nn::smooth_l1(g, predicted, target));
}

double chrominance_loss(const nn::Tensor& predicted, const nn::Tensor& target) {
  nn::GraphF64 g;
  const nn::Var p = g.input(nn::tensor_cast<double>(predicted));
  const nn::Var t = g.input(nn::tensor_cast<double>(target));
  return g.value(chrominance_loss(g, p, t)).item();
}

template <typename T>
nn::Var perceptual_loss(nn::ParamBinder<T>& frozen, const encoder::Encoder* perceptual,
                        nn::Var predicted_lab, nn::Var target_lab) {
  if (perceptual == nullptr) throw CapabilityError("perceptual_loss: no perceptual encoder");
  if (perceptual->config().input_channels != 3) {
    throw ContractError("perceptual_loss: encoder must take 3-channel Lab input");
  }
  auto& g = frozen.graph();
  if (g.value(predicted_lab).dims() != g.value(target_lab).dims()) {
    throw ContractError("perceptual_loss: dims " + nn::dims_string(g.value(predicted_lab).dims()) +
                        " vs " + nn::dims_string(g.value(target_lab).dims()));
  }
  const nn::Var fp = perceptual->build(frozen, predicted_lab).taps[encoder::kLevels - 1];
  const nn::Var ft = perceptual->build(frozen, target_lab).taps[encoder::kLevels - 1];
  const nn::Var d = nn::sub(g, fp, ft);
  return nn::sum(g, nn::mul(g, d, d));
}

double perceptual_loss(const image::LabImage& predicted, const image::LabImage& target,
                       const encoder::Encoder* perceptual) {
  if (perceptual == nullptr) throw CapabilityError("perceptual_loss: no perceptual encoder");
  nn::Graph g;
  nn::ParamBinder<float> frozen(g, perceptual->weights(), false);
  const nn::Var p = g.input(encoder::color_input(predicted));
  const nn::Var t = g.input(encoder::color_input(target));
  return g.value(perceptual_loss(frozen, perceptual, p, t)).item();
}

template nn::Var chrominance_loss<float>(nn::Graph&, nn::Var, nn::Var);
template nn::Var chrominance_loss<double>(nn::GraphF64&, nn::Var, nn::Var);
template nn::Var perceptual_loss<float>(nn::ParamBinder<float>&, const encoder::Encoder*, nn::Var, nn::Var);
template nn::Var perceptual_loss<double>(nn::ParamBinder<double>&, const encoder::Encoder*, nn::Var, nn::Var);

// --- configuration ----------------------------------------------------------

void TrainConfig::validate() const {
  if (!(alpha >= 0.0)) throw ContractError("train config: alpha must be >= 0");
  if (batch_size < 2 || batch_size % 2 != 0) {
    throw ContractError("train config: batch_size must be even and >= 2, got " + std::to_string(batch_size));
  }
  const double split = batch_size * branch_split;
  if (!(branch_split > 0.0 && branch_split < 1.0) || split != std::floor(split)) {
    throw ContractError("train config: branch_split must divide the batch exactly");
  }
  if (!(lr > 0.0)) throw ContractError("train config: lr must be > 0");
  if (!(lr_decay > 0.0) || lr_decay_epochs < 1) throw ContractError("train config: invalid lr decay");
  if (epochs < 1 && max_steps < 1) throw ContractError("train config: need epochs or max_steps");
  if (!(role_switch_probability >= 0.0 && role_switch_probability <= 1.0)) {
    throw ContractError("train config: role_switch_probability must be in [0, 1]");
  }
  if (image_size < encoder::kMinInputSide || image_size % colornet::kSizeMultiple != 0) {
    throw ContractError("train config: image_size must be a multiple of 16 and >= 32");
  }
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename V>
V parse_number(std::string_view key, std::string_view text, int line) {
  V v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ContractError("train config line " + std::to_string(line) + ": bad value '" +
                        std::string(text) + "' for " + std::string(key));
  }
  return v;
}

}  // namespace

TrainConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  TrainConfig c;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ContractError("train config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    auto num_d = [&] { return parse_number<double>(key, value, line_no); };
    auto num_i = [&] { return parse_number<int>(key, value, line_no); };
    auto path = [&] {
      std::filesystem::path p{std::string(value)};
      return (p.is_relative() && !base_dir.empty() ? base_dir / p : p).string();
    };
    if (key == "alpha") c.alpha = num_d();
    else if (key == "batch_size") c.batch_size = num_i();
    else if (key == "branch_split") c.branch_split = num_d();
    else if (key == "lr") c.lr = num_d();
    else if (key == "lr_decay") c.lr_decay = num_d();
    else if (key == "lr_decay_epochs") c.lr_decay_epochs = num_i();
    else if (key == "epochs") c.epochs = num_i();
    else if (key == "max_steps") c.max_steps = num_i();
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value, line_no);
    else if (key == "role_switch_probability") c.role_switch_probability = num_d();
    else if (key == "image_size") c.image_size = num_i();
    else if (key == "base_width") c.net.base_width = num_i();
    else if (key == "convs_per_block") c.net.convs_per_block = num_i();
    else if (key == "dilation") c.net.dilation = num_i();
    else if (key == "match_patch_radius") c.match.patch_radius = num_i();
    else if (key == "match_iterations") c.match.iterations = num_i();
    else if (key == "match_levels") c.match.levels = num_i();
    else if (key == "match_search_samples") c.match.search_samples = num_i();
    else if (key == "match_seed") c.match.seed = parse_number<std::uint64_t>(key, value, line_no);
    else if (key == "encoder") c.encoder_path = path();
    else if (key == "perceptual_encoder") c.perceptual_encoder_path = path();
    else if (key == "cache_dir") c.cache_dir = path();
    else {
      throw ContractError("train config line " + std::to_string(line_no) + ": unknown key '" +
                          std::string(key) + "'");
    }
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                      path.parent_path());
}

double learning_rate(const TrainConfig& config, int epoch) {
  return config.lr * std::pow(config.lr_decay, epoch / config.lr_decay_epochs);
}

// --- data -------------------------------------------------------------------

namespace {

nn::Tensor ab_tensor(const image::Plane& a, const image::Plane& b) {
  const std::size_t plane = a.data.size();
  nn::Tensor t(nn::Dims{1, 2, a.height, a.width});
  for (std::size_t i = 0; i < plane; ++i) {
    t[i] = a.data[i] / image::kMaxAb;
    t[plane + i] = b.data[i] / image::kMaxAb;
  }
  return t;
}

BranchData branch(const image::LabImage& target, const image::LabImage& reference,
                  const std::array<nn::Tensor, encoder::kLevels>& ft,
                  const std::array<nn::Tensor, encoder::kLevels>& fr,
                  const match::MappingField& t2r, const match::MappingField& r2t) {
  const fusion::SimilarityMaps sims = fusion::similarity_maps(
      std::span<const nn::Tensor>(ft), std::span<const nn::Tensor>(fr), t2r, r2t);
  const fusion::Chrominance fake = fusion::fake_reference(target.a, target.b, t2r, r2t);
  const fusion::Chrominance warped = fusion::warp_chrominance(reference.a, reference.b, t2r);
  BranchData d;
  d.chroma_input = colornet::assemble(target.L, fake.a, fake.b, sims);
  d.reference_input = colornet::assemble(target.L, warped.a, warped.b, sims);
  d.target_ab = ab_tensor(target.a, target.b);
  d.target_lab = encoder::color_input(target);
  return d;
}

void hash_lab(ByteWriter& w, const image::LabImage& lab) {
  w.u32(static_cast<std::uint32_t>(lab.width()));
  w.u32(static_cast<std::uint32_t>(lab.height()));
  for (const image::Plane* p : {&lab.L, &lab.a, &lab.b}) w.raw(p->data.data(), p->data.size() * sizeof(float));
}

constexpr std::array<const char*, 4> kBranchFields{"chroma_input", "reference_input", "target_ab", "target_lab"};

nn::Tensor* field(BranchData& d, int i) {
  switch (i) {
    case 0: return &d.chroma_input;
    case 1: return &d.reference_input;
    case 2: return &d.target_ab;
    default: return &d.target_lab;
  }
}

}  // namespace

PreparedPair prepare_pair(const image::LabImage& first, const image::LabImage& second,
                          const encoder::Encoder& matcher, const match::MatchConfig& config,
                          const std::filesystem::path& cache_dir) {
  if (first.width() != second.width() || first.height() != second.height()) {
    throw ContractError("prepare_pair: images differ in size");
  }
  if (first.width() % colornet::kSizeMultiple != 0 || first.height() % colornet::kSizeMultiple != 0) {
    throw ContractError("prepare_pair: image sides must be multiples of 16");
  }

  std::filesystem::path cache_file;
  if (!cache_dir.empty()) {
    ByteWriter key;
    hash_lab(key, first);
    hash_lab(key, second);
    key.text(matcher.weights().digest());
    key.text(match::config_digest(config));
    cache_file = cache_dir / (sha256_hex(key.buffer()) + ".cwts");
    if (std::filesystem::exists(cache_file)) {
      const nn::ModelWeights w = nn::ModelWeights::load(cache_file);
      PreparedPair p;
      for (int o = 0; o < 2; ++o) {
        for (int f = 0; f < 4; ++f) {
          *field(p.orientation[static_cast<std::size_t>(o)], f) =
              w.get("o" + std::to_string(o) + "." + kBranchFields[static_cast<std::size_t>(f)]);
        }
      }
      return p;
    }
  }

  const encoder::FeaturePyramid fa = matcher.extract(first.L);
  const encoder::FeaturePyramid fb = matcher.extract(second.L);
  const match::FieldPair fields = match::bidirectional(fa, fb, config);
  const auto ua = fusion::upsample_pyramid(fa, first.width(), first.height());
  const auto ub = fusion::upsample_pyramid(fb, second.width(), second.height());
  PreparedPair p;
  p.orientation[0] = branch(first, second, ua, ub, fields.target_to_reference, fields.reference_to_target);
  p.orientation[1] = branch(second, first, ub, ua, fields.reference_to_target, fields.target_to_reference);

  if (!cache_file.empty()) {
    nn::ModelWeights w;
    for (int o = 0; o < 2; ++o) {
      for (int f = 0; f < 4; ++f) {
        w.set("o" + std::to_string(o) + "." + kBranchFields[static_cast<std::size_t>(f)],
              *field(p.orientation[static_cast<std::size_t>(o)], f));
      }
    }
    w.save(cache_file);
  }
  return p;
}

std::vector<std::pair<std::filesystem::path, std::filesystem::path>> read_pair_list(
    const std::filesystem::path& list_file) {
  std::ifstream in(list_file);
  if (!in) throw LoadError("cannot open pair list " + list_file.string());
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::string a, b, extra;
    if (!(fields >> a)) continue;
    if (!(fields >> b) || (fields >> extra)) {
      throw LoadError(list_file.string() + " line " + std::to_string(line_no) +
                      ": expected 'target reference'");
    }
    out.emplace_back(list_file.parent_path() / a, list_file.parent_path() / b);
  }
  if (out.empty()) throw LoadError(list_file.string() + ": no pairs");
  return out;
}

// --- trainer ----------------------------------------------------------------

Trainer::Trainer(TrainConfig config, colornet::ColorNet net, const encoder::Encoder& perceptual,
                 std::vector<PreparedPair> pairs)
    : config_(std::move(config)), net_(std::move(net)), perceptual_(perceptual),
      pairs_(std::move(pairs)) {
  config_.validate();
  if (pairs_.empty()) throw ContractError("train: empty dataset");
  for (const PreparedPair& p : pairs_) {
    if (p.width() != pairs_[0].width() || p.height() != pairs_[0].height()) {
      throw ContractError("train: all pairs must share one image size");
    }
  }
  if (perceptual_.config().input_channels != 3) {
    throw ContractError("train: perceptual encoder must take 3-channel input");
  }
}

int Trainer::steps_per_epoch() const {
  const auto n = static_cast<int>(pairs_.size());
  return (n + config_.batch_size - 1) / config_.batch_size;
}

int Trainer::total_steps() const {
  return config_.max_steps > 0 ? config_.max_steps : config_.epochs * steps_per_epoch();
}

std::vector<BatchItem> Trainer::batch_for_step(int step) const {
  // Items come from a stream of per-epoch seeded permutations.
  const std::size_t n = pairs_.size();
  const std::size_t b = static_cast<std::size_t>(config_.batch_size);
  std::vector<BatchItem> out;
  std::size_t cached_epoch = SIZE_MAX;
  std::vector<std::size_t> perm(n);
  Rng roles(config_.seed * 0x9e3779b97f4a7c15ULL + 0x51ed27ULL + static_cast<std::uint64_t>(step));
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t pos = static_cast<std::size_t>(step) * b + i;
    const std::size_t epoch = pos / n;
    if (epoch != cached_epoch) {
      for (std::size_t k = 0; k < n; ++k) perm[k] = k;
      Rng rng(config_.seed ^ (0xabcdef12345ULL + epoch * 0x100000001b3ULL));
      rng.shuffle(perm.begin(), perm.end());
      cached_epoch = epoch;
    }
    out.push_back({perm[pos % n], roles.uniform() < config_.role_switch_probability});
  }
  return out;
}

std::pair<std::vector<BatchItem>, std::vector<BatchItem>> Trainer::peek_batch() const {
  std::vector<BatchItem> all = batch_for_step(step_);
  const auto half = static_cast<std::ptrdiff_t>(std::lround(config_.batch_size * config_.branch_split));
  return {std::vector<BatchItem>(all.begin(), all.begin() + half),
          std::vector<BatchItem>(all.begin() + half, all.end())};
}

GradientResult Trainer::compute_gradients(std::span<const BatchItem> chroma,
                                          std::span<const BatchItem> perceptual, bool update_stats) {
  nn::Graph g;
  nn::ParamBinder<float> params(g, net_.weights(), true);
  nn::ParamBinder<float> frozen(g, perceptual_.weights(), false);
  colornet::RunningStats<float> stats = net_.running_stats<float>();
  auto data = [&](const BatchItem& it) -> const BranchData& {
    if (it.pair >= pairs_.size()) throw ContractError("train: batch item out of range");
    return pairs_[it.pair].orientation[it.swapped ? 1 : 0];
  };

  // One forward pass over the whole batch so batch statistics span both branches.
  const int nc = static_cast<int>(chroma.size()), np = static_cast<int>(perceptual.size());
  if (nc + np == 0) throw ContractError("train: empty batch");
  std::vector<const nn::Tensor*> in;
  for (const BatchItem& it : chroma) in.push_back(&data(it).chroma_input);
  for (const BatchItem& it : perceptual) in.push_back(&data(it).reference_input);
  const nn::Var pred_all = net_.build(params, g.input(colornet::stack_batch(in)), true, stats);

  GradientResult out;
  nn::Var total;
  if (nc > 0) {
    std::vector<const nn::Tensor*> tgt;
    for (const BatchItem& it : chroma) tgt.push_back(&data(it).target_ab);
    const nn::Var pred = np > 0 ? nn::slice_batch(g, pred_all, 0, nc) : pred_all;
    const nn::Var loss = nn::scale(g, chrominance_loss(g, pred, g.input(colornet::stack_batch(tgt))),
                                   1.0f / static_cast<float>(nc));
    out.loss.l_chrom = g.value(loss).item();
    total = loss;
  }
  if (np > 0) {
    std::vector<const nn::Tensor*> lab;
    for (const BatchItem& it : perceptual) lab.push_back(&data(it).target_lab);
    const nn::Tensor target_lab = colornet::stack_batch(lab);
    const std::size_t plane = static_cast<std::size_t>(target_lab.height()) * target_lab.width();
    nn::Tensor luma(nn::Dims{target_lab.batch(), 1, target_lab.height(), target_lab.width()});
    for (int n = 0; n < target_lab.batch(); ++n) {
      std::copy_n(&target_lab.at(n, 0, 0, 0), plane, &luma.at(n, 0, 0, 0));
    }
    const nn::Var pred = nc > 0 ? nn::slice_batch(g, pred_all, nc, nc + np) : pred_all;
    const std::array<nn::Var, 2> parts{g.input(std::move(luma)), pred};
    const nn::Var p_lab = nn::concat_channels(g, std::span<const nn::Var>(parts));
    const nn::Var loss = nn::scale(g, perceptual_loss(frozen, &perceptual_, p_lab, g.input(target_lab)),
                                   1.0f / static_cast<float>(np));
    out.loss.l_perc = g.value(loss).item();
    const nn::Var weighted = nn::scale(g, loss, static_cast<float>(config_.alpha));
    total = total.valid() ? nn::add(g, total, weighted) : weighted;
  }
  out.loss.combined = g.value(total).item();
  g.backward(total);

  for (const auto& [name, dims] : colornet::ColorNet::layout(net_.config())) {
    if (name.ends_with(".running_mean") || name.ends_with(".running_var")) continue;
    const auto it = params.bound().find(name);
    const nn::Tensor* grad = it == params.bound().end() ? nullptr : &g.grad(it->second);
    out.grads.emplace(name, grad && !grad->empty() ? *grad : nn::Tensor(dims, 0.0f));
  }
  if (update_stats) {
    for (auto& [name, t] : stats) net_.mutable_weights().set(name, std::move(t));
  }
  return out;
}

void Trainer::apply(const GradientResult& grads, double lr) {
  adam_.options.lr = lr;
  std::vector<nn::Tensor*> ps;
  std::vector<const nn::Tensor*> gs;
  for (const auto& [name, g] : grads.grads) {
    ps.push_back(&net_.mutable_weights().get_mutable(name));
    gs.push_back(&g);
  }
  nn::adam_step(ps, gs, adam_);
}

StepRecord Trainer::step() {
  const auto [chroma, perceptual] = peek_batch();
  StepRecord r;
  r.step = step_;
  r.epoch = step_ * config_.batch_size / static_cast<int>(pairs_.size());
  r.lr = learning_rate(config_, r.epoch);
  const GradientResult grads = compute_gradients(chroma, perceptual, true);
  apply(grads, r.lr);
  r.l_chrom = grads.loss.l_chrom;
  r.l_perc = grads.loss.l_perc;
  r.chroma_items = static_cast<int>(chroma.size());
  r.perceptual_items = static_cast<int>(perceptual.size());
  history_.push_back(r);
  ++step_;
  return r;
}

LossValue Trainer::evaluate() {
  std::vector<BatchItem> all;
  for (std::size_t i = 0; i < pairs_.size(); ++i) all.push_back({i, false});
  return compute_gradients(all, all, false).loss;
}

TrainResult train(std::vector<PreparedPair> pairs, const encoder::Encoder& perceptual,
                  const TrainConfig& config) {
  Trainer trainer(config, colornet::ColorNet::initialize(config.net, config.seed), perceptual,
                  std::move(pairs));
  TrainResult result{trainer.net(), {}, trainer.evaluate(), {}};
  const int steps = trainer.total_steps();
  for (int s = 0; s < steps; ++s) trainer.step();
  result.final = trainer.evaluate();
  result.net = trainer.net();
  result.history = trainer.history();
  return result;
}

std::string history_csv(std::span<const StepRecord> history) {
  std::ostringstream out;
  out.precision(9);
  out << "step,l_chrom,l_perc,lr\n";
  for (const StepRecord& r : history) out << r.step << ',' << r.l_chrom << ',' << r.l_perc << ',' << r.lr << '\n';
  return out.str();
}

}  // namespace chromatix::training
