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

#include "cli.hpp"

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <map>
#include <thread>

#include "CLI11.hpp"
#include "chromatix/colornet.hpp"
#include "chromatix/error.hpp"
#include "chromatix/retrieval.hpp"
#include "chromatix/synthetic.hpp"
#include "chromatix/training.hpp"

#ifdef CHROMATIX_WITH_HTTP
#include <pthread.h>

#include "chromatix/http.hpp"
#endif

namespace chromatix::cli {

namespace fs = std::filesystem;

namespace {

std::vector<fs::path> png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw LoadError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

encoder::Encoder retrieval_encoder(const retrieval::ReferenceIndex& index, const std::string& override_path) {
  if (!override_path.empty()) return encoder::Encoder::load(override_path);
  if (index.meta.encoder_locator.empty()) {
    throw ContractError("index does not record its encoder; pass --encoder");
  }
  return encoder::Encoder::load(index.meta.encoder_locator);
}

void check_digest(const retrieval::ReferenceIndex& index, const encoder::Encoder& enc) {
  if (enc.weights().digest() != index.meta.encoder_digest) {
    throw ContractError("encoder weights do not match the ones the index was built with");
  }
}

struct IndexBuildArgs {
  std::string images, encoder, out;
  int global_k = 128, local_k = 64;
};

int index_build(const IndexBuildArgs& a, std::ostream& out, std::ostream& err) {
  const encoder::Encoder enc = encoder::Encoder::load(a.encoder);
  std::vector<retrieval::IndexSource> sources;
  for (const fs::path& p : png_files(a.images)) sources.push_back({p.string()});
  if (sources.empty()) throw LoadError("no PNG files under " + a.images);
  retrieval::IndexBuildOptions opt;
  opt.global_k = a.global_k;
  opt.local_k = a.local_k;
  std::vector<retrieval::SkippedSource> skipped;
  const auto index =
      retrieval::build_index(sources, enc, opt, &skipped, fs::absolute(a.encoder).lexically_normal().string());
  for (const auto& s : skipped) err << "warning: skipped " << s.locator << ": " << s.reason << "\n";
  index.save(a.out);
  out << "indexed " << index.entries.size() << " images (" << skipped.size() << " skipped), global k "
      << index.pca_global.k() << ", local k " << index.pca_local.k() << "\n";
  return kExitOk;
}

struct RecommendArgs {
  std::string target, index, encoder;
  int top = 5;
};

int recommend(const RecommendArgs& a, std::ostream& out) {
  const auto index = retrieval::ReferenceIndex::load(a.index);
  const encoder::Encoder enc = retrieval_encoder(index, a.encoder);
  check_digest(index, enc);
  const image::LabImage lab = image::rgb_to_lab(image::read_png(a.target));
  out << "rank\tid\tscore\tlocator\n";
  int rank = 1;
  for (const auto& c : retrieval::recommend(lab.L, enc, index, a.top)) {
    char score[32];
    std::snprintf(score, sizeof score, "%.6f", c.score);
    out << rank++ << "\t" << c.id << "\t" << score << "\t" << index.find(c.id)->locator << "\n";
  }
  return kExitOk;
}

struct ColorizeArgs {
  std::string target, reference, weights, out, dump;
  std::uint64_t seed = 0;
};

int colorize(const ColorizeArgs& a, std::ostream& out) {
  const auto model = colornet::ColorizationModel::load(a.weights);
  const image::LabImage target = image::rgb_to_lab(image::read_png(a.target));
  const image::LabImage reference = image::rgb_to_lab(image::read_png(a.reference));
  match::MatchConfig mc;
  mc.seed = a.seed;
  colornet::Intermediates inter;
  const image::LabImage result = colornet::colorize(target.L, reference, model.matcher, mc, model.net, &inter);
  image::write_png(a.out, image::lab_to_rgb(result));
  if (!a.dump.empty()) colornet::dump_intermediates(inter, a.dump);
  out << "wrote " << a.out << " (" << result.width() << "x" << result.height() << ")\n";
  return kExitOk;
}

struct TrainArgs {
  std::string pairs, config, out, history;
};

int train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const training::TrainConfig cfg = training::load_config(a.config);
  if (cfg.encoder_path.empty() || cfg.perceptual_encoder_path.empty()) {
    throw ContractError("train config needs both 'encoder' and 'perceptual_encoder'");
  }
  const encoder::Encoder gray = encoder::Encoder::load(cfg.encoder_path);
  const encoder::Encoder color = encoder::Encoder::load(cfg.perceptual_encoder_path);
  const fs::path list = fs::is_directory(a.pairs) ? fs::path(a.pairs) / "pairs.txt" : fs::path(a.pairs);
  std::vector<training::PreparedPair> pairs;
  for (const auto& [t, r] : training::read_pair_list(list)) {
    const auto load = [&](const fs::path& p) {
      return image::rgb_to_lab(image::resize_center_crop(image::read_png(p), cfg.image_size));
    };
    pairs.push_back(training::prepare_pair(load(t), load(r), gray, cfg.match, cfg.cache_dir));
  }
  err << "prepared " << pairs.size() << " pairs\n";
  const training::TrainResult result = training::train(std::move(pairs), color, cfg);
  colornet::ColorizationModel{gray, result.net}.save(a.out);
  if (!a.history.empty()) {
    std::ofstream h(a.history, std::ios::binary);
    if (!h) throw LoadError("cannot write " + a.history);
    h << training::history_csv(result.history);
  }
  out << "steps " << result.history.size() << ", loss " << result.initial.combined << " -> "
      << result.final.combined << "\n";
  return kExitOk;
}

struct EncoderTrainArgs {
  std::string images, out;
  bool color = false;
  int size = 64, steps = 200;
  double lr = 2e-3;
  std::uint64_t seed = 1;
};

// Class labels are the sorted names of the first-level subdirectories.
int encoder_train(const EncoderTrainArgs& a, std::ostream& out) {
  std::map<std::string, std::vector<fs::path>> classes;
  if (!fs::is_directory(a.images)) throw LoadError("not a directory: " + a.images);
  for (const auto& e : fs::directory_iterator(a.images)) {
    if (e.is_directory()) classes[e.path().filename().string()] = png_files(e.path());
  }
  std::erase_if(classes, [](const auto& kv) { return kv.second.empty(); });
  if (classes.size() < 2) throw ContractError("need at least two class subdirectories with PNG files");
  std::vector<encoder::LabeledInput> data;
  int label = 0;
  for (const auto& [name, files] : classes) {
    for (const fs::path& p : files) {
      const image::LabImage lab = image::rgb_to_lab(image::resize_center_crop(image::read_png(p), a.size));
      data.push_back({a.color ? encoder::color_input(lab) : encoder::gray_input(lab.L), label});
    }
    ++label;
  }
  encoder::ClassifierTrainOptions opt;
  opt.steps = a.steps;
  opt.lr = a.lr;
  opt.seed = a.seed;
  const auto result = encoder::train_classifier(
      data, encoder::EncoderConfig::toy(a.color ? 3 : 1, static_cast<int>(classes.size())), opt);
  result.encoder.save(a.out);
  out << "trained on " << data.size() << " images, " << classes.size() << " classes, final loss "
      << result.loss_history.back() << "\n";
  return kExitOk;
}

struct SynthArgs {
  std::string out;
  int per_class = 8, size = 64;
  std::uint64_t seed = 1;
};

int synth(const SynthArgs& a, std::ostream& out) {
  int n = 0;
  for (const auto& item : synthetic::corpus(a.per_class, a.size, a.seed)) {
    const fs::path dir =
        fs::path(a.out) / synthetic::pattern_name(static_cast<synthetic::Pattern>(item.label));
    fs::create_directories(dir);
    image::write_png(dir / (item.name + ".png"), item.image);
    ++n;
  }
  out << "wrote " << n << " images\n";
  return kExitOk;
}

struct ServeArgs {
  std::string host = "127.0.0.1", index, encoder, weights, state, static_dir;
  int port = 8080, workers = 2, queue = 64;
};

int serve(const ServeArgs& a, std::ostream& out) {
#ifdef CHROMATIX_WITH_HTTP
  // SIGINT/SIGTERM stop the server and the state is persisted on the way out.
  // Blocked before any thread starts so that only the waiter receives them.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  app::ServiceOptions opt;
  opt.workers = a.workers;
  opt.queue_depth = a.queue;
  opt.state_dir = a.state;
  app::Service service(colornet::ColorizationModel::load(a.weights), opt);
  if (!a.index.empty()) {
    auto index = retrieval::ReferenceIndex::load(a.index);
    encoder::Encoder enc = retrieval_encoder(index, a.encoder);
    check_digest(index, enc);
    service.attach_index(std::move(index), std::move(enc));
  }
  app::HttpServer server(service, app::HttpOptions{a.static_dir});
  const int port = server.bind(a.host, a.port);
  out << "listening on http://" << a.host << ":" << port << "/" << std::endl;

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  });
  server.run();
  service.wait_idle();
  service.persist();
  waiter.join();
  return kExitOk;
#else
  (void)a;
  (void)out;
  throw UnavailableError("this build has no HTTP support");
#endif
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Exemplar-based image colorization", "chromatix"};
  app.require_subcommand(1);

  auto* index = app.add_subcommand("index", "Reference index commands");
  index->require_subcommand(1);
  IndexBuildArgs ib;
  auto* ibc = index->add_subcommand("build", "Index every PNG under a directory");
  ibc->add_option("--images", ib.images, "Directory of reference PNGs (searched recursively)")->required();
  ibc->add_option("--encoder", ib.encoder, "Gray encoder weights (CWTS)")->required();
  ibc->add_option("--out", ib.out, "Index file to write")->required();
  ibc->add_option("--global-k", ib.global_k, "PCA components of the global descriptor")->check(CLI::PositiveNumber);
  ibc->add_option("--local-k", ib.local_k, "PCA components of the local descriptor")->check(CLI::PositiveNumber);

  RecommendArgs rc;
  auto* rcc = app.add_subcommand("recommend", "Rank indexed references for a target");
  rcc->add_option("--target", rc.target, "Target PNG")->required();
  rcc->add_option("--index", rc.index, "Index file")->required();
  rcc->add_option("--top", rc.top, "Number of references")->check(CLI::PositiveNumber);
  rcc->add_option("--encoder", rc.encoder, "Encoder weights (default: the one recorded in the index)");

  ColorizeArgs co;
  auto* coc = app.add_subcommand("colorize", "Colorize a target from a reference");
  coc->add_option("--target", co.target, "Target PNG (only luminance is used)")->required();
  coc->add_option("--reference", co.reference, "Color reference PNG")->required();
  coc->add_option("--weights", co.weights, "Model weights (CWTS)")->required();
  coc->add_option("--out", co.out, "Output PNG")->required();
  coc->add_option("--dump-intermediates", co.dump, "Directory for stage outputs");
  coc->add_option("--seed", co.seed, "Matcher seed");

  TrainArgs tr;
  auto* trc = app.add_subcommand("train", "Train the colorization network");
  trc->add_option("--pairs", tr.pairs, "Directory holding pairs.txt, or a pair list file")->required();
  trc->add_option("--config", tr.config, "Training config")->required();
  trc->add_option("--out", tr.out, "Model weights to write (CWTS)")->required();
  trc->add_option("--history", tr.history, "Per-step loss CSV");

  auto* enc = app.add_subcommand("encoder", "Encoder commands");
  enc->require_subcommand(1);
  EncoderTrainArgs et;
  auto* etc = enc->add_subcommand("train", "Train a toy classifier encoder on class subdirectories");
  etc->add_option("--images", et.images, "Directory with one subdirectory of PNGs per class")->required();
  etc->add_option("--out", et.out, "Encoder weights to write (CWTS)")->required();
  etc->add_flag("--color", et.color, "Three-channel Lab input (perceptual encoder)");
  etc->add_option("--size", et.size, "Training crop size")->check(CLI::Range(32, 4096));
  etc->add_option("--steps", et.steps, "Adam steps")->check(CLI::PositiveNumber);
  etc->add_option("--lr", et.lr, "Learning rate")->check(CLI::PositiveNumber);
  etc->add_option("--seed", et.seed, "Initialization seed");

  SynthArgs sy;
  auto* syc = app.add_subcommand("synth", "Write a synthetic labeled corpus");
  syc->add_option("--out", sy.out, "Output directory (one subdirectory per class)")->required();
  syc->add_option("--per-class", sy.per_class, "Images per class")->check(CLI::PositiveNumber);
  syc->add_option("--size", sy.size, "Image edge in pixels")->check(CLI::Range(8, 4096));
  syc->add_option("--seed", sy.seed, "Seed");

  ServeArgs sv;
  auto* svc = app.add_subcommand("serve", "Run the HTTP service");
  svc->add_option("--port", sv.port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
  svc->add_option("--host", sv.host, "Bind address");
  svc->add_option("--index", sv.index, "Index file");
  svc->add_option("--encoder", sv.encoder, "Retrieval encoder (default: the one recorded in the index)");
  svc->add_option("--weights", sv.weights, "Model weights (CWTS)")->required();
  svc->add_option("--state", sv.state, "State directory (store, jobs, cache)");
  svc->add_option("--static", sv.static_dir, "Directory of web UI assets served under /");
  svc->add_option("--workers", sv.workers, "Colorization workers")->check(CLI::PositiveNumber);
  svc->add_option("--queue", sv.queue, "Maximum queued jobs")->check(CLI::PositiveNumber);

  std::vector<std::string> rev(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rev.begin(), rev.end());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    err << "run with --help for usage\n";
    return kExitUsage;
  }

  try {
    if (ibc->parsed()) return index_build(ib, out, err);
    if (rcc->parsed()) return recommend(rc, out);
    if (coc->parsed()) return colorize(co, out);
    if (trc->parsed()) return train(tr, out, err);
    if (etc->parsed()) return encoder_train(et, out);
    if (syc->parsed()) return synth(sy, out);
    if (svc->parsed()) return serve(sv, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace chromatix::cli
