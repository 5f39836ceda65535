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

#include "chromatix/app.hpp"

#include <chrono>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace chromatix::app {

using json = nlohmann::json;

namespace {

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string text_of(const std::vector<std::uint8_t>& bytes) { return std::string(bytes.begin(), bytes.end()); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

json parse_json(const std::filesystem::path& path) {
  try {
    return json::parse(text_of(read_file(path)));
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

}  // namespace

// --- image store ------------------------------------------------------------

const char* kind_name(ImageKind kind) {
  switch (kind) {
    case ImageKind::kUpload: return "upload";
    case ImageKind::kReference: return "reference";
    case ImageKind::kThumbnail: return "thumbnail";
    case ImageKind::kResult: return "result";
  }
  return "unknown";
}

ImageKind parse_kind(std::string_view name) {
  for (ImageKind k : {ImageKind::kUpload, ImageKind::kReference, ImageKind::kThumbnail, ImageKind::kResult}) {
    if (name == kind_name(k)) return k;
  }
  throw LoadError("unknown image kind '" + std::string(name) + "'");
}

ImageStore::ImageStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!dir_.empty()) std::filesystem::create_directories(dir_ / "blobs");
}

void ImageStore::load() {
  if (dir_.empty()) throw ContractError("image store: load needs a directory");
  const json doc = parse_json(dir_ / "images.json");
  std::map<std::string, ImageMeta> loaded;
  std::vector<std::string> bad;
  try {
    for (const json& e : doc.at("images")) {
      ImageMeta m{e.at("id").get<std::string>(), e.at("width").get<int>(), e.at("height").get<int>(),
                  parse_kind(e.at("kind").get<std::string>())};
      const auto blob = dir_ / "blobs" / (m.id + ".png");
      if (!std::filesystem::exists(blob) || sha256_hex(read_file(blob)) != m.id) bad.push_back(m.id);
      loaded.emplace(m.id, m);
    }
  } catch (const json::exception& e) {
    throw LoadError((dir_ / "images.json").string() + ": " + e.what());
  }
  if (!bad.empty()) {
    std::string ids;
    for (const std::string& id : bad) ids += (ids.empty() ? "" : ", ") + id;
    throw CorruptionError("image store: corrupted entries: " + ids);
  }
  std::unique_lock lock(mutex_);
  meta_ = std::move(loaded);
}

std::string ImageStore::put(std::span<const std::uint8_t> png, ImageKind kind) {
  image::RgbImage decoded;
  try {
    decoded = image::decode_png(png);
  } catch (const LoadError& e) {
    throw ContractError(std::string("image store: not a PNG: ") + e.what());
  }
  const std::string id = sha256_hex(png);
  std::unique_lock lock(mutex_);
  if (meta_.contains(id)) return id;
  if (dir_.empty()) {
    memory_.emplace(id, std::vector<std::uint8_t>(png.begin(), png.end()));
  } else {
    write_file(dir_ / "blobs" / (id + ".png"), png);
  }
  meta_.emplace(id, ImageMeta{id, decoded.width, decoded.height, kind});
  return id;
}

std::string ImageStore::put(const image::RgbImage& img, ImageKind kind) { return put(image::encode_png(img), kind); }

std::vector<std::uint8_t> ImageStore::get(const std::string& id) const {
  std::shared_lock lock(mutex_);
  if (!meta_.contains(id)) throw NotFoundError("image " + id + " not found");
  if (dir_.empty()) return memory_.at(id);
  return read_file(dir_ / "blobs" / (id + ".png"));
}

image::RgbImage ImageStore::decode(const std::string& id) const { return image::decode_png(get(id)); }

std::optional<ImageMeta> ImageStore::meta(const std::string& id) const {
  std::shared_lock lock(mutex_);
  const auto it = meta_.find(id);
  if (it == meta_.end()) return std::nullopt;
  return it->second;
}

bool ImageStore::contains(const std::string& id) const {
  std::shared_lock lock(mutex_);
  return meta_.contains(id);
}

std::size_t ImageStore::size() const {
  std::shared_lock lock(mutex_);
  return meta_.size();
}

void ImageStore::save() const {
  if (dir_.empty()) return;
  json images = json::array();
  {
    std::shared_lock lock(mutex_);
    for (const auto& [id, m] : meta_) {
      images.push_back({{"id", m.id}, {"width", m.width}, {"height", m.height}, {"kind", kind_name(m.kind)}});
    }
  }
  write_text(dir_ / "images.json", json{{"images", images}}.dump(1) + "\n");
}

// --- jobs -------------------------------------------------------------------

const char* state_name(JobState state) {
  switch (state) {
    case JobState::kQueued: return "queued";
    case JobState::kRunning: return "running";
    case JobState::kDone: return "done";
    case JobState::kFailed: return "failed";
  }
  return "unknown";
}

JobState parse_state(std::string_view name) {
  for (JobState s : {JobState::kQueued, JobState::kRunning, JobState::kDone, JobState::kFailed}) {
    if (name == state_name(s)) return s;
  }
  throw LoadError("unknown job state '" + std::string(name) + "'");
}

std::string JobTable::insert(JobRecord record) {
  std::lock_guard lock(mutex_);
  std::ostringstream id;
  id << "job-" << std::setw(6) << std::setfill('0') << next_++;
  record.id = id.str();
  record.created_ms = record.updated_ms = now_ms();
  jobs_.emplace(record.id, record);
  return record.id;
}

JobRecord& JobTable::at(const std::string& id) {
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) throw NotFoundError("job " + id + " not found");
  return it->second;
}

std::string JobTable::create(const std::string& target_id, const std::string& reference_id) {
  return insert(JobRecord{{}, target_id, reference_id, JobState::kQueued, {}, {}, 0, 0});
}

std::string JobTable::create_done(const std::string& target_id, const std::string& reference_id,
                                  const std::string& result_id) {
  if (result_id.empty()) throw ContractError("job: done requires a result id");
  return insert(JobRecord{{}, target_id, reference_id, JobState::kDone, result_id, {}, 0, 0});
}

namespace {

void transition(JobRecord& r, JobState from, JobState to) {
  if (r.state != from) {
    throw ContractError("job " + r.id + ": cannot move from " + state_name(r.state) + " to " + state_name(to));
  }
  r.state = to;
  r.updated_ms = now_ms();
}

}  // namespace

void JobTable::start(const std::string& id) {
  std::lock_guard lock(mutex_);
  transition(at(id), JobState::kQueued, JobState::kRunning);
}

void JobTable::finish(const std::string& id, const std::string& result_id) {
  if (result_id.empty()) throw ContractError("job: done requires a result id");
  std::lock_guard lock(mutex_);
  JobRecord& r = at(id);
  transition(r, JobState::kRunning, JobState::kDone);
  r.result_id = result_id;
}

void JobTable::fail(const std::string& id, const std::string& error) {
  std::lock_guard lock(mutex_);
  JobRecord& r = at(id);
  transition(r, JobState::kRunning, JobState::kFailed);
  r.error = error.empty() ? "unknown error" : error;
}

void JobTable::requeue(const std::string& id) {
  std::lock_guard lock(mutex_);
  transition(at(id), JobState::kRunning, JobState::kQueued);
}

JobRecord JobTable::get(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) throw NotFoundError("job " + id + " not found");
  return it->second;
}

std::vector<JobRecord> JobTable::all() const {
  std::lock_guard lock(mutex_);
  std::vector<JobRecord> out;
  for (const auto& [id, r] : jobs_) out.push_back(r);
  return out;
}

std::size_t JobTable::size() const {
  std::lock_guard lock(mutex_);
  return jobs_.size();
}

std::string JobTable::to_json() const {
  json jobs = json::array();
  std::lock_guard lock(mutex_);
  for (const auto& [id, r] : jobs_) {
    jobs.push_back({{"id", r.id},
                    {"target_id", r.target_id},
                    {"reference_id", r.reference_id},
                    {"state", state_name(r.state)},
                    {"result_id", r.result_id},
                    {"error", r.error},
                    {"created_ms", r.created_ms},
                    {"updated_ms", r.updated_ms}});
  }
  return json{{"next", next_}, {"jobs", jobs}}.dump(1) + "\n";
}

void JobTable::load_json(std::string_view text) {
  std::map<std::string, JobRecord> loaded;
  std::uint64_t next = 1;
  try {
    const json doc = json::parse(text);
    next = doc.at("next").get<std::uint64_t>();
    for (const json& e : doc.at("jobs")) {
      JobRecord r{e.at("id").get<std::string>(),
                  e.at("target_id").get<std::string>(),
                  e.at("reference_id").get<std::string>(),
                  parse_state(e.at("state").get<std::string>()),
                  e.at("result_id").get<std::string>(),
                  e.at("error").get<std::string>(),
                  e.at("created_ms").get<std::int64_t>(),
                  e.at("updated_ms").get<std::int64_t>()};
      if ((r.state == JobState::kDone) != !r.result_id.empty() ||
          (r.state == JobState::kFailed) != !r.error.empty()) {
        throw LoadError("job " + r.id + ": state and result/error disagree");
      }
      loaded.emplace(r.id, r);
    }
  } catch (const json::exception& e) {
    throw LoadError(std::string("job table: ") + e.what());
  }
  std::lock_guard lock(mutex_);
  jobs_ = std::move(loaded);
  next_ = next;
}

// --- service ----------------------------------------------------------------

Service::Service(colornet::ColorizationModel model, ServiceOptions options)
    : model_(std::move(model)), options_(std::move(options)), weights_digest_(model_.weights().digest()),
      store_(options_.state_dir) {
  if (options_.workers < 1) throw ContractError("service: workers must be >= 1");
  if (options_.queue_depth < 1) throw ContractError("service: queue depth must be >= 1");
  if (!options_.state_dir.empty()) restore();
  for (int i = 0; i < options_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

Service::~Service() {
  {
    std::lock_guard lock(queue_mutex_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  for (std::thread& t : workers_) t.join();
}

void Service::restore() {
  const auto& dir = options_.state_dir;
  if (std::filesystem::exists(dir / "images.json")) store_.load();
  if (std::filesystem::exists(dir / "jobs.json")) jobs_.load_json(text_of(read_file(dir / "jobs.json")));
  if (std::filesystem::exists(dir / "service.json")) {
    const json doc = parse_json(dir / "service.json");
    try {
      for (const auto& [key, result] : doc.at("cache").items()) cache_.emplace(key, result.get<std::string>());
      for (const json& r : doc.at("references")) {
        references_[r.at("entry").get<std::uint32_t>()] =
            Reference{r.at("image").get<std::string>(), r.at("thumb").get<std::string>()};
      }
    } catch (const json::exception& e) {
      throw LoadError((dir / "service.json").string() + ": " + e.what());
    }
  }
  if (std::filesystem::exists(dir / "index.cwix")) {
    index_ = retrieval::ReferenceIndex::load(dir / "index.cwix");
    retrieval_encoder_ = encoder::Encoder::load(dir / "retrieval_encoder.cwts");
  }
  // Jobs interrupted by the previous shutdown run again, oldest first.
  for (const JobRecord& r : jobs_.all()) {
    if (r.state == JobState::kRunning) jobs_.requeue(r.id);
    if (r.state == JobState::kRunning || r.state == JobState::kQueued) queue_.push_back(r.id);
  }
}

void Service::attach_index(retrieval::ReferenceIndex index, encoder::Encoder retrieval_encoder) {
  std::map<std::uint32_t, Reference> refs;
  std::vector<retrieval::IndexEntry> kept;
  for (retrieval::IndexEntry& e : index.entries) {
    image::RgbImage img;
    try {
      img = image::read_image(e.locator);
    } catch (const Error& err) {
      std::fprintf(stderr, "warning: reference %s skipped: %s\n", e.locator.c_str(), err.what());
      continue;
    }
    Reference r;
    r.image_id = store_.put(img, ImageKind::kReference);
    const int short_edge = std::min(img.width, img.height);
    r.thumb_id = short_edge > options_.thumbnail_edge
                     ? store_.put(image::resize_short_edge(img, options_.thumbnail_edge), ImageKind::kThumbnail)
                     : r.image_id;
    refs.emplace(e.id, r);
    kept.push_back(std::move(e));
  }
  index.entries = std::move(kept);
  std::unique_lock lock(index_mutex_);
  index_ = std::move(index);
  retrieval_encoder_ = std::move(retrieval_encoder);
  references_ = std::move(refs);
}

bool Service::has_index() const {
  std::shared_lock lock(index_mutex_);
  return index_.has_value();
}

std::string Service::reference_id(std::uint32_t entry_id) const {
  std::shared_lock lock(index_mutex_);
  const auto it = references_.find(entry_id);
  return it == references_.end() ? std::string() : it->second.image_id;
}

std::string Service::put_image(std::span<const std::uint8_t> png) { return store_.put(png, ImageKind::kUpload); }

std::vector<std::uint8_t> Service::image(const std::string& id) const { return store_.get(id); }

std::vector<Recommendation> Service::recommend(const std::string& image_id, int k) const {
  if (k < 1) throw ContractError("recommend: k must be >= 1");
  const image::Plane L = image::rgb_to_lab(store_.decode(image_id)).L;
  std::shared_lock lock(index_mutex_);
  if (!index_) throw UnavailableError("no reference index loaded");
  std::vector<Recommendation> out;
  for (const retrieval::Candidate& c : retrieval::recommend(L, *retrieval_encoder_, *index_, k, options_.rank)) {
    const Reference& r = references_.at(c.id);
    out.push_back({r.image_id, c.score, "/api/images/" + r.thumb_id + ".png"});
  }
  return out;
}

std::string Service::cache_key(const std::string& target_id, const std::string& reference_id) const {
  return sha256_hex(target_id + "|" + reference_id + "|" + weights_digest_ + "|" + match::config_digest(options_.match));
}

std::string Service::submit(const std::string& target_id, const std::string& reference_id) {
  if (!store_.contains(target_id)) throw NotFoundError("target image " + target_id + " not found");
  if (!store_.contains(reference_id)) throw NotFoundError("reference image " + reference_id + " not found");
  const std::string key = cache_key(target_id, reference_id);
  std::unique_lock lock(queue_mutex_);
  if (const auto hit = cache_.find(key); hit != cache_.end()) {
    return jobs_.create_done(target_id, reference_id, hit->second);
  }
  if (static_cast<int>(queue_.size()) >= options_.queue_depth) {
    throw UnavailableError("job queue full (" + std::to_string(options_.queue_depth) + ")");
  }
  const std::string id = jobs_.create(target_id, reference_id);
  queue_.push_back(id);
  lock.unlock();
  queue_cv_.notify_one();
  return id;
}

JobRecord Service::job(const std::string& id) const { return jobs_.get(id); }

void Service::wait_idle() {
  std::unique_lock lock(queue_mutex_);
  idle_cv_.wait(lock, [this] { return queue_.empty() && running_ == 0; });
}

void Service::worker_loop() {
  for (;;) {
    std::string id;
    {
      std::unique_lock lock(queue_mutex_);
      queue_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      id = queue_.front();
      queue_.pop_front();
      jobs_.start(id);
      ++running_;
    }
    run_job(id);
    {
      std::lock_guard lock(queue_mutex_);
      --running_;
    }
    idle_cv_.notify_all();
  }
}

void Service::run_job(const std::string& job_id) {
  const JobRecord job = jobs_.get(job_id);
  try {
    const image::LabImage target = image::rgb_to_lab(store_.decode(job.target_id));
    const image::LabImage reference = image::rgb_to_lab(store_.decode(job.reference_id));
    const image::LabImage out = colornet::colorize(target.L, reference, model_.matcher, options_.match, model_.net);
    const std::string result = store_.put(image::lab_to_rgb(out), ImageKind::kResult);
    {
      std::lock_guard lock(queue_mutex_);
      cache_.emplace(cache_key(job.target_id, job.reference_id), result);
    }
    jobs_.finish(job_id, result);
  } catch (const std::exception& e) {
    jobs_.fail(job_id, e.what());
  }
}

void Service::persist() const {
  const auto& dir = options_.state_dir;
  if (dir.empty()) throw ContractError("service: persist needs a state directory");
  store_.save();
  write_text(dir / "jobs.json", jobs_.to_json());
  json doc{{"cache", json::object()}, {"references", json::array()}};
  {
    std::lock_guard lock(queue_mutex_);
    for (const auto& [key, result] : cache_) doc["cache"][key] = result;
  }
  std::shared_lock lock(index_mutex_);
  for (const auto& [entry, r] : references_) {
    doc["references"].push_back({{"entry", entry}, {"image", r.image_id}, {"thumb", r.thumb_id}});
  }
  write_text(dir / "service.json", doc.dump(1) + "\n");
  if (index_) {
    index_->save(dir / "index.cwix");
    retrieval_encoder_->save(dir / "retrieval_encoder.cwts");
  }
}

}  // namespace chromatix::app
