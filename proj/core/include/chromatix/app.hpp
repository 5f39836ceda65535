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

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "chromatix/colornet.hpp"
#include "chromatix/retrieval.hpp"

namespace chromatix::app {

// --- image store ------------------------------------------------------------

enum class ImageKind { kUpload, kReference, kThumbnail, kResult };

const char* kind_name(ImageKind kind);
ImageKind parse_kind(std::string_view name);

struct ImageMeta {
  std::string id;
  int width = 0;
  int height = 0;
  ImageKind kind = ImageKind::kUpload;

  friend bool operator==(const ImageMeta&, const ImageMeta&) = default;
};

/// Content-addressed PNG blobs; id = SHA-256 hex of the bytes. With a
/// directory, blobs live in DIR/blobs/<id>.png and metadata in DIR/images.json.
class ImageStore {
 public:
  explicit ImageStore(std::filesystem::path dir = {});

  /// Reads images.json from the directory and re-hashes every blob. Missing
  /// or altered blobs raise CorruptionError listing their ids.
  void load();

  /// Stores PNG bytes; non-PNG input is a ContractError. Re-putting existing
  /// bytes returns the same id and keeps the first kind.
  std::string put(std::span<const std::uint8_t> png, ImageKind kind);
  std::string put(const image::RgbImage& img, ImageKind kind);

  /// Throws NotFoundError for unknown ids.
  std::vector<std::uint8_t> get(const std::string& id) const;
  image::RgbImage decode(const std::string& id) const;
  std::optional<ImageMeta> meta(const std::string& id) const;
  bool contains(const std::string& id) const;
  std::size_t size() const;

  /// Writes images.json; blobs are written by put.
  void save() const;

 private:
  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, ImageMeta> meta_;
  std::map<std::string, std::vector<std::uint8_t>> memory_;  // used without a directory
};

// --- jobs -------------------------------------------------------------------

enum class JobState { kQueued, kRunning, kDone, kFailed };

const char* state_name(JobState state);
JobState parse_state(std::string_view name);

struct JobRecord {
  std::string id;
  std::string target_id;
  std::string reference_id;
  JobState state = JobState::kQueued;
  std::string result_id;  // set iff done
  std::string error;      // set iff failed
  std::int64_t created_ms = 0;
  std::int64_t updated_ms = 0;

  friend bool operator==(const JobRecord&, const JobRecord&) = default;
};

/// Thread-safe job registry. Ids are "job-" plus a zero-padded sequence
/// number. Illegal transitions raise ContractError.
class JobTable {
 public:
  std::string create(const std::string& target_id, const std::string& reference_id);
  /// A job born done, used for result-cache hits.
  std::string create_done(const std::string& target_id, const std::string& reference_id,
                          const std::string& result_id);
  void start(const std::string& id);
  void finish(const std::string& id, const std::string& result_id);
  void fail(const std::string& id, const std::string& error);
  /// running -> queued, used when restoring after an interrupted run.
  void requeue(const std::string& id);

  JobRecord get(const std::string& id) const;  // NotFoundError when absent
  std::vector<JobRecord> all() const;
  std::size_t size() const;

  std::string to_json() const;
  /// Replaces the contents; LoadError on malformed input.
  void load_json(std::string_view text);

 private:
  std::string insert(JobRecord record);
  JobRecord& at(const std::string& id);

  mutable std::mutex mutex_;
  std::map<std::string, JobRecord> jobs_;
  std::uint64_t next_ = 1;
};

// --- service ----------------------------------------------------------------

struct ServiceOptions {
  int workers = 2;
  int queue_depth = 64;  // queued jobs beyond this are refused
  int thumbnail_edge = 128;
  match::MatchConfig match;
  retrieval::RankOptions rank;
  std::filesystem::path state_dir;  // empty keeps everything in memory
};

struct Recommendation {
  std::string reference_id;
  double score = 0.0;
  std::string thumb;  // URL path of the thumbnail PNG

  friend bool operator==(const Recommendation&, const Recommendation&) = default;
};

/// Binds store, jobs, index and model. Colorization jobs run FIFO on a
/// bounded worker pool; recommendation never waits on them.
class Service {
 public:
  /// Restores persisted state from options.state_dir when present.
  Service(colornet::ColorizationModel model, ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Imports every indexed reference image into the store and renders its
  /// thumbnail. Entries whose image cannot be read are left out.
  void attach_index(retrieval::ReferenceIndex index, encoder::Encoder retrieval_encoder);
  bool has_index() const;

  std::string put_image(std::span<const std::uint8_t> png);
  std::vector<std::uint8_t> image(const std::string& id) const;

  /// UnavailableError without an index; NotFoundError for unknown ids.
  std::vector<Recommendation> recommend(const std::string& image_id, int k) const;

  /// NotFoundError for unknown ids (no job is created); UnavailableError
  /// when the queue is full.
  std::string submit(const std::string& target_id, const std::string& reference_id);
  JobRecord job(const std::string& id) const;

  /// Blocks until no job is queued or running.
  void wait_idle();

  /// Writes store metadata, jobs, result cache and the index to state_dir.
  void persist() const;

  const ImageStore& store() const noexcept { return store_; }
  const JobTable& jobs() const noexcept { return jobs_; }
  /// Store id of an index entry's image, empty when not imported.
  std::string reference_id(std::uint32_t entry_id) const;

 private:
  struct Reference {
    std::string image_id;
    std::string thumb_id;
  };

  void restore();
  void worker_loop();
  void run_job(const std::string& job_id);
  std::string cache_key(const std::string& target_id, const std::string& reference_id) const;

  colornet::ColorizationModel model_;
  ServiceOptions options_;
  std::string weights_digest_;
  ImageStore store_;
  JobTable jobs_;

  mutable std::shared_mutex index_mutex_;
  std::optional<retrieval::ReferenceIndex> index_;
  std::optional<encoder::Encoder> retrieval_encoder_;
  std::map<std::uint32_t, Reference> references_;

  mutable std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::condition_variable idle_cv_;
  std::deque<std::string> queue_;
  std::map<std::string, std::string> cache_;  // cache key -> result id, guarded by queue_mutex_
  int running_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

}  // namespace chromatix::app
