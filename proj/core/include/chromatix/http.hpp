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

#include <filesystem>
#include <memory>
#include <string>

#include "chromatix/app.hpp"

namespace chromatix::app {

struct HttpOptions {
  /// Directory served under GET /; empty serves a built-in page.
  std::filesystem::path static_dir;
};

/// JSON API over a Service:
///   POST /api/images                      raw PNG body -> {"image_id"}
///   GET  /api/recommendations/{id}?k=K    -> [{"reference_id", "score", "thumb"}]
///   POST /api/colorize                    {"target_id", "reference_id"} -> {"job_id"}
///   GET  /api/jobs/{id}                   -> {"state", "result_id"?, "error"?}
///   GET  /api/images/{id}.png             PNG bytes
/// Errors carry {"error": message} with 400, 404, 503 or 500.
class HttpServer {
 public:
  HttpServer(Service& service, HttpOptions options = {});
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds and returns the port; port 0 picks a free one.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace chromatix::app
