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

#include "chromatix/http.hpp"

#include <charconv>

#include "httplib.h"
#include "json.hpp"

namespace chromatix::app {

using json = nlohmann::json;

namespace {

constexpr const char* kIndexPage =
    "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>chromatix</title></head>\n"
    "<body><h1>chromatix</h1><p>Web UI assets are not installed. The JSON API lives under /api/.</p></body></html>\n";

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, json{{"error", message}}, status);
}

// Maps library exceptions onto HTTP status codes.
template <typename F>
void guarded(httplib::Response& res, F&& body) {
  try {
    body();
  } catch (const NotFoundError& e) {
    send_error(res, 404, e.what());
  } catch (const UnavailableError& e) {
    send_error(res, 503, e.what());
  } catch (const ContractError& e) {
    send_error(res, 400, e.what());
  } catch (const LoadError& e) {
    send_error(res, 400, e.what());
  } catch (const json::exception& e) {
    send_error(res, 400, std::string("malformed JSON: ") + e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, std::string("internal: ") + e.what());
  }
}

json job_json(const JobRecord& r) {
  json j{{"state", state_name(r.state)}};
  if (r.state == JobState::kDone) j["result_id"] = r.result_id;
  if (r.state == JobState::kFailed) j["error"] = r.error;
  return j;
}

}  // namespace

struct HttpServer::Impl {
  Service& service;
  HttpOptions options;
  httplib::Server server;

  Impl(Service& s, HttpOptions o) : service(s), options(std::move(o)) { routes(); }

  void routes() {
    server.Post("/api/images", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto* p = reinterpret_cast<const std::uint8_t*>(req.body.data());
        send_json(res, json{{"image_id", service.put_image(std::span<const std::uint8_t>(p, req.body.size()))}});
      });
    });
    server.Get(R"(/api/recommendations/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        int k = 5;
        if (req.has_param("k")) {
          const std::string text = req.get_param_value("k");
          const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), k);
          if (ec != std::errc() || ptr != text.data() + text.size()) throw ContractError("k must be an integer");
        }
        json out = json::array();
        for (const Recommendation& r : service.recommend(req.matches[1], k)) {
          out.push_back({{"reference_id", r.reference_id}, {"score", r.score}, {"thumb", r.thumb}});
        }
        send_json(res, out);
      });
    });
    server.Post("/api/colorize", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json body = json::parse(req.body);
        const std::string id = service.submit(body.at("target_id").get<std::string>(),
                                              body.at("reference_id").get<std::string>());
        send_json(res, json{{"job_id", id}});
      });
    });
    server.Get(R"(/api/jobs/([A-Za-z0-9-]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, job_json(service.job(req.matches[1]))); });
    });
    server.Get(R"(/api/images/([0-9a-f]+)\.png)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::vector<std::uint8_t> bytes = service.image(req.matches[1]);
        res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
      });
    });
    if (!options.static_dir.empty()) {
      if (!server.set_mount_point("/", options.static_dir.string())) {
        throw ContractError("static directory " + options.static_dir.string() + " not found");
      }
    } else {
      server.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(kIndexPage, "text/html");
      });
    }
  }
};

HttpServer::HttpServer(Service& service, HttpOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw UnavailableError("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw UnavailableError("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace chromatix::app
