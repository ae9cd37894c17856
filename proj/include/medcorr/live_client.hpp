// Copyright 2026 The medcorr Authors.
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

// Live backend: POST {base_url}/chat/completions on an OpenAI-compatible
// server. 429 and 5xx responses are retried with capped exponential
// backoff; the request body is serialized once and sent unchanged on every
// attempt.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <functional>
#include <regex>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "medcorr/error.hpp"
#include "medcorr/gateway.hpp"

namespace medcorr {

struct LiveClientOptions {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::chrono::milliseconds timeout{120000};
  int max_attempts = 5;
  std::chrono::milliseconds backoff_initial{500};
  std::chrono::milliseconds backoff_cap{8000};
  // Replaced in tests to avoid real sleeping.
  std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  };
};

inline bool is_transient_status(int status) { return status == 429 || (status >= 500 && status <= 599); }

class LiveBackend : public LmBackend {
 public:
  explicit LiveBackend(LiveClientOptions options) : options_(std::move(options)) {
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(options_.base_url, m, url_re)) {
      throw ValidationError("live backend: base_url must look like http(s)://host[:port][/path]");
    }
    origin_ = m[1].str();
    path_prefix_ = m[2].str();
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    if (options_.max_attempts < 1) options_.max_attempts = 1;
  }

  LmResponse complete(const LmRequest& request) override {
    const std::string body = request_to_json(request).dump(
        -1, ' ', false, nlohmann::json::error_handler_t::replace);
    const std::string path = path_prefix_ + "/chat/completions";
    httplib::Headers headers;
    if (!options_.api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + options_.api_key);
    }

    std::chrono::milliseconds delay = options_.backoff_initial;
    std::string last_error;
    for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
      httplib::Client client(origin_);
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
      const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());
      auto res = client.Post(path, headers, body, "application/json");
      if (!res) {
        const auto err = res.error();
        if (err == httplib::Error::Read || err == httplib::Error::Write ||
            err == httplib::Error::ConnectionTimeout) {
          throw GatewayError("live backend: request to " + origin_ + path + " timed out (" +
                             httplib::to_string(err) + ")");
        }
        last_error = "transport error: " + httplib::to_string(err);
      } else if (res->status == 200) {
        return parse_body(res->body);
      } else if (!is_transient_status(res->status)) {
        throw GatewayError("live backend: HTTP " + std::to_string(res->status) + ": " +
                           excerpt(res->body));
      } else {
        last_error = "HTTP " + std::to_string(res->status) + ": " + excerpt(res->body);
      }
      if (attempt < options_.max_attempts) {
        options_.sleep(delay);
        delay = std::min(delay * 2, options_.backoff_cap);
      }
    }
    throw GatewayError("live backend: giving up after " + std::to_string(options_.max_attempts) +
                       " attempts; last " + last_error);
  }

  static std::string excerpt(const std::string& body) {
    return body.size() <= 200 ? body : body.substr(0, 200) + "...";
  }

 private:
  static LmResponse parse_body(const std::string& body) {
    try {
      const auto j = nlohmann::json::parse(body);
      LmResponse r;
      r.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
      if (j.contains("usage") && j["usage"].is_object()) {
        r.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
        r.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
      }
      r.backend = BackendTag::kLive;
      return r;
    } catch (const nlohmann::json::exception& e) {
      throw GatewayError(std::string("live backend: malformed response body: ") + e.what() +
                         ": " + excerpt(body));
    }
  }

  LiveClientOptions options_;
  std::string origin_;
  std::string path_prefix_;
};

}  // namespace medcorr
