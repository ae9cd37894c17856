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

// Uniform completion interface over three backends: live HTTP against an
// OpenAI-compatible chat API, a content-addressed record/replay cache, and a
// scripted mock. Pipelines talk only to Gateway.

#include <openssl/evp.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcorr/error.hpp"
#include "medcorr/text.hpp"

namespace medcorr {

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;
  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct LmRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 4096;

  void validate() const {
    if (messages.empty()) throw ValidationError("lm request: messages are empty");
    if (max_tokens < 1) throw ValidationError("lm request: max_tokens must be >= 1");
    if (temperature < 0.0) throw ValidationError("lm request: temperature must be >= 0");
    for (const auto& m : messages) {
      if (m.role != "system" && m.role != "user" && m.role != "assistant") {
        throw ValidationError("lm request: unknown role '" + m.role + "'");
      }
    }
  }

  friend bool operator==(const LmRequest&, const LmRequest&) = default;
};

enum class BackendTag { kLive, kReplay, kScripted };

inline std::string_view to_string(BackendTag t) {
  switch (t) {
    case BackendTag::kLive: return "live";
    case BackendTag::kReplay: return "replay";
    case BackendTag::kScripted: return "scripted";
  }
  return "unknown";
}

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct LmResponse {
  std::string text;
  Usage usage;
  BackendTag backend = BackendTag::kScripted;
};

/// Generation settings stamped on every request a program issues.
struct GenerationSettings {
  std::string model = "gpt-4-0125-preview";
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 4096;
};

// ---------------------------------------------------------------------------
// Canonical form and cache keys

inline nlohmann::json request_to_json(const LmRequest& r) {
  // nlohmann::json objects are std::map backed, so dump() sorts keys.
  nlohmann::json j;
  j["model"] = r.model;
  j["temperature"] = r.temperature;
  j["top_p"] = r.top_p;
  j["max_tokens"] = r.max_tokens;
  j["messages"] = nlohmann::json::array();
  for (const auto& m : r.messages) {
    j["messages"].push_back({{"role", m.role}, {"content", m.content}});
  }
  return j;
}

inline LmRequest request_from_json(const nlohmann::json& j) {
  LmRequest r;
  r.model = j.at("model").get<std::string>();
  r.temperature = j.at("temperature").get<double>();
  r.top_p = j.at("top_p").get<double>();
  r.max_tokens = j.at("max_tokens").get<int>();
  for (const auto& m : j.at("messages")) {
    r.messages.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
  }
  return r;
}

/// Sorted top-level keys, messages in order, compact separators, raw UTF-8.
inline std::string canonical_serialization(const LmRequest& r) {
  return request_to_json(r).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 digest failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0x0F]);
  }
  return out;
}

inline std::string canonical_key(const LmRequest& r) {
  return sha256_hex(canonical_serialization(r));
}

// ---------------------------------------------------------------------------
// Replay cache

struct CacheEntry {
  std::string key;
  LmRequest request;
  LmResponse response;
};

/// Append-only json-lines store: {"key", "request", "response"} per line.
/// Lookups may run concurrently; appends are serialized.
class ReplayCache {
 public:
  ReplayCache() = default;
  explicit ReplayCache(std::string path) : path_(std::move(path)) { load(); }

  std::optional<LmResponse> find(const std::string& key) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second.response;
  }

  bool contains(const std::string& key) const {
    std::shared_lock lock(mu_);
    return entries_.contains(key);
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
  }

  /// Adds an entry; repeated keys are ignored so the file never holds
  /// duplicates.
  void append(const LmRequest& request, const LmResponse& response) {
    CacheEntry e{canonical_key(request), request, response};
    std::unique_lock lock(mu_);
    if (entries_.contains(e.key)) return;
    if (!path_.empty()) {
      std::ofstream out(path_, std::ios::app | std::ios::binary);
      if (!out) throw GatewayError("cannot append to cache file " + path_);
      out << entry_to_json(e).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace)
          << '\n';
      out.flush();
    }
    entries_.emplace(e.key, std::move(e));
  }

  static nlohmann::json entry_to_json(const CacheEntry& e) {
    nlohmann::json j;
    j["key"] = e.key;
    j["request"] = request_to_json(e.request);
    j["response"] = {{"text", e.response.text},
                     {"usage",
                      {{"prompt_tokens", e.response.usage.prompt_tokens},
                       {"completion_tokens", e.response.usage.completion_tokens}}}};
    return j;
  }

  const std::string& path() const { return path_; }

 private:
  void load() {
    std::ifstream in(path_, std::ios::binary);
    if (!in) return;  // a missing file is an empty cache
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (is_blank(line)) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        CacheEntry e;
        e.key = j.at("key").get<std::string>();
        e.request = request_from_json(j.at("request"));
        e.response.text = j.at("response").at("text").get<std::string>();
        if (j["response"].contains("usage")) {
          const auto& u = j["response"]["usage"];
          e.response.usage.prompt_tokens = u.value("prompt_tokens", 0);
          e.response.usage.completion_tokens = u.value("completion_tokens", 0);
        }
        e.response.backend = BackendTag::kReplay;
        if (canonical_key(e.request) != e.key) {
          throw ValidationError("cache " + path_ + " line " + std::to_string(n) +
                                ": key does not match its request");
        }
        entries_.emplace(e.key, std::move(e));
      } catch (const nlohmann::json::exception& ex) {
        throw ValidationError("cache " + path_ + " line " + std::to_string(n) + ": " + ex.what());
      }
    }
  }

  std::string path_;
  mutable std::shared_mutex mu_;
  std::map<std::string, CacheEntry> entries_;
};

// ---------------------------------------------------------------------------
// Backends

class LmBackend {
 public:
  virtual ~LmBackend() = default;
  virtual LmResponse complete(const LmRequest& request) = 0;
};

/// Responses are a pure function of request content, so results do not
/// depend on call order or thread interleaving.
class ScriptedBackend : public LmBackend {
 public:
  using Responder = std::function<std::string(const LmRequest&)>;

  explicit ScriptedBackend(Responder responder) : responder_(std::move(responder)) {}

  /// Rule table: {"rules": [{"contains": [..], "scope": "all"|"tail",
  /// "response": str}], "default": str}. The first rule whose substrings
  /// all occur wins. "tail" restricts matching to the text after the last
  /// "---" line of the final message, i.e. the live inputs of a rendered
  /// program prompt.
  static std::unique_ptr<ScriptedBackend> from_rules(const nlohmann::json& spec) {
    struct Rule {
      std::vector<std::string> contains;
      bool tail = false;
      std::string response;
    };
    std::vector<Rule> rules;
    try {
      for (const auto& r : spec.at("rules")) {
        Rule rule;
        rule.contains = r.at("contains").get<std::vector<std::string>>();
        rule.tail = r.value("scope", std::string("all")) == "tail";
        rule.response = r.at("response").get<std::string>();
        rules.push_back(std::move(rule));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("scripted rules: ") + e.what());
    }
    std::optional<std::string> fallback;
    if (spec.contains("default")) fallback = spec["default"].get<std::string>();
    return std::make_unique<ScriptedBackend>([rules, fallback](const LmRequest& req) {
      std::string all;
      for (const auto& m : req.messages) {
        all += m.content;
        all.push_back('\n');
      }
      const std::string& last = req.messages.back().content;
      const auto cut = last.rfind("\n---\n");
      const std::string tail = cut == std::string::npos ? last : last.substr(cut + 5);
      for (const auto& rule : rules) {
        const std::string& hay = rule.tail ? tail : all;
        bool ok = true;
        for (const auto& needle : rule.contains) {
          if (hay.find(needle) == std::string::npos) {
            ok = false;
            break;
          }
        }
        if (ok) return rule.response;
      }
      if (fallback) return *fallback;
      throw GatewayError("scripted backend: no rule matches request " + canonical_key(req));
    });
  }

  LmResponse complete(const LmRequest& request) override {
    LmResponse r;
    r.text = responder_(request);
    for (const auto& m : request.messages) {
      r.usage.prompt_tokens += static_cast<std::int64_t>(tokenize(m.content).size());
    }
    r.usage.completion_tokens = static_cast<std::int64_t>(tokenize(r.text).size());
    r.backend = BackendTag::kScripted;
    return r;
  }

 private:
  Responder responder_;
};

class ReplayBackend : public LmBackend {
 public:
  explicit ReplayBackend(std::shared_ptr<const ReplayCache> cache) : cache_(std::move(cache)) {}

  LmResponse complete(const LmRequest& request) override {
    const std::string key = canonical_key(request);
    auto hit = cache_->find(key);
    if (!hit) throw CacheMissError(key);
    hit->backend = BackendTag::kReplay;
    return *hit;
  }

 private:
  std::shared_ptr<const ReplayCache> cache_;
};

// ---------------------------------------------------------------------------
// Gateway

/// Counting semaphore that admits waiters strictly in arrival order.
class FifoSlots {
 public:
  explicit FifoSlots(std::size_t limit) : limit_(limit == 0 ? 1 : limit) {}

  void acquire() {
    std::unique_lock lock(mu_);
    const std::uint64_t ticket = next_ticket_++;
    cv_.wait(lock, [&] { return ticket == serving_ && in_flight_ < limit_; });
    ++serving_;
    ++in_flight_;
    cv_.notify_all();
  }

  void release() {
    {
      std::lock_guard lock(mu_);
      --in_flight_;
    }
    cv_.notify_all();
  }

  std::size_t limit() const { return limit_; }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t limit_;
  std::size_t in_flight_ = 0;
  std::uint64_t next_ticket_ = 0;
  std::uint64_t serving_ = 0;
};

struct GatewayOptions {
  std::size_t concurrency = 4;
  GenerationSettings generation;
};

class Gateway {
 public:
  /// record_to, when set, receives every non-replay response.
  Gateway(std::unique_ptr<LmBackend> backend, GatewayOptions options = {},
          std::shared_ptr<ReplayCache> record_to = nullptr)
      : backend_(std::move(backend)),
        options_(std::move(options)),
        slots_(options_.concurrency),
        record_to_(std::move(record_to)) {}

  LmResponse complete(const LmRequest& request) {
    request.validate();
    slots_.acquire();
    struct Release {
      FifoSlots& s;
      ~Release() { s.release(); }
    } release{slots_};
    ++calls_;
    LmResponse r = backend_->complete(request);
    if (record_to_ && r.backend != BackendTag::kReplay) record_to_->append(request, r);
    return r;
  }

  LmRequest make_request(std::vector<ChatMessage> messages) const {
    LmRequest r;
    r.model = options_.generation.model;
    r.temperature = options_.generation.temperature;
    r.top_p = options_.generation.top_p;
    r.max_tokens = options_.generation.max_tokens;
    r.messages = std::move(messages);
    return r;
  }

  const GatewayOptions& options() const { return options_; }
  std::size_t calls() const { return calls_.load(); }

 private:
  std::unique_ptr<LmBackend> backend_;
  GatewayOptions options_;
  FifoSlots slots_;
  std::shared_ptr<ReplayCache> record_to_;
  std::atomic<std::size_t> calls_{0};
};

inline std::unique_ptr<Gateway> make_scripted_gateway(ScriptedBackend::Responder fn,
                                                      GatewayOptions options = {}) {
  return std::make_unique<Gateway>(std::make_unique<ScriptedBackend>(std::move(fn)),
                                   std::move(options));
}

}  // namespace medcorr
