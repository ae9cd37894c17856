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

// Engine configuration: one JSON document with four sections. Every key is
// optional; missing keys take the defaults below and unknown keys are
// rejected. MEDCORR_API_KEY and MEDCORR_BASE_URL override
// gateway.api_key and gateway.base_url.

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "medcorr/error.hpp"
#include "medcorr/text.hpp"

namespace medcorr {

struct GatewayConfig {
  std::string backend = "replay";  // live | replay | scripted
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::string model = "gpt-4-0125-preview";
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 4096;
  std::size_t concurrency = 4;
  std::string cache_path;
  std::string script_path;  // rule table for the scripted backend
  bool record = true;       // append non-replay responses to cache_path
  int max_attempts = 5;
  int timeout_seconds = 120;
};

struct PathsConfig {
  std::string datasets;
  std::string index;
  std::string compiled;
  std::string outputs;
};

struct OptimizeConfig {
  std::uint64_t seed = 0;
  std::size_t n_candidates = 16;
  std::size_t demos_per_stage = 20;
  std::size_t max_demos = 20;
  std::size_t instruction_proposals = 5;
  double pass_threshold_binary = 1.0;
  double pass_threshold_rouge_l = 0.8;
  std::string ms_optimizer = "random_search";  // random_search | mipro
  std::string uw_optimizer = "mipro";
};

struct PipelineConfig {
  std::string selector = "uw";  // ms | uw
  double gate_threshold = 0.7;
  bool ms_gate = false;
  bool strict = false;
};

struct EngineConfig {
  GatewayConfig gateway;
  PathsConfig paths;
  OptimizeConfig optimize;
  PipelineConfig pipeline;

  void validate() const {
    auto range = [](const char* key, double v, double lo, double hi) {
      if (!(v >= lo && v <= hi)) {
        throw ValidationError("config: " + std::string(key) + " = " + nlohmann::json(v).dump() +
                              " is outside [" + nlohmann::json(lo).dump() + ", " + nlohmann::json(hi).dump() + "]");
      }
    };
    auto oneof = [](const char* key, const std::string& v, std::set<std::string> allowed) {
      if (!allowed.contains(v)) throw ValidationError("config: " + std::string(key) + " has unknown value '" + v + "'");
    };
    oneof("gateway.backend", gateway.backend, {"live", "replay", "scripted"});
    range("gateway.temperature", gateway.temperature, 0.0, 2.0);
    range("gateway.top_p", gateway.top_p, 0.0, 1.0);
    if (gateway.max_tokens < 1) throw ValidationError("config: gateway.max_tokens must be >= 1");
    if (gateway.concurrency < 1) throw ValidationError("config: gateway.concurrency must be >= 1");
    if (gateway.max_attempts < 1) throw ValidationError("config: gateway.max_attempts must be >= 1");
    if (gateway.timeout_seconds < 1) throw ValidationError("config: gateway.timeout_seconds must be >= 1");
    if (optimize.n_candidates < 1) throw ValidationError("config: optimize.n_candidates must be >= 1");
    if (optimize.max_demos < 1) throw ValidationError("config: optimize.max_demos must be >= 1");
    if (optimize.demos_per_stage < 1 || optimize.demos_per_stage > optimize.max_demos) {
      throw ValidationError("config: optimize.demos_per_stage must be in [1, max_demos]");
    }
    if (optimize.instruction_proposals < 1) {
      throw ValidationError("config: optimize.instruction_proposals must be >= 1");
    }
    range("optimize.pass_threshold_binary", optimize.pass_threshold_binary, 0.0, 1.0);
    range("optimize.pass_threshold_rouge_l", optimize.pass_threshold_rouge_l, 0.0, 1.0);
    oneof("optimize.ms_optimizer", optimize.ms_optimizer, {"random_search", "mipro"});
    oneof("optimize.uw_optimizer", optimize.uw_optimizer, {"random_search", "mipro"});
    oneof("pipeline.selector", pipeline.selector, {"ms", "uw"});
    range("pipeline.gate_threshold", pipeline.gate_threshold, 0.0, 1.0);
  }
};

using Environment = std::map<std::string, std::string>;

namespace detail {

class SectionReader {
 public:
  SectionReader(const nlohmann::json& root, std::string section) : section_(std::move(section)) {
    if (!root.contains(section_)) return;
    obj_ = &root.at(section_);
    if (!obj_->is_object()) throw ValidationError("config: section '" + section_ + "' must be an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (obj_ == nullptr || !obj_->contains(key)) return;
    try {
      out = obj_->at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ValidationError("config: " + section_ + "." + key + " has the wrong type");
    }
  }

  void reject_unknown() const {
    if (obj_ == nullptr) return;
    for (const auto& [k, _] : obj_->items()) {
      if (!seen_.contains(k)) throw ValidationError("config: unknown key '" + section_ + "." + k + "'");
    }
  }

 private:
  std::string section_;
  const nlohmann::json* obj_ = nullptr;
  std::set<std::string> seen_;
};

}  // namespace detail

inline EngineConfig parse_config(std::string_view text, const Environment& env = {}) {
  EngineConfig c;
  nlohmann::json root = nlohmann::json::object();
  if (!is_blank(text)) {
    try {
      root = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("config: not valid JSON: ") + e.what());
    }
  }
  if (!root.is_object()) throw ValidationError("config: top level must be an object");
  for (const auto& [k, _] : root.items()) {
    if (k != "gateway" && k != "paths" && k != "optimize" && k != "pipeline") {
      throw ValidationError("config: unknown key '" + k + "'");
    }
  }

  detail::SectionReader g(root, "gateway");
  g.read("backend", c.gateway.backend);
  g.read("base_url", c.gateway.base_url);
  g.read("api_key", c.gateway.api_key);
  g.read("model", c.gateway.model);
  g.read("temperature", c.gateway.temperature);
  g.read("top_p", c.gateway.top_p);
  g.read("max_tokens", c.gateway.max_tokens);
  g.read("concurrency", c.gateway.concurrency);
  g.read("cache_path", c.gateway.cache_path);
  g.read("script_path", c.gateway.script_path);
  g.read("record", c.gateway.record);
  g.read("max_attempts", c.gateway.max_attempts);
  g.read("timeout_seconds", c.gateway.timeout_seconds);
  g.reject_unknown();

  detail::SectionReader p(root, "paths");
  p.read("datasets", c.paths.datasets);
  p.read("index", c.paths.index);
  p.read("compiled", c.paths.compiled);
  p.read("outputs", c.paths.outputs);
  p.reject_unknown();

  detail::SectionReader o(root, "optimize");
  o.read("seed", c.optimize.seed);
  o.read("n_candidates", c.optimize.n_candidates);
  o.read("demos_per_stage", c.optimize.demos_per_stage);
  o.read("max_demos", c.optimize.max_demos);
  o.read("instruction_proposals", c.optimize.instruction_proposals);
  o.read("pass_threshold_binary", c.optimize.pass_threshold_binary);
  o.read("pass_threshold_rouge_l", c.optimize.pass_threshold_rouge_l);
  o.read("ms_optimizer", c.optimize.ms_optimizer);
  o.read("uw_optimizer", c.optimize.uw_optimizer);
  o.reject_unknown();

  detail::SectionReader l(root, "pipeline");
  l.read("selector", c.pipeline.selector);
  l.read("gate_threshold", c.pipeline.gate_threshold);
  l.read("ms_gate", c.pipeline.ms_gate);
  l.read("strict", c.pipeline.strict);
  l.reject_unknown();

  if (auto it = env.find("MEDCORR_API_KEY"); it != env.end()) c.gateway.api_key = it->second;
  if (auto it = env.find("MEDCORR_BASE_URL"); it != env.end()) c.gateway.base_url = it->second;
  c.validate();
  return c;
}

inline EngineConfig load_config(const std::string& path, const Environment& env = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("config: cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), env);
}

}  // namespace medcorr
