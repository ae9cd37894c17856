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

// A small declarative LLM-program layer: typed signatures, Predict and
// chain-of-thought strategies, deterministic few-shot prompt rendering and
// labeled-field completion parsing.
//
// Rendered layout. The system message is the instruction block:
//
//   <instruction>
//
//   Respond with these fields, each on its own line after its label:
//   Rationale: <description>            (chain-of-thought only)
//   <Output Label>: <description>
//
// The user message is the demo blocks followed by the live block, joined by
// "\n\n---\n\n". A demo block is one "Label: value" line per input field and
// then per output field (rationale first). The live block is the input
// lines, a blank line, then each output label with nothing after the colon.

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcorr/error.hpp"
#include "medcorr/gateway.hpp"
#include "medcorr/text.hpp"

namespace medcorr {

inline constexpr std::string_view kRationaleField = "rationale";
inline constexpr std::string_view kRationaleDescription =
    "step-by-step reasoning that leads to the answer";
inline constexpr std::size_t kDefaultMaxDemos = 20;

using FieldMap = std::map<std::string, std::string>;

struct Field {
  std::string name;
  std::string description;
  friend bool operator==(const Field&, const Field&) = default;
};

struct Signature {
  std::string name;
  std::string instruction;
  std::vector<Field> inputs;
  std::vector<Field> outputs;

  void validate() const {
    auto fail = [&](const std::string& what) {
      throw ValidationError("signature '" + name + "': " + what);
    };
    if (inputs.empty()) fail("needs at least one input field");
    if (outputs.empty()) fail("needs at least one output field");
    std::set<std::string> seen;
    for (const auto* list : {&inputs, &outputs}) {
      for (const auto& f : *list) {
        if (f.name.empty() || !std::islower(static_cast<unsigned char>(f.name[0])) ||
            !std::all_of(f.name.begin(), f.name.end(), [](char c) {
              return std::islower(static_cast<unsigned char>(c)) ||
                     std::isdigit(static_cast<unsigned char>(c)) || c == '_';
            })) {
          fail("field name '" + f.name + "' must be snake_case");
        }
        if (f.name == kRationaleField) fail("'rationale' is reserved for chain-of-thought");
        if (!seen.insert(f.name).second) fail("duplicate field '" + f.name + "'");
      }
    }
  }

  friend bool operator==(const Signature&, const Signature&) = default;
};

enum class Strategy { kPredict, kChainOfThought };

inline std::string_view to_string(Strategy s) {
  return s == Strategy::kPredict ? "predict" : "chain-of-thought";
}

inline Strategy strategy_from_string(std::string_view s) {
  if (s == "predict") return Strategy::kPredict;
  if (s == "chain-of-thought") return Strategy::kChainOfThought;
  throw ValidationError("unknown strategy '" + std::string(s) + "'");
}

struct Demo {
  FieldMap inputs;
  FieldMap outputs;  // may hold "rationale"
  std::string source_id;  // training record the demo was bootstrapped from
  friend bool operator==(const Demo&, const Demo&) = default;
};

/// "clinical_text" -> "Clinical Text"
inline std::string field_label(std::string_view name) {
  std::string out;
  bool start = true;
  for (char c : name) {
    if (c == '_') {
      out.push_back(' ');
      start = true;
    } else {
      out.push_back(start ? static_cast<char>(std::toupper(static_cast<unsigned char>(c))) : c);
      start = false;
    }
  }
  return out;
}

struct Program {
  static constexpr int kFormatVersion = 1;

  Signature signature;
  Strategy strategy = Strategy::kPredict;
  std::vector<Demo> demos;
  std::optional<std::string> compiled_instruction;
  std::size_t max_demos = kDefaultMaxDemos;

  const std::string& instruction() const {
    return compiled_instruction ? *compiled_instruction : signature.instruction;
  }

  /// Output fields in render/parse order; CoT puts rationale first.
  std::vector<Field> output_fields() const {
    std::vector<Field> out;
    if (strategy == Strategy::kChainOfThought) {
      out.push_back({std::string(kRationaleField), std::string(kRationaleDescription)});
    }
    out.insert(out.end(), signature.outputs.begin(), signature.outputs.end());
    return out;
  }

  void validate() const {
    signature.validate();
    if (demos.size() > max_demos) {
      throw ValidationError("program '" + signature.name + "': " + std::to_string(demos.size()) +
                            " demos exceed the maximum of " + std::to_string(max_demos));
    }
    std::set<std::string> in_names, out_names;
    for (const auto& f : signature.inputs) in_names.insert(f.name);
    for (const auto& f : output_fields()) out_names.insert(f.name);
    for (const auto& d : demos) {
      for (const auto& n : in_names) {
        if (!d.inputs.contains(n)) {
          throw ValidationError("program '" + signature.name + "': demo lacks input '" + n + "'");
        }
      }
      for (const auto& [k, _] : d.inputs) {
        if (!in_names.contains(k)) {
          throw ValidationError("program '" + signature.name + "': demo has unknown input '" + k + "'");
        }
      }
      for (const auto& [k, _] : d.outputs) {
        if (!out_names.contains(k)) {
          throw ValidationError("program '" + signature.name + "': demo has unknown output '" + k + "'");
        }
      }
    }
  }

  friend bool operator==(const Program&, const Program&) = default;
};

// ---------------------------------------------------------------------------
// Rendering

inline std::string instruction_block(const Program& p) {
  std::string s = p.instruction();
  s += "\n\nRespond with these fields, each on its own line after its label:";
  for (const auto& f : p.output_fields()) {
    s += "\n";
    s += field_label(f.name);
    s += ": ";
    s += f.description;
  }
  return s;
}

inline std::string render_demo(const Program& p, const Demo& d) {
  std::string s;
  auto line = [&](const std::string& name, const std::string& value) {
    if (!s.empty()) s.push_back('\n');
    s += field_label(name);
    s += ": ";
    s += value;
  };
  for (const auto& f : p.signature.inputs) {
    if (auto it = d.inputs.find(f.name); it != d.inputs.end()) line(f.name, it->second);
  }
  for (const auto& f : p.output_fields()) {
    if (auto it = d.outputs.find(f.name); it != d.outputs.end()) line(f.name, it->second);
  }
  return s;
}

inline constexpr std::string_view kSegmentSeparator = "\n\n---\n\n";

inline std::vector<ChatMessage> render_prompt(const Program& p, const FieldMap& inputs) {
  std::string live;
  for (const auto& f : p.signature.inputs) {
    auto it = inputs.find(f.name);
    if (it == inputs.end()) {
      throw ValidationError("program '" + p.signature.name + "': missing input field '" + f.name + "'");
    }
    if (!live.empty()) live.push_back('\n');
    live += field_label(f.name);
    live += ": ";
    live += it->second;
  }
  live += "\n";
  for (const auto& f : p.output_fields()) {
    live += "\n";
    live += field_label(f.name);
    live += ":";
  }
  std::string user;
  for (const auto& d : p.demos) {
    user += render_demo(p, d);
    user += kSegmentSeparator;
  }
  user += live;
  return {{"system", instruction_block(p)}, {"user", std::move(user)}};
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

// Matches "<label>:" at the start of a line, case-insensitively, tolerating
// leading whitespace and markdown bold around the label. Returns the offset
// just past the colon.
inline std::optional<std::size_t> match_label(std::string_view line, std::string_view label) {
  std::size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  bool bold = false;
  if (line.substr(i, 2) == "**") {
    bold = true;
    i += 2;
  }
  if (line.size() - i < label.size()) return std::nullopt;
  for (std::size_t k = 0; k < label.size(); ++k) {
    const auto a = static_cast<unsigned char>(line[i + k]);
    const auto b = static_cast<unsigned char>(label[k]);
    if (std::tolower(a) != std::tolower(b)) return std::nullopt;
  }
  i += label.size();
  if (bold && line.substr(i, 2) == "**") i += 2;
  while (i < line.size() && line[i] == ' ') ++i;
  if (i < line.size() && line[i] == ':') {
    ++i;
    if (bold && line.substr(i, 2) == "**") i += 2;
    return i;
  }
  return std::nullopt;
}

}  // namespace detail

/// Extracts every expected output field from "Label: value" segments. A
/// segment runs until the next expected label; the last segment stops at
/// its first blank line so trailing prose is dropped. For chain-of-thought,
/// unlabeled text before the first label stands in for a missing rationale.
inline FieldMap parse_completion(const Program& p, std::string_view text) {
  const auto fields = p.output_fields();
  struct Segment {
    std::string name;
    std::string value;
  };
  std::vector<Segment> segments;
  std::string preamble;
  std::set<std::string> seen;
  bool discarding = false;  // inside a repeated label's segment

  std::size_t start = 0;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    const Field* hit = nullptr;
    std::size_t value_at = 0;
    for (const auto& f : fields) {
      const std::string label = field_label(f.name);
      if (auto pos = detail::match_label(line, label)) {
        if (hit == nullptr || label.size() > field_label(hit->name).size()) {
          hit = &f;
          value_at = *pos;
        }
      }
    }
    if (hit != nullptr) {
      if (seen.insert(hit->name).second) {
        segments.push_back({hit->name, std::string(line.substr(value_at))});
        discarding = false;
      } else {
        discarding = true;
      }
    } else if (!discarding) {
      if (segments.empty()) {
        preamble += line;
        preamble.push_back('\n');
      } else {
        segments.back().value.push_back('\n');
        segments.back().value += line;
      }
    }
    if (nl == text.size()) break;
    start = nl + 1;
  }

  if (!segments.empty()) {
    std::string& last = segments.back().value;
    last = std::string(trim(last));
    std::string cleaned;
    std::size_t s = 0;
    while (s <= last.size()) {
      auto e = last.find('\n', s);
      if (e == std::string::npos) e = last.size();
      std::string_view ln(last.data() + s, e - s);
      if (!cleaned.empty() && is_blank(ln)) break;
      if (!cleaned.empty()) cleaned.push_back('\n');
      cleaned += ln;
      if (e == last.size()) break;
      s = e + 1;
    }
    last = cleaned;
  }

  FieldMap out;
  for (const auto& seg : segments) {
    std::string v(trim(seg.value));
    if (!v.empty()) out.emplace(seg.name, std::move(v));
  }
  if (p.strategy == Strategy::kChainOfThought && !out.contains(std::string(kRationaleField))) {
    std::string pre(trim(preamble));
    if (!pre.empty()) out.emplace(std::string(kRationaleField), std::move(pre));
  }

  std::vector<std::string> missing;
  for (const auto& f : fields) {
    if (!out.contains(f.name)) missing.push_back(f.name);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw ParseError("completion is missing output field(s): " + list, std::string(text));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Execution

struct CallRecord {
  LmRequest request;
  std::string completion;
};

struct RunResult {
  FieldMap outputs;
  std::string raw;  // completion that parsed
  int attempts = 0;
  std::vector<CallRecord> calls;
};

inline std::string retry_reminder(const Program& p) {
  std::string s = "\n\nReminder: reply with every one of these labeled fields:";
  for (const auto& f : p.output_fields()) {
    s += " ";
    s += field_label(f.name);
    s += ":";
  }
  return s;
}

/// render -> complete -> parse. A parse failure triggers exactly one retry
/// with a reminder line listing the required labels.
inline RunResult run(const Program& p, const FieldMap& inputs, Gateway& gateway) {
  RunResult result;
  auto messages = render_prompt(p, inputs);
  for (int attempt = 1; attempt <= 2; ++attempt) {
    if (attempt == 2) messages.back().content += retry_reminder(p);
    const LmRequest req = gateway.make_request(messages);
    const LmResponse resp = gateway.complete(req);
    result.calls.push_back({req, resp.text});
    result.attempts = attempt;
    try {
      result.outputs = parse_completion(p, resp.text);
      result.raw = resp.text;
      return result;
    } catch (const ParseError& e) {
      if (attempt == 2) {
        throw ParseError(std::string(e.what()) + " (after 2 attempts)", resp.text);
      }
    }
  }
  return result;  // unreachable
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json to_json(const Program& p) {
  nlohmann::ordered_json j;
  j["format_version"] = Program::kFormatVersion;
  nlohmann::ordered_json sig;
  sig["name"] = p.signature.name;
  sig["instruction"] = p.signature.instruction;
  for (const auto* key : {"inputs", "outputs"}) {
    const auto& list = std::string_view(key) == "inputs" ? p.signature.inputs : p.signature.outputs;
    sig[key] = nlohmann::ordered_json::array();
    for (const auto& f : list) sig[key].push_back({{"name", f.name}, {"description", f.description}});
  }
  j["signature"] = std::move(sig);
  j["strategy"] = to_string(p.strategy);
  j["instruction_override"] =
      p.compiled_instruction ? nlohmann::ordered_json(*p.compiled_instruction) : nlohmann::ordered_json();
  j["max_demos"] = p.max_demos;
  j["demos"] = nlohmann::ordered_json::array();
  for (const auto& d : p.demos) {
    nlohmann::ordered_json dj;
    dj["source_id"] = d.source_id;
    dj["inputs"] = d.inputs;
    dj["outputs"] = d.outputs;
    j["demos"].push_back(std::move(dj));
  }
  return j;
}

template <class Json>
Program program_from_json(const Json& j) {
  try {
    if (j.at("format_version").template get<int>() != Program::kFormatVersion) {
      throw ValidationError("program: unsupported format_version");
    }
    Program p;
    const auto& sig = j.at("signature");
    p.signature.name = sig.at("name").template get<std::string>();
    p.signature.instruction = sig.at("instruction").template get<std::string>();
    for (const auto& f : sig.at("inputs")) {
      p.signature.inputs.push_back(
          {f.at("name").template get<std::string>(), f.at("description").template get<std::string>()});
    }
    for (const auto& f : sig.at("outputs")) {
      p.signature.outputs.push_back(
          {f.at("name").template get<std::string>(), f.at("description").template get<std::string>()});
    }
    p.strategy = strategy_from_string(j.at("strategy").template get<std::string>());
    if (j.contains("instruction_override") && !j["instruction_override"].is_null()) {
      p.compiled_instruction = j["instruction_override"].template get<std::string>();
    }
    p.max_demos = j.value("max_demos", kDefaultMaxDemos);
    for (const auto& dj : j.at("demos")) {
      Demo d;
      d.source_id = dj.value("source_id", std::string());
      d.inputs = dj.at("inputs").template get<FieldMap>();
      d.outputs = dj.at("outputs").template get<FieldMap>();
      p.demos.push_back(std::move(d));
    }
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("program: malformed document: ") + e.what());
  }
}

}  // namespace medcorr
