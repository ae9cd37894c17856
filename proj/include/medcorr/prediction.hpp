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

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcorr/corpus.hpp"
#include "medcorr/error.hpp"
#include "medcorr/metrics.hpp"
#include "medcorr/program.hpp"

namespace medcorr {

/// One program invocation inside a pipeline run.
struct StageTrace {
  std::string stage;
  FieldMap inputs;
  FieldMap outputs;
  std::string raw;
  int attempts = 0;
  std::vector<CallRecord> calls;
};

/// Per-record system output. Full pipeline outputs satisfy
/// flag 0 <=> error_sentence_id -1 <=> correction NA. Stage-isolated runs
/// used during compilation fill only the fields their stage decides.
struct Prediction {
  std::string record_id;
  int flag = 0;
  int error_sentence_id = -1;
  Correction corrected_sentence;
  std::vector<StageTrace> trace;
  bool gated = false;  // quality gate replaced the candidate
  bool failed = false;
  std::string error;

  const StageTrace* find_stage(std::string_view name) const {
    for (const auto& t : trace) {
      if (t.stage == name) return &t;
    }
    return nullptr;
  }

  LabelRow labels() const { return {record_id, flag, error_sentence_id, corrected_sentence}; }
};

inline void check_prediction(const Prediction& p, const ClinicalRecord& r) {
  auto fail = [&](const std::string& what) {
    throw Error("prediction for '" + p.record_id + "' violates invariant: " + what);
  };
  if (p.flag == 0) {
    if (p.error_sentence_id != -1 || p.corrected_sentence) fail("flag 0 requires (-1, NA)");
  } else if (p.flag == 1) {
    if (r.find_sentence(p.error_sentence_id) == nullptr) fail("sentence id not in record");
    if (!p.corrected_sentence) fail("flag 1 requires a correction");
  } else {
    fail("flag must be 0 or 1");
  }
}

inline nlohmann::ordered_json trace_to_json(const Prediction& p) {
  nlohmann::ordered_json j;
  j["record_id"] = p.record_id;
  j["error_flag"] = p.flag;
  j["error_sentence_id"] = p.error_sentence_id;
  j["corrected_sentence"] = correction_to_literal(p.corrected_sentence);
  j["gated"] = p.gated;
  j["failed"] = p.failed;
  if (p.failed) j["error"] = p.error;
  j["stages"] = nlohmann::ordered_json::array();
  for (const auto& t : p.trace) {
    nlohmann::ordered_json s;
    s["stage"] = t.stage;
    s["inputs"] = t.inputs;
    s["outputs"] = t.outputs;
    s["attempts"] = t.attempts;
    s["calls"] = nlohmann::ordered_json::array();
    for (const auto& c : t.calls) {
      nlohmann::ordered_json cj;
      cj["key"] = canonical_key(c.request);
      cj["request"] = nlohmann::ordered_json::parse(request_to_json(c.request).dump(
          -1, ' ', false, nlohmann::json::error_handler_t::replace));
      cj["completion"] = c.completion;
      s["calls"].push_back(std::move(cj));
    }
    j["stages"].push_back(std::move(s));
  }
  return j;
}

// ---------------------------------------------------------------------------
// Predictions file: record_id,error_flag,error_sentence_id,corrected_sentence

inline std::string serialize_predictions(const std::vector<Prediction>& preds) {
  std::string out;
  csv::append_row(out, {"record_id", "error_flag", "error_sentence_id", "corrected_sentence"});
  for (const auto& p : preds) {
    csv::append_row(out, {p.record_id, std::to_string(p.flag), std::to_string(p.error_sentence_id),
                          correction_to_literal(p.corrected_sentence)});
  }
  return out;
}

inline bool looks_like_predictions_table(std::string_view raw) {
  const auto rows = csv::parse_rows(raw.substr(0, raw.find('\n')));
  if (rows.empty()) return false;
  std::vector<std::string> h;
  for (const auto& c : rows.front()) h.emplace_back(trim(c));
  return h == std::vector<std::string>{"record_id", "error_flag", "error_sentence_id", "corrected_sentence"};
}

inline std::vector<LabelRow> parse_predictions(std::string_view raw) {
  const auto table = csv::parse_table(raw);
  if (!looks_like_predictions_table(raw)) {
    throw ValidationError(
        "predictions: header must be record_id,error_flag,error_sentence_id,corrected_sentence");
  }
  std::vector<LabelRow> out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::string line = std::to_string(table.row_lines[i]);
    if (row.size() != 4) throw ValidationError("predictions line " + line + ": expected 4 fields");
    LabelRow r;
    r.record_id = std::string(trim(row[0]));
    r.flag = detail::parse_int_field(r.record_id, "error_flag", row[1]);
    r.error_sentence_id = detail::parse_int_field(r.record_id, "error_sentence_id", row[2]);
    r.correction = correction_from_literal(row[3]);
    if (r.flag != 0 && r.flag != 1) throw ValidationError("predictions line " + line + ": flag must be 0 or 1");
    if ((r.flag == 0) != (r.error_sentence_id == -1) || (r.flag == 0) != !r.correction) {
      throw ValidationError("predictions line " + line + " ('" + r.record_id +
                            "'): flag 0 must pair with id -1 and NA");
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace medcorr
