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

// Clinical-record datasets and multiple-choice retrieval corpora: domain
// types, parsing, validation, serialization and seeded splitting.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcorr/csv.hpp"
#include "medcorr/error.hpp"
#include "medcorr/random.hpp"
#include "medcorr/text.hpp"

namespace medcorr {

/// Correction text, or std::nullopt for the NA marker.
using Correction = std::optional<std::string>;

inline constexpr std::string_view kNaLiteral = "NA";

inline Correction correction_from_literal(std::string_view s) {
  if (s == kNaLiteral) return std::nullopt;
  return std::string(s);
}

inline std::string correction_to_literal(const Correction& c) {
  return c ? *c : std::string(kNaLiteral);
}

struct Sentence {
  int id = 0;
  std::string text;
  // Separator text around the sentence as it appeared in the source;
  // only populated by number_sentences.
  std::string leading;
  std::string trailing;

  friend bool operator==(const Sentence&, const Sentence&) = default;
};

/// Gold labels for one record. flag 0 means error_sentence_id == -1 and
/// correction is NA; flag 1 means the id names a sentence and the
/// correction is a non-empty sentence.
struct Annotation {
  int flag = 0;
  int error_sentence_id = -1;
  Correction correction;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct ClinicalRecord {
  std::string record_id;
  std::string text;
  std::vector<Sentence> sentences;
  std::optional<Annotation> gold;

  const Sentence* find_sentence(int id) const {
    for (const auto& s : sentences) {
      if (s.id == id) return &s;
    }
    return nullptr;
  }

  friend bool operator==(const ClinicalRecord&, const ClinicalRecord&) = default;
};

struct McqOption {
  std::string label;
  std::string text;
  friend bool operator==(const McqOption&, const McqOption&) = default;
};

struct McqRecord {
  std::string question;
  std::vector<McqOption> options;
  std::string correct_label;

  const McqOption& correct_option() const {
    for (const auto& o : options) {
      if (o.label == correct_label) return o;
    }
    throw ValidationError("mcq: correct label '" + correct_label + "' not among options");
  }

  friend bool operator==(const McqRecord&, const McqRecord&) = default;
};

enum class RecordFormat { kDelimited, kJsonLines };
enum class SentenceScheme { kPreSegmentedLines, kDelimiterSplit };
enum class SplitMode { kPlain, kFlagStratified };

struct SplitSizes {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

struct DatasetSplit {
  std::vector<ClinicalRecord> train;
  std::vector<ClinicalRecord> validation;
  std::vector<ClinicalRecord> test;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Sentences

/// Splits text into numbered sentences. Concatenating leading + text +
/// trailing over the result reproduces the input byte-for-byte.
///
/// kPreSegmentedLines: one sentence per line; whitespace-only lines are
/// kept in the neighbouring separator. kDelimiterSplit: breaks after '.',
/// '!' or '?' followed by whitespace.
inline std::vector<Sentence> number_sentences(std::string_view text, SentenceScheme scheme) {
  if (text.empty()) throw ValidationError("number_sentences: text is empty");
  std::vector<Sentence> out;
  std::string pending_leading;

  auto push = [&](std::string_view body, std::string_view sep) {
    if (is_blank(body)) {
      if (out.empty()) {
        pending_leading.append(body);
        pending_leading.append(sep);
      } else {
        out.back().trailing.append(body);
        out.back().trailing.append(sep);
      }
      return;
    }
    Sentence s;
    s.id = static_cast<int>(out.size());
    s.text = std::string(body);
    s.trailing = std::string(sep);
    if (out.empty()) s.leading = std::move(pending_leading);
    out.push_back(std::move(s));
  };

  if (scheme == SentenceScheme::kPreSegmentedLines) {
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto nl = text.find('\n', start);
      if (nl == std::string_view::npos) {
        if (start < text.size()) push(text.substr(start), "");
        break;
      }
      push(text.substr(start, nl - start), "\n");
      start = nl + 1;
    }
  } else {
    std::size_t start = 0;
    std::size_t i = 0;
    auto is_ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
    // leading whitespace belongs to the first sentence
    while (i < text.size() && is_ws(text[i])) ++i;
    pending_leading = std::string(text.substr(0, i));
    start = i;
    while (i < text.size()) {
      const char c = text[i];
      if ((c == '.' || c == '!' || c == '?') && i + 1 < text.size() && is_ws(text[i + 1])) {
        std::size_t j = i + 1;
        while (j < text.size() && is_ws(text[j])) ++j;
        push(text.substr(start, i + 1 - start), text.substr(i + 1, j - i - 1));
        start = j;
        i = j;
        continue;
      }
      ++i;
    }
    if (start < text.size()) push(text.substr(start), "");
  }
  if (out.empty()) throw ValidationError("number_sentences: text has no sentences");
  return out;
}

inline std::string join_sentences(const std::vector<Sentence>& sentences) {
  std::string out;
  for (const auto& s : sentences) {
    out += s.leading;
    out += s.text;
    out += s.trailing;
  }
  return out;
}

/// Sentences rendered one per line as "<id> <text>", the layout handed to
/// localization prompts.
inline std::string numbered_text(const ClinicalRecord& r) {
  std::string out;
  for (const auto& s : r.sentences) {
    if (!out.empty()) out.push_back('\n');
    out += std::to_string(s.id);
    out.push_back(' ');
    out += s.text;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation

inline void validate_record(const ClinicalRecord& r) {
  auto fail = [&](const std::string& what) {
    throw ValidationError("record '" + r.record_id + "': " + what);
  };
  if (r.record_id.empty()) throw ValidationError("record with empty record_id");
  if (r.sentences.empty()) fail("no sentences");
  for (std::size_t i = 0; i < r.sentences.size(); ++i) {
    if (r.sentences[i].id < 0) fail("negative sentence id");
    if (i > 0 && r.sentences[i].id <= r.sentences[i - 1].id) {
      fail("sentence ids must be unique and strictly increasing");
    }
    if (r.sentences[i].text.empty()) fail("empty sentence text");
  }
  if (!r.gold) return;
  const Annotation& g = *r.gold;
  if (g.flag == 0) {
    if (g.error_sentence_id != -1) fail("error_flag 0 requires error_sentence_id -1");
    if (g.correction) fail("error_flag 0 requires corrected_sentence NA");
  } else if (g.flag == 1) {
    if (r.find_sentence(g.error_sentence_id) == nullptr) {
      fail("error_flag 1 requires error_sentence_id naming an existing sentence (got " +
           std::to_string(g.error_sentence_id) + ")");
    }
    if (!g.correction || trim(*g.correction).empty()) {
      fail("error_flag 1 requires a non-empty corrected_sentence");
    }
  } else {
    fail("error_flag must be 0 or 1");
  }
}

namespace detail {

inline int parse_int_field(const std::string& id, const char* column, std::string_view v) {
  const std::string s(trim(v));
  std::size_t used = 0;
  int value = 0;
  try {
    value = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = std::string::npos;
  }
  if (s.empty() || used != s.size()) {
    throw ValidationError("record '" + id + "': " + column + " is not an integer: '" + s + "'");
  }
  return value;
}

inline std::vector<Sentence> sentences_from_strings(const std::string& id,
                                                    const std::vector<std::string>& texts) {
  std::vector<Sentence> out;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    Sentence s;
    s.id = static_cast<int>(i);
    s.text = texts[i];
    out.push_back(std::move(s));
  }
  if (out.empty()) throw ValidationError("record '" + id + "': sentences list is empty");
  return out;
}

inline std::string joined_lines(const std::vector<Sentence>& ss) {
  std::string out;
  for (const auto& s : ss) {
    if (!out.empty()) out.push_back('\n');
    out += s.text;
  }
  return out;
}

// Fills text/sentences from whichever the row provides, then labels.
inline ClinicalRecord assemble_record(std::string id, std::string text,
                                      std::optional<std::vector<std::string>> sentence_texts,
                                      std::optional<int> flag, std::optional<int> sent_id,
                                      std::optional<std::string> correction_literal) {
  ClinicalRecord r;
  r.record_id = std::move(id);
  if (sentence_texts && !sentence_texts->empty()) {
    r.sentences = sentences_from_strings(r.record_id, *sentence_texts);
    r.text = text.empty() ? joined_lines(r.sentences) : std::move(text);
  } else {
    if (text.empty()) throw ValidationError("record '" + r.record_id + "': text is empty");
    for (auto s : number_sentences(text, SentenceScheme::kPreSegmentedLines)) {
      s.leading.clear();
      s.trailing.clear();
      r.sentences.push_back(std::move(s));
    }
    r.text = std::move(text);
  }
  if (flag) {
    Annotation a;
    a.flag = *flag;
    if (!sent_id) {
      throw ValidationError("record '" + r.record_id + "': error_sentence_id missing");
    }
    a.error_sentence_id = *sent_id;
    if (!correction_literal) {
      throw ValidationError("record '" + r.record_id + "': corrected_sentence missing");
    }
    a.correction = correction_from_literal(*correction_literal);
    r.gold = a;
  } else if (sent_id || correction_literal) {
    throw ValidationError("record '" + r.record_id +
                          "': labels given without error_flag");
  }
  validate_record(r);
  return r;
}

inline void check_unique_ids(const std::vector<ClinicalRecord>& records) {
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (!seen.insert(r.record_id).second) {
      throw ValidationError("duplicate record_id '" + r.record_id + "'");
    }
  }
}

inline std::vector<std::string> split_lines(std::string_view raw) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < raw.size()) {
    auto nl = raw.find('\n', start);
    if (nl == std::string_view::npos) nl = raw.size();
    std::string_view line = raw.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    start = nl + 1;
  }
  return lines;
}

// nlohmann silently keeps the last of duplicated object keys; this parse
// callback turns duplicates into errors.
inline nlohmann::ordered_json parse_json_strict(std::string_view text) {
  std::vector<std::set<std::string>> keys;
  std::string duplicate;
  auto cb = [&](int /*depth*/, nlohmann::ordered_json::parse_event_t ev,
                nlohmann::ordered_json& parsed) {
    using E = nlohmann::ordered_json::parse_event_t;
    if (ev == E::object_start) {
      keys.emplace_back();
    } else if (ev == E::object_end) {
      if (!keys.empty()) keys.pop_back();
    } else if (ev == E::key && !keys.empty()) {
      const auto k = parsed.get<std::string>();
      if (!keys.back().insert(k).second && duplicate.empty()) duplicate = k;
    }
    return true;
  };
  auto j = nlohmann::ordered_json::parse(text.begin(), text.end(), cb);
  if (!duplicate.empty()) throw ValidationError("duplicate key '" + duplicate + "'");
  return j;
}

}  // namespace detail

inline constexpr std::string_view kClinicalColumns[] = {
    "record_id", "text", "sentences_json", "error_flag", "error_sentence_id",
    "corrected_sentence"};

// ---------------------------------------------------------------------------
// Parsing

inline std::vector<ClinicalRecord> parse_clinical_records(std::string_view raw,
                                                          RecordFormat format) {
  if (!is_valid_utf8(raw)) throw ValidationError("clinical records: input is not valid UTF-8");
  std::vector<ClinicalRecord> out;
  if (format == RecordFormat::kDelimited) {
    const auto table = csv::parse_table(raw);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < table.header.size(); ++i) {
      const std::string name(trim(table.header[i]));
      if (std::find(std::begin(kClinicalColumns), std::end(kClinicalColumns), name) ==
          std::end(kClinicalColumns)) {
        throw ValidationError("clinical records: unknown column '" + name + "'");
      }
      if (!col.emplace(name, i).second) {
        throw ValidationError("clinical records: duplicate column '" + name + "'");
      }
    }
    for (auto name : kClinicalColumns) {
      if (!col.contains(std::string(name))) {
        throw ValidationError("clinical records: missing column '" + std::string(name) + "'");
      }
    }
    for (std::size_t ri = 0; ri < table.rows.size(); ++ri) {
      const auto& row = table.rows[ri];
      const std::string line = std::to_string(table.row_lines[ri]);
      if (row.size() != table.header.size()) {
        throw ValidationError("clinical records: row at line " + line + " has " +
                              std::to_string(row.size()) + " fields, expected " +
                              std::to_string(table.header.size()));
      }
      auto cell = [&](std::string_view name) -> const std::string& {
        return row[col.at(std::string(name))];
      };
      const std::string id(trim(cell("record_id")));
      if (id.empty()) throw ValidationError("clinical records: empty record_id at line " + line);
      std::optional<std::vector<std::string>> sentences;
      if (!is_blank(cell("sentences_json"))) {
        try {
          sentences = nlohmann::json::parse(cell("sentences_json")).get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
          throw ValidationError("record '" + id + "': sentences_json is not a JSON array of strings");
        }
      }
      std::optional<int> flag, sent_id;
      std::optional<std::string> corr;
      if (!is_blank(cell("error_flag"))) flag = detail::parse_int_field(id, "error_flag", cell("error_flag"));
      if (!is_blank(cell("error_sentence_id"))) {
        sent_id = detail::parse_int_field(id, "error_sentence_id", cell("error_sentence_id"));
      }
      if (!cell("corrected_sentence").empty()) corr = cell("corrected_sentence");
      out.push_back(detail::assemble_record(id, cell("text"), std::move(sentences), flag, sent_id,
                                            std::move(corr)));
    }
  } else {
    const auto lines = detail::split_lines(raw);
    for (std::size_t li = 0; li < lines.size(); ++li) {
      if (is_blank(lines[li])) continue;
      const std::string where = "json-lines line " + std::to_string(li + 1);
      nlohmann::ordered_json j;
      try {
        j = detail::parse_json_strict(lines[li]);
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(where + ": " + e.what());
      }
      if (!j.is_object()) throw ValidationError(where + ": expected an object");
      for (const auto& [k, v] : j.items()) {
        if (k != "record_id" && k != "text" && k != "sentences" && k != "error_flag" &&
            k != "error_sentence_id" && k != "corrected_sentence") {
          throw ValidationError(where + ": unknown key '" + k + "'");
        }
      }
      try {
        const std::string id = j.at("record_id").get<std::string>();
        if (id.empty()) throw ValidationError(where + ": empty record_id");
        std::optional<std::vector<std::string>> sentences;
        if (j.contains("sentences") && !j["sentences"].is_null()) {
          sentences = j["sentences"].get<std::vector<std::string>>();
        }
        std::optional<int> flag, sent_id;
        std::optional<std::string> corr;
        if (j.contains("error_flag") && !j["error_flag"].is_null()) flag = j["error_flag"].get<int>();
        if (j.contains("error_sentence_id") && !j["error_sentence_id"].is_null()) {
          sent_id = j["error_sentence_id"].get<int>();
        }
        if (j.contains("corrected_sentence") && !j["corrected_sentence"].is_null()) {
          corr = j["corrected_sentence"].get<std::string>();
        }
        out.push_back(detail::assemble_record(id, j.value("text", std::string()),
                                              std::move(sentences), flag, sent_id,
                                              std::move(corr)));
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(where + ": " + e.what());
      }
    }
  }
  detail::check_unique_ids(out);
  return out;
}

inline std::string serialize_clinical_records(const std::vector<ClinicalRecord>& records,
                                              RecordFormat format) {
  std::string out;
  if (format == RecordFormat::kDelimited) {
    csv::append_row(out, csv::Row(std::begin(kClinicalColumns), std::end(kClinicalColumns)));
    for (const auto& r : records) {
      nlohmann::json texts = nlohmann::json::array();
      for (const auto& s : r.sentences) texts.push_back(s.text);
      csv::Row row{r.record_id, r.text, texts.dump(), "", "", ""};
      if (r.gold) {
        row[3] = std::to_string(r.gold->flag);
        row[4] = std::to_string(r.gold->error_sentence_id);
        row[5] = correction_to_literal(r.gold->correction);
      }
      csv::append_row(out, row);
    }
  } else {
    for (const auto& r : records) {
      nlohmann::ordered_json j;
      j["record_id"] = r.record_id;
      j["text"] = r.text;
      j["sentences"] = nlohmann::ordered_json::array();
      for (const auto& s : r.sentences) j["sentences"].push_back(s.text);
      if (r.gold) {
        j["error_flag"] = r.gold->flag;
        j["error_sentence_id"] = r.gold->error_sentence_id;
        j["corrected_sentence"] = correction_to_literal(r.gold->correction);
      }
      out += j.dump();
      out.push_back('\n');
    }
  }
  return out;
}

/// One MCQ per line: {"question": str, "options": {"A": str, ...}, "answer": "A"}.
inline std::vector<McqRecord> parse_mcq_corpus(std::string_view raw) {
  if (!is_valid_utf8(raw)) throw ValidationError("mcq corpus: input is not valid UTF-8");
  std::vector<McqRecord> out;
  const auto lines = detail::split_lines(raw);
  for (std::size_t li = 0; li < lines.size(); ++li) {
    if (is_blank(lines[li])) continue;
    const std::string where = "mcq corpus line " + std::to_string(li + 1);
    nlohmann::ordered_json j;
    try {
      j = detail::parse_json_strict(lines[li]);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    try {
      McqRecord m;
      m.question = j.at("question").get<std::string>();
      const auto& opts = j.at("options");
      if (!opts.is_object()) throw ValidationError(where + ": options must be an object");
      for (const auto& [label, text] : opts.items()) {
        m.options.push_back({label, text.get<std::string>()});
      }
      m.correct_label = j.at("answer").get<std::string>();
      if (m.options.size() < 2) throw ValidationError(where + ": fewer than 2 options");
      const bool found = std::any_of(m.options.begin(), m.options.end(),
                                     [&](const McqOption& o) { return o.label == m.correct_label; });
      if (!found) {
        throw ValidationError(where + ": answer '" + m.correct_label + "' is not an option label");
      }
      out.push_back(std::move(m));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
  return out;
}

inline std::string serialize_mcq_corpus(const std::vector<McqRecord>& corpus) {
  std::string out;
  for (const auto& m : corpus) {
    nlohmann::ordered_json j;
    j["question"] = m.question;
    j["options"] = nlohmann::ordered_json::object();
    for (const auto& o : m.options) j["options"][o.label] = o.text;
    j["answer"] = m.correct_label;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splitting

/// Seeded split into train/validation/test. Plain mode cuts the seeded
/// permutation in order. Stratified mode additionally keeps the share of
/// flag-1 records in each part as close as possible (largest remainder).
inline DatasetSplit split_dataset(const std::vector<ClinicalRecord>& records, SplitSizes sizes,
                                  std::uint64_t seed, SplitMode mode = SplitMode::kPlain) {
  const std::size_t n = records.size();
  if (sizes.train + sizes.validation + sizes.test != n) {
    throw ValidationError("split sizes " + std::to_string(sizes.train) + "+" +
                          std::to_string(sizes.validation) + "+" + std::to_string(sizes.test) +
                          " do not sum to " + std::to_string(n) + " records");
  }
  detail::check_unique_ids(records);
  const auto perm = seeded_permutation(n, seed);
  DatasetSplit split;
  split.seed = seed;
  std::vector<ClinicalRecord>* parts[3] = {&split.train, &split.validation, &split.test};
  const std::size_t quota[3] = {sizes.train, sizes.validation, sizes.test};

  if (mode == SplitMode::kPlain) {
    std::size_t k = 0;
    for (int p = 0; p < 3; ++p) {
      for (std::size_t i = 0; i < quota[p]; ++i) parts[p]->push_back(records[perm[k++]]);
    }
    return split;
  }

  std::vector<std::size_t> errors, clean;
  for (auto idx : perm) {
    const bool err = records[idx].gold && records[idx].gold->flag == 1;
    (err ? errors : clean).push_back(idx);
  }
  // error quota per part: floor of the proportional share, then hand out
  // the remainder by largest fractional part (ties to the earlier part)
  std::size_t err_quota[3];
  std::size_t assigned = 0;
  std::vector<std::pair<double, int>> frac;
  for (int p = 0; p < 3; ++p) {
    const double exact = n == 0 ? 0.0 : static_cast<double>(errors.size()) * quota[p] / n;
    err_quota[p] = static_cast<std::size_t>(exact);
    assigned += err_quota[p];
    frac.emplace_back(exact - static_cast<double>(err_quota[p]), p);
  }
  std::stable_sort(frac.begin(), frac.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < errors.size(); ++r) {
    const int p = frac[r % 3].second;
    if (err_quota[p] < quota[p]) {
      ++err_quota[p];
      ++assigned;
    }
  }
  std::size_t ei = 0, ci = 0;
  for (int p = 0; p < 3; ++p) {
    std::vector<std::size_t> chosen;
    for (std::size_t i = 0; i < err_quota[p]; ++i) chosen.push_back(errors[ei++]);
    for (std::size_t i = err_quota[p]; i < quota[p]; ++i) chosen.push_back(clean[ci++]);
    // keep the seeded order within the part
    std::vector<std::size_t> pos(n);
    for (std::size_t i = 0; i < n; ++i) pos[perm[i]] = i;
    std::sort(chosen.begin(), chosen.end(),
              [&](std::size_t a, std::size_t b) { return pos[a] < pos[b]; });
    for (auto idx : chosen) parts[p]->push_back(records[idx]);
  }
  return split;
}

}  // namespace medcorr
