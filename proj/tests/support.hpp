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

// Shared fixtures: file helpers, a synthetic record generator and an
// oracle LM that answers every stage from gold labels.

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "medcorr.hpp"

namespace support {

inline std::string source_path(const std::string& rel) { return std::string(MEDCORR_SOURCE_DIR) + "/" + rel; }

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << data;
}

/// Fresh directory under the build tree's temp area, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("medcorr-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline const std::vector<std::string>& word_bank() {
  static const std::vector<std::string> w{
      "patient", "reports", "mild",    "chest",   "pain",     "fever",   "cough",    "nausea",  "labs",
      "show",    "elevated", "normal", "levels",  "imaging",  "reveals", "lesion",   "started", "therapy",
      "oral",    "daily",   "dose",    "history", "smoking",  "denies",  "recent",   "travel",  "exam",
      "notable", "for",     "mass",    "right",   "left",     "lower",   "upper",    "lobe",    "renal"};
  return w;
}

/// n records; about error_share carry an error. Every record's first
/// sentence holds a "case-<k>" marker so an oracle can identify it from
/// any prompt that quotes the record. Sentences are 8-10 tokens and a
/// correction swaps one or two of them, so the quality gate passes.
inline std::vector<medcorr::ClinicalRecord> synthetic_records(std::size_t n, std::uint64_t seed,
                                                              double error_share = 0.5,
                                                              const std::string& prefix = "syn") {
  std::mt19937_64 rng(seed);
  const auto& bank = word_bank();
  std::uniform_int_distribution<std::size_t> word(0, bank.size() - 1);
  std::uniform_int_distribution<int> n_sent(3, 6), n_words(8, 10);
  std::bernoulli_distribution has_error(error_share);
  std::vector<medcorr::ClinicalRecord> out;
  for (std::size_t k = 0; k < n; ++k) {
    medcorr::ClinicalRecord r;
    r.record_id = prefix + "-" + std::to_string(k);
    const int ns = n_sent(rng);
    for (int s = 0; s < ns; ++s) {
      std::string text = s == 0 ? "Marker case-" + std::to_string(k) + " of " + prefix + ":" : "";
      const int nw = n_words(rng);
      for (int i = 0; i < nw; ++i) text += (text.empty() ? "" : " ") + bank[word(rng)];
      text += ".";
      r.sentences.push_back({s, text, "", ""});
    }
    for (const auto& s : r.sentences) r.text += (r.text.empty() ? "" : "\n") + s.text;
    medcorr::Annotation a;
    if (has_error(rng)) {
      a.flag = 1;
      a.error_sentence_id = std::uniform_int_distribution<int>(1, ns - 1)(rng);
      std::string fixed = r.sentences[static_cast<std::size_t>(a.error_sentence_id)].text;
      fixed.insert(0, "Corrected ");
      a.correction = fixed;
    }
    r.gold = a;
    medcorr::validate_record(r);
    out.push_back(std::move(r));
  }
  return out;
}

/// Text after the last demo separator of the final message.
inline std::string live_block(const medcorr::LmRequest& req) {
  const std::string& last = req.messages.back().content;
  const auto cut = last.rfind("\n---\n");
  return cut == std::string::npos ? last : last.substr(cut + 5);
}

/// The open output label the live block ends with, e.g. "Verdict".
inline std::string open_label(const std::string& live) {
  std::string s = live;
  while (!s.empty() && (s.back() == '\n' || s.back() == ' ')) s.pop_back();
  const auto nl = s.rfind('\n');
  std::string last = nl == std::string::npos ? s : s.substr(nl + 1);
  if (!last.empty() && last.back() == ':') last.pop_back();
  return last;
}

inline std::optional<std::size_t> case_marker(const std::string& text) {
  static const std::regex re(R"(case-(\d+))");
  std::smatch m;
  if (!std::regex_search(text, m, re)) return std::nullopt;
  return std::stoul(m[1].str());
}

/// Answers every MS and UW stage (and instruction proposals) correctly for
/// records identified by their case marker.
class GoldOracle {
 public:
  explicit GoldOracle(std::vector<medcorr::ClinicalRecord> records) : records_(std::move(records)) {}

  std::string operator()(const medcorr::LmRequest& req) const {
    const std::string live = live_block(req);
    const std::string label = open_label(live);
    if (label == "Proposed Instruction") return "Proposed Instruction: Think carefully, then answer.";
    const auto k = case_marker(live);
    if (!k || *k >= records_.size()) return "Rationale: unknown record.\n" + label + ": 0";
    const auto& g = *records_[*k].gold;
    const std::string why = "Rationale: worked through case " + std::to_string(*k) + ".\n";
    if (label == "Implicit Choice") return why + "Implicit Choice: finding of case-" + std::to_string(*k);
    if (label == "Verdict") return why + "Verdict: " + (g.flag ? "mismatch" : "match");
    if (label == "Error Flag") return why + "Error Flag: " + std::to_string(g.flag);
    if (label == "Sentence Id") {
      const std::string ans = "Sentence Id: " + std::to_string(g.error_sentence_id);
      return live.find("Rationale:") != std::string::npos ? why + ans : ans;
    }
    if (label == "Corrected Sentence") return why + "Corrected Sentence: " + g.correction.value_or("NA");
    return "garbage";
  }

 private:
  std::vector<medcorr::ClinicalRecord> records_;
};

/// n MCQs of random bank words; question i ends with a unique "q<i>" token.
inline std::vector<medcorr::McqRecord> random_corpus(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto& bank = word_bank();
  std::uniform_int_distribution<std::size_t> w(0, bank.size() - 1);
  std::uniform_int_distribution<int> len(4, 14);
  std::vector<medcorr::McqRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    medcorr::McqRecord m;
    const int l = len(rng);
    for (int k = 0; k < l; ++k) m.question += bank[w(rng)] + " ";
    m.question += "q" + std::to_string(i);
    m.options = {{"A", bank[w(rng)]}, {"B", bank[w(rng)] + " " + bank[w(rng)]}};
    m.correct_label = "B";
    out.push_back(std::move(m));
  }
  return out;
}

/// Small MCQ corpus, enough for the retrieval step to return something.
inline std::vector<medcorr::McqRecord> tiny_mcq_corpus() {
  return {
      {"Which finding best explains the patient's chest pain and fever?",
       {{"A", "Pneumonia"}, {"B", "Pericarditis"}, {"C", "Pulmonary embolism"}},
       "A"},
      {"Which oral therapy is first line for this renal lesion?",
       {{"A", "Observation"}, {"B", "Nephrectomy"}},
       "B"},
      {"What does imaging of the upper lobe mass most likely reveal?",
       {{"A", "Carcinoma"}, {"B", "Granuloma"}, {"C", "Abscess"}},
       "A"},
  };
}

inline std::shared_ptr<const medcorr::TfidfIndex> tiny_index() {
  return std::make_shared<const medcorr::TfidfIndex>(medcorr::build_index(tiny_mcq_corpus()));
}

}  // namespace support
