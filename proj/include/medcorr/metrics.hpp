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

// Evaluation: subtask accuracies, ROUGE-1-F and ROUGE-L-F over the shared
// tokenizer, NA-aware composite scores, aggregate reporting and a hook for
// externally hosted neural scorers.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcorr/corpus.hpp"
#include "medcorr/error.hpp"
#include "medcorr/text.hpp"

namespace medcorr {

// ---------------------------------------------------------------------------
// Sentence-level scores

inline double f1(double p, double r) { return (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

/// Unigram F1 with clipped counts.
inline double rouge1_f(std::string_view candidate, std::string_view reference) {
  const auto c = tokenize(candidate);
  const auto r = tokenize(reference);
  if (c.empty() || r.empty()) return 0.0;
  std::unordered_map<std::string, std::size_t> ref_counts;
  for (const auto& t : r) ++ref_counts[t];
  std::size_t matches = 0;
  for (const auto& t : c) {
    auto it = ref_counts.find(t);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++matches;
    }
  }
  return f1(static_cast<double>(matches) / c.size(), static_cast<double>(matches) / r.size());
}

inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// LCS-based F1 (beta = 1).
inline double rouge_l_f(std::string_view candidate, std::string_view reference) {
  const auto c = tokenize(candidate);
  const auto r = tokenize(reference);
  if (c.empty() || r.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(c, r));
  return f1(lcs / c.size(), lcs / r.size());
}

using BaseMetric = std::function<double(const std::string& candidate, const std::string& reference)>;

/// 1 if both NA, 0 if exactly one is NA, otherwise base(pred, gold).
inline double composite_score(const Correction& pred, const Correction& gold, const BaseMetric& base) {
  if (!pred && !gold) return 1.0;
  if (!pred || !gold) return 0.0;
  return base(*pred, *gold);
}

/// Mean of ROUGE-1-F, BERTScore and BLEURT.
inline double aggregate_of(double rouge1, double bertscore, double bleurt) {
  return (rouge1 + bertscore + bleurt) / 3.0;
}

// ---------------------------------------------------------------------------
// Record-level labels

/// What every scorer consumes: one record's flag, sentence id and correction.
struct LabelRow {
  std::string record_id;
  int flag = 0;
  int error_sentence_id = -1;
  Correction correction;
  friend bool operator==(const LabelRow&, const LabelRow&) = default;
};

inline std::vector<LabelRow> gold_rows(const std::vector<ClinicalRecord>& records) {
  std::vector<LabelRow> out;
  for (const auto& r : records) {
    if (!r.gold) throw ValidationError("record '" + r.record_id + "' has no gold labels");
    out.push_back({r.record_id, r.gold->flag, r.gold->error_sentence_id, r.gold->correction});
  }
  return out;
}

namespace detail {

// Pairs predictions with golds by record id; gold order wins.
inline std::vector<std::pair<const LabelRow*, const LabelRow*>> align(
    const std::vector<LabelRow>& predictions, const std::vector<LabelRow>& golds) {
  std::map<std::string, const LabelRow*> by_id;
  for (const auto& p : predictions) {
    if (!by_id.emplace(p.record_id, &p).second) {
      throw ValidationError("predictions: duplicate record_id '" + p.record_id + "'");
    }
  }
  std::set<std::string> gold_ids;
  for (const auto& g : golds) {
    if (!gold_ids.insert(g.record_id).second) {
      throw ValidationError("golds: duplicate record_id '" + g.record_id + "'");
    }
  }
  std::vector<std::string> only_pred, only_gold;
  for (const auto& [id, _] : by_id) {
    if (!gold_ids.contains(id)) only_pred.push_back(id);
  }
  for (const auto& id : gold_ids) {
    if (!by_id.contains(id)) only_gold.push_back(id);
  }
  if (!only_pred.empty() || !only_gold.empty()) {
    std::string msg = "record ids differ between predictions and golds;";
    auto list = [&](const char* what, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      msg += std::string(" ") + what + ":";
      for (const auto& id : ids) msg += " " + id;
      msg += ";";
    };
    list("only in predictions", only_pred);
    list("only in golds", only_gold);
    throw ValidationError(msg);
  }
  std::vector<std::pair<const LabelRow*, const LabelRow*>> out;
  for (const auto& g : golds) out.emplace_back(by_id.at(g.record_id), &g);
  return out;
}

}  // namespace detail

inline double flag_accuracy(const std::vector<LabelRow>& predictions, const std::vector<LabelRow>& golds) {
  const auto pairs = detail::align(predictions, golds);
  if (pairs.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& [p, g] : pairs) ok += p->flag == g->flag;
  return static_cast<double>(ok) / pairs.size();
}

/// -1 is a matchable id, so a clean record predicted clean counts.
inline double sentence_accuracy(const std::vector<LabelRow>& predictions,
                                const std::vector<LabelRow>& golds) {
  const auto pairs = detail::align(predictions, golds);
  if (pairs.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& [p, g] : pairs) ok += p->error_sentence_id == g->error_sentence_id;
  return static_cast<double>(ok) / pairs.size();
}

// ---------------------------------------------------------------------------
// External scorers

inline constexpr std::string_view kBertScore = "bertscore";
inline constexpr std::string_view kBleurt = "bleurt";

struct ScorePair {
  std::string candidate;
  std::string reference;
};

class ExternalScorer {
 public:
  virtual ~ExternalScorer() = default;
  virtual std::string name() const = 0;
  /// One score in [0,1] per pair, in order.
  virtual std::vector<double> score(const std::vector<ScorePair>& pairs) = 0;
};

/// POST {endpoint}/score with {"pairs": [{"candidate", "reference"}]},
/// expecting {"scores": [float, ...]}. Pairs are sent batch_size at a time.
class HttpScorer : public ExternalScorer {
 public:
  HttpScorer(std::string name, std::string endpoint, std::size_t batch_size = 32)
      : name_(std::move(name)), batch_size_(batch_size == 0 ? 1 : batch_size) {
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(endpoint, m, url_re)) {
      throw ValidationError("scorer '" + name_ + "': bad endpoint '" + endpoint + "'");
    }
    origin_ = m[1].str();
    path_ = m[2].str();
    while (!path_.empty() && path_.back() == '/') path_.pop_back();
    path_ += "/score";
  }

  std::string name() const override { return name_; }

  std::vector<double> score(const std::vector<ScorePair>& pairs) override {
    std::vector<double> out;
    for (std::size_t b = 0; b < pairs.size(); b += batch_size_) {
      const std::size_t e = std::min(pairs.size(), b + batch_size_);
      nlohmann::json body;
      body["pairs"] = nlohmann::json::array();
      for (std::size_t i = b; i < e; ++i) {
        body["pairs"].push_back({{"candidate", pairs[i].candidate}, {"reference", pairs[i].reference}});
      }
      httplib::Client client(origin_);
      auto res = client.Post(path_, body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace),
                             "application/json");
      if (!res) throw Error("scorer '" + name_ + "': " + httplib::to_string(res.error()));
      if (res->status != 200) {
        throw Error("scorer '" + name_ + "': HTTP " + std::to_string(res->status));
      }
      std::vector<double> scores;
      try {
        scores = nlohmann::json::parse(res->body).at("scores").get<std::vector<double>>();
      } catch (const nlohmann::json::exception& ex) {
        throw Error("scorer '" + name_ + "': malformed response: " + ex.what());
      }
      if (scores.size() != e - b) {
        throw Error("scorer '" + name_ + "': expected " + std::to_string(e - b) + " scores, got " +
                    std::to_string(scores.size()));
      }
      for (double s : scores) {
        if (!(s >= 0.0 && s <= 1.0)) throw Error("scorer '" + name_ + "': score outside [0,1]");
        out.push_back(s);
      }
    }
    return out;
  }

 private:
  std::string name_;
  std::size_t batch_size_;
  std::string origin_;
  std::string path_;
};

// ---------------------------------------------------------------------------
// Reports

struct RecordScores {
  std::string record_id;
  bool flag_correct = false;
  bool sentence_correct = false;
  // present only when both corrections are non-NA
  std::optional<double> rouge1_f;
  std::optional<double> rouge_l_f;
  std::map<std::string, std::optional<double>> external;
  std::optional<double> aggregate;
  std::map<std::string, double> composite;

  friend bool operator==(const RecordScores&, const RecordScores&) = default;
};

struct ScoreReport {
  std::size_t n_records = 0;
  std::size_t n_scored_corrections = 0;  // records where both sides are non-NA
  double flag_accuracy = 0.0;
  double sentence_accuracy = 0.0;
  std::optional<double> mean_rouge1_f;
  std::optional<double> mean_rouge_l_f;
  std::map<std::string, std::optional<double>> external_means;
  std::optional<double> aggregate_score;
  std::map<std::string, double> composite_means;
  std::map<std::string, std::string> unavailable;  // metric -> reason
  std::vector<RecordScores> per_record;

  friend bool operator==(const ScoreReport&, const ScoreReport&) = default;
};

struct EvaluateOptions {
  std::vector<std::shared_ptr<ExternalScorer>> scorers;
  bool strict = false;
};

namespace detail {

inline std::optional<double> mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace detail

inline ScoreReport evaluate(const std::vector<LabelRow>& predictions, const std::vector<LabelRow>& golds,
                            const EvaluateOptions& options = {}) {
  const auto pairs = detail::align(predictions, golds);
  ScoreReport rep;
  rep.n_records = pairs.size();
  rep.flag_accuracy = flag_accuracy(predictions, golds);
  rep.sentence_accuracy = sentence_accuracy(predictions, golds);

  std::vector<ScorePair> both;
  std::vector<std::size_t> both_idx;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [p, g] = pairs[i];
    RecordScores rs;
    rs.record_id = g->record_id;
    rs.flag_correct = p->flag == g->flag;
    rs.sentence_correct = p->error_sentence_id == g->error_sentence_id;
    if (p->correction && g->correction) {
      rs.rouge1_f = rouge1_f(*p->correction, *g->correction);
      rs.rouge_l_f = rouge_l_f(*p->correction, *g->correction);
      both.push_back({*p->correction, *g->correction});
      both_idx.push_back(i);
    }
    rep.per_record.push_back(std::move(rs));
  }
  rep.n_scored_corrections = both.size();

  // neural columns: absent unless a scorer is configured and succeeds
  std::set<std::string> have_external;
  for (const auto& scorer : options.scorers) {
    const std::string name = scorer->name();
    try {
      const auto scores = scorer->score(both);
      if (scores.size() != both.size()) throw Error("scorer '" + name + "' returned a short result");
      for (std::size_t k = 0; k < both_idx.size(); ++k) {
        rep.per_record[both_idx[k]].external[name] = scores[k];
      }
      have_external.insert(name);
    } catch (const Error& e) {
      if (options.strict) throw;
      rep.unavailable[name] = e.what();
    }
  }
  for (auto name : {kBertScore, kBleurt}) {
    if (!have_external.contains(std::string(name)) && !rep.unavailable.contains(std::string(name))) {
      rep.unavailable[std::string(name)] = "no scorer configured";
    }
  }
  const bool aggregate_ready =
      have_external.contains(std::string(kBertScore)) && have_external.contains(std::string(kBleurt));
  if (!aggregate_ready) rep.unavailable["aggregate"] = "requires rouge1, bertscore and bleurt";

  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [p, g] = pairs[i];
    RecordScores& rs = rep.per_record[i];
    if (aggregate_ready && rs.rouge1_f) {
      rs.aggregate = aggregate_of(*rs.rouge1_f, *rs.external.at(std::string(kBertScore)),
                                  *rs.external.at(std::string(kBleurt)));
    }
    // composite: the NA rules decide unless both sides are sentences
    auto comp = [&](const std::optional<double>& base) {
      if (!p->correction && !g->correction) return 1.0;
      if (!p->correction || !g->correction) return 0.0;
      return *base;
    };
    rs.composite["rouge1"] = comp(rs.rouge1_f);
    rs.composite["rougeL"] = comp(rs.rouge_l_f);
    for (const auto& name : have_external) {
      rs.composite[name] = comp(rs.external.contains(name) ? rs.external.at(name) : std::nullopt);
    }
    if (aggregate_ready) rs.composite["aggregate"] = comp(rs.aggregate);
  }

  auto column = [&](auto getter) {
    std::vector<double> v;
    for (const auto& rs : rep.per_record) {
      if (auto x = getter(rs)) v.push_back(*x);
    }
    return detail::mean_of(v);
  };
  rep.mean_rouge1_f = column([](const RecordScores& r) { return r.rouge1_f; });
  rep.mean_rouge_l_f = column([](const RecordScores& r) { return r.rouge_l_f; });
  for (const auto& name : have_external) {
    rep.external_means[name] = column([&](const RecordScores& r) -> std::optional<double> {
      return r.external.contains(name) ? r.external.at(name) : std::nullopt;
    });
  }
  if (aggregate_ready) rep.aggregate_score = column([](const RecordScores& r) { return r.aggregate; });
  if (!rep.per_record.empty()) {
    for (const auto& [name, _] : rep.per_record.front().composite) {
      rep.composite_means[name] =
          *column([&](const RecordScores& r) -> std::optional<double> { return r.composite.at(name); });
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Report serialization and rendering

namespace detail {

inline nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json();
}

inline std::optional<double> opt_from(const nlohmann::ordered_json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

inline std::map<std::string, std::optional<double>> optmap_from(const nlohmann::ordered_json& j) {
  std::map<std::string, std::optional<double>> out;
  for (const auto& [k, v] : j.items()) {
    out[k] = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
  }
  return out;
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const ScoreReport& r) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["n_records"] = r.n_records;
  j["n_scored_corrections"] = r.n_scored_corrections;
  j["flag_accuracy"] = r.flag_accuracy;
  j["sentence_accuracy"] = r.sentence_accuracy;
  j["mean_rouge1_f"] = detail::opt_json(r.mean_rouge1_f);
  j["mean_rouge_l_f"] = detail::opt_json(r.mean_rouge_l_f);
  j["external_means"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.external_means) j["external_means"][k] = detail::opt_json(v);
  j["aggregate_score"] = detail::opt_json(r.aggregate_score);
  j["composite_means"] = r.composite_means;
  j["unavailable"] = r.unavailable;
  j["per_record"] = nlohmann::ordered_json::array();
  for (const auto& rs : r.per_record) {
    nlohmann::ordered_json row;
    row["record_id"] = rs.record_id;
    row["flag_correct"] = rs.flag_correct;
    row["sentence_correct"] = rs.sentence_correct;
    row["rouge1_f"] = detail::opt_json(rs.rouge1_f);
    row["rouge_l_f"] = detail::opt_json(rs.rouge_l_f);
    row["external"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : rs.external) row["external"][k] = detail::opt_json(v);
    row["aggregate"] = detail::opt_json(rs.aggregate);
    row["composite"] = rs.composite;
    j["per_record"].push_back(std::move(row));
  }
  return j;
}

inline ScoreReport score_report_from_json(const nlohmann::ordered_json& j) {
  try {
    ScoreReport r;
    if (j.at("format_version").get<int>() != 1) throw ValidationError("score report: unsupported format_version");
    r.n_records = j.at("n_records").get<std::size_t>();
    r.n_scored_corrections = j.at("n_scored_corrections").get<std::size_t>();
    r.flag_accuracy = j.at("flag_accuracy").get<double>();
    r.sentence_accuracy = j.at("sentence_accuracy").get<double>();
    r.mean_rouge1_f = detail::opt_from(j, "mean_rouge1_f");
    r.mean_rouge_l_f = detail::opt_from(j, "mean_rouge_l_f");
    r.external_means = detail::optmap_from(j.at("external_means"));
    r.aggregate_score = detail::opt_from(j, "aggregate_score");
    r.composite_means = j.at("composite_means").get<std::map<std::string, double>>();
    r.unavailable = j.at("unavailable").get<std::map<std::string, std::string>>();
    for (const auto& row : j.at("per_record")) {
      RecordScores rs;
      rs.record_id = row.at("record_id").get<std::string>();
      rs.flag_correct = row.at("flag_correct").get<bool>();
      rs.sentence_correct = row.at("sentence_correct").get<bool>();
      rs.rouge1_f = detail::opt_from(row, "rouge1_f");
      rs.rouge_l_f = detail::opt_from(row, "rouge_l_f");
      rs.external = detail::optmap_from(row.at("external"));
      rs.aggregate = detail::opt_from(row, "aggregate");
      rs.composite = row.at("composite").get<std::map<std::string, double>>();
      r.per_record.push_back(std::move(rs));
    }
    if (r.per_record.size() != r.n_records) throw ValidationError("score report: per_record size mismatch");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("score report: malformed document: ") + e.what());
  }
}

enum class ReportFormat { kTable, kJson, kMarkdown };

inline std::string render_report(const ScoreReport& r, ReportFormat format) {
  if (format == ReportFormat::kJson) return to_json(r).dump(2) + "\n";

  // shortest round-trip decimal, so rendering loses nothing
  auto num = [](double v) { return nlohmann::json(v).dump(); };
  auto cell = [&](const std::string& name, const std::optional<double>& v) -> std::string {
    if (v) return num(*v);
    if (r.unavailable.contains(name)) return "unavailable";
    return "n/a";
  };
  std::vector<std::pair<std::string, std::string>> rows;
  rows.emplace_back("records", std::to_string(r.n_records));
  rows.emplace_back("scored_corrections", std::to_string(r.n_scored_corrections));
  rows.emplace_back("flag_accuracy", num(r.flag_accuracy));
  rows.emplace_back("sentence_accuracy", num(r.sentence_accuracy));
  rows.emplace_back("rouge1_f", cell("rouge1", r.mean_rouge1_f));
  rows.emplace_back("rougeL_f", cell("rougeL", r.mean_rouge_l_f));
  std::set<std::string> ext_names{std::string(kBertScore), std::string(kBleurt)};
  for (const auto& [k, _] : r.external_means) ext_names.insert(k);
  for (const auto& k : ext_names) {
    rows.emplace_back(k, cell(k, r.external_means.contains(k) ? r.external_means.at(k) : std::nullopt));
  }
  rows.emplace_back("aggregate", cell("aggregate", r.aggregate_score));
  std::set<std::string> comp_names{"rouge1", "rougeL", std::string(kBertScore), std::string(kBleurt), "aggregate"};
  for (const auto& [k, _] : r.composite_means) comp_names.insert(k);
  for (const auto& k : comp_names) {
    std::optional<double> v;
    if (r.composite_means.contains(k)) v = r.composite_means.at(k);
    rows.emplace_back("composite_" + k, cell(k, v));
  }

  std::string out;
  if (format == ReportFormat::kMarkdown) {
    out += "| metric | value |\n|---|---|\n";
    for (const auto& [k, v] : rows) out += "| " + k + " | " + v + " |\n";
    return out;
  }
  std::size_t w = 6;
  for (const auto& [k, _] : rows) w = std::max(w, k.size());
  auto pad = [&](const std::string& s) { return s + std::string(w - s.size() + 2, ' '); };
  out += pad("metric") + "value\n";
  out += std::string(w + 2 + 12, '-') + "\n";
  for (const auto& [k, v] : rows) out += pad(k) + v + "\n";
  return out;
}

}  // namespace medcorr
