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

// TF-IDF retrieval over a multiple-choice question corpus.
//
// weight(t, d) = tf(t, d) * idf(t), tf = raw count, idf = ln(N / df(t)) + 1.
// Similarity is cosine between the query vector (index idf, unseen terms
// dropped) and each document vector. Documents are indexed on the question
// text followed by the option texts; the answer label is not indexed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcorr/corpus.hpp"
#include "medcorr/error.hpp"
#include "medcorr/text.hpp"

namespace medcorr {

using TermId = std::uint32_t;
using SparseVector = std::vector<std::pair<TermId, double>>;  // sorted by term id

struct RetrievalHit {
  std::size_t doc_id = 0;
  double score = 0.0;
  const McqRecord* record = nullptr;
};

inline std::string indexed_text(const McqRecord& m) {
  std::string s = m.question;
  for (const auto& o : m.options) {
    s.push_back('\n');
    s += o.text;
  }
  return s;
}

class TfidfIndex {
 public:
  static constexpr int kFormatVersion = 1;

  /// idf_override pins idf for the listed terms; everything else gets the
  /// formula. Used to compare scores across corpora with idf held fixed.
  static TfidfIndex build(std::vector<McqRecord> corpus,
                          const std::map<std::string, double>* idf_override = nullptr) {
    if (corpus.empty()) throw ValidationError("build_index: corpus is empty");
    TfidfIndex idx;
    idx.corpus_ = std::move(corpus);
    std::vector<std::map<std::string, std::size_t>> counts;
    std::map<std::string, std::size_t> df;
    for (const auto& m : idx.corpus_) {
      std::map<std::string, std::size_t> c;
      for (auto& t : tokenize(indexed_text(m))) ++c[t];
      for (const auto& [t, _] : c) ++df[t];
      counts.push_back(std::move(c));
    }
    // std::map iteration gives sorted terms, so ids are corpus-order free
    for (const auto& [t, f] : df) {
      idx.vocabulary_.emplace(t, static_cast<TermId>(idx.terms_.size()));
      idx.terms_.push_back(t);
      idx.document_frequency_.push_back(f);
      double w = std::log(static_cast<double>(idx.corpus_.size()) / static_cast<double>(f)) + 1.0;
      if (idf_override != nullptr) {
        if (auto it = idf_override->find(t); it != idf_override->end()) w = it->second;
      }
      idx.idf_.push_back(w);
    }
    for (const auto& c : counts) {
      SparseVector v;
      double sq = 0.0;
      for (const auto& [t, n] : c) {
        const TermId id = idx.vocabulary_.at(t);
        const double w = static_cast<double>(n) * idx.idf_[id];
        v.emplace_back(id, w);
        sq += w * w;
      }
      idx.doc_vectors_.push_back(std::move(v));
      idx.doc_norms_.push_back(std::sqrt(sq));
    }
    return idx;
  }

  SparseVector vectorize(std::string_view text) const {
    std::map<TermId, std::size_t> c;
    for (const auto& t : tokenize(text)) {
      if (auto it = vocabulary_.find(t); it != vocabulary_.end()) ++c[it->second];
    }
    SparseVector v;
    for (const auto& [id, n] : c) v.emplace_back(id, static_cast<double>(n) * idf_[id]);
    return v;
  }

  /// Top-k documents by cosine similarity, ties broken by ascending doc id.
  /// Zero-score documents still pad the result up to k.
  std::vector<RetrievalHit> query(std::string_view text, std::size_t k = 1) const {
    if (k == 0) throw ValidationError("query: k must be >= 1");
    const SparseVector q = vectorize(text);
    double qsq = 0.0;
    for (const auto& [_, w] : q) qsq += w * w;
    const double qn = std::sqrt(qsq);
    std::vector<RetrievalHit> hits;
    hits.reserve(corpus_.size());
    for (std::size_t d = 0; d < corpus_.size(); ++d) {
      hits.push_back({d, cosine(q, qn, doc_vectors_[d], doc_norms_[d]), &corpus_[d]});
    }
    const std::size_t take = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(take), hits.end(),
                      [](const RetrievalHit& a, const RetrievalHit& b) {
                        if (a.score != b.score) return a.score > b.score;
                        return a.doc_id < b.doc_id;
                      });
    hits.resize(take);
    return hits;
  }

  static double cosine(const SparseVector& a, double a_norm, const SparseVector& b,
                       double b_norm) {
    if (a_norm == 0.0 || b_norm == 0.0) return 0.0;
    double dot = 0.0;
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
      if (i->first < j->first) {
        ++i;
      } else if (j->first < i->first) {
        ++j;
      } else {
        dot += i->second * j->second;
        ++i;
        ++j;
      }
    }
    return std::clamp(dot / (a_norm * b_norm), 0.0, 1.0);
  }

  std::size_t size() const { return corpus_.size(); }
  const std::vector<McqRecord>& corpus() const { return corpus_; }
  const std::map<std::string, TermId>& vocabulary() const { return vocabulary_; }
  const std::vector<std::string>& terms() const { return terms_; }
  const std::vector<std::size_t>& document_frequency() const { return document_frequency_; }
  const std::vector<double>& idf() const { return idf_; }
  const std::vector<SparseVector>& doc_vectors() const { return doc_vectors_; }
  const std::vector<double>& doc_norms() const { return doc_norms_; }

  std::map<std::string, double> idf_table() const {
    std::map<std::string, double> out;
    for (std::size_t i = 0; i < terms_.size(); ++i) out.emplace(terms_[i], idf_[i]);
    return out;
  }

  // -------------------------------------------------------------------------
  // Persistence: one JSON document carrying a format version.

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format_version"] = kFormatVersion;
    j["terms"] = terms_;
    j["document_frequency"] = document_frequency_;
    j["idf"] = idf_;
    j["doc_norms"] = doc_norms_;
    nlohmann::json vecs = nlohmann::json::array();
    for (const auto& v : doc_vectors_) {
      nlohmann::json row = nlohmann::json::array();
      for (const auto& [id, w] : v) row.push_back({id, w});
      vecs.push_back(std::move(row));
    }
    j["doc_vectors"] = std::move(vecs);
    nlohmann::json docs = nlohmann::json::array();
    for (const auto& m : corpus_) {
      nlohmann::ordered_json d;
      d["question"] = m.question;
      nlohmann::ordered_json opts = nlohmann::ordered_json::array();
      for (const auto& o : m.options) opts.push_back({o.label, o.text});
      d["options"] = std::move(opts);
      d["answer"] = m.correct_label;
      docs.push_back(nlohmann::json::parse(d.dump()));
    }
    j["corpus"] = std::move(docs);
    return j;
  }

  static TfidfIndex from_json(const nlohmann::json& j) {
    try {
      if (j.at("format_version").get<int>() != kFormatVersion) {
        throw ValidationError("index: unsupported format_version " +
                              j.at("format_version").dump());
      }
      TfidfIndex idx;
      idx.terms_ = j.at("terms").get<std::vector<std::string>>();
      idx.document_frequency_ = j.at("document_frequency").get<std::vector<std::size_t>>();
      idx.idf_ = j.at("idf").get<std::vector<double>>();
      idx.doc_norms_ = j.at("doc_norms").get<std::vector<double>>();
      for (const auto& row : j.at("doc_vectors")) {
        SparseVector v;
        for (const auto& e : row) v.emplace_back(e.at(0).get<TermId>(), e.at(1).get<double>());
        idx.doc_vectors_.push_back(std::move(v));
      }
      for (const auto& d : j.at("corpus")) {
        McqRecord m;
        m.question = d.at("question").get<std::string>();
        for (const auto& o : d.at("options")) {
          m.options.push_back({o.at(0).get<std::string>(), o.at(1).get<std::string>()});
        }
        m.correct_label = d.at("answer").get<std::string>();
        idx.corpus_.push_back(std::move(m));
      }
      for (std::size_t i = 0; i < idx.terms_.size(); ++i) {
        idx.vocabulary_.emplace(idx.terms_[i], static_cast<TermId>(i));
      }
      idx.check_invariants();
      return idx;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("index: malformed file: ") + e.what());
    }
  }

  void check_invariants() const {
    const std::size_t nt = terms_.size();
    if (document_frequency_.size() != nt || idf_.size() != nt || vocabulary_.size() != nt) {
      throw ValidationError("index: vocabulary tables disagree in size");
    }
    if (doc_vectors_.size() != corpus_.size() || doc_norms_.size() != corpus_.size()) {
      throw ValidationError("index: document tables disagree in size");
    }
    for (auto f : document_frequency_) {
      if (f < 1 || f > corpus_.size()) throw ValidationError("index: document frequency out of range");
    }
    for (std::size_t d = 0; d < doc_vectors_.size(); ++d) {
      double sq = 0.0;
      for (const auto& [id, w] : doc_vectors_[d]) {
        if (id >= nt) throw ValidationError("index: term id outside vocabulary");
        sq += w * w;
      }
      if (std::abs(std::sqrt(sq) - doc_norms_[d]) > 1e-9) {
        throw ValidationError("index: stored norm disagrees with vector");
      }
    }
  }

 private:
  std::vector<McqRecord> corpus_;
  std::map<std::string, TermId> vocabulary_;
  std::vector<std::string> terms_;
  std::vector<std::size_t> document_frequency_;
  std::vector<double> idf_;
  std::vector<SparseVector> doc_vectors_;
  std::vector<double> doc_norms_;
};

inline TfidfIndex build_index(std::vector<McqRecord> corpus) {
  return TfidfIndex::build(std::move(corpus));
}

}  // namespace medcorr
