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

// The two end-to-end systems.
//
// MS (retrieval-grounded): retrieve the most similar multiple-choice
// question, extract the answer choice the record implies, compare it with
// the question's correct answer, then localize the sentence carrying that
// choice and rewrite it around the correct answer.
//
// UW (three-stage): detect, localize, correct, then a ROUGE-L quality gate
// that falls back to the original sentence when the rewrite drifts.

#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcorr/corpus.hpp"
#include "medcorr/error.hpp"
#include "medcorr/gateway.hpp"
#include "medcorr/metrics.hpp"
#include "medcorr/optimize.hpp"
#include "medcorr/parallel.hpp"
#include "medcorr/prediction.hpp"
#include "medcorr/program.hpp"
#include "medcorr/retrieval.hpp"

namespace medcorr {

inline constexpr double kDefaultGateThreshold = 0.7;

// ---------------------------------------------------------------------------
// Quality gate

struct GateResult {
  std::string sentence;
  bool gated = false;
  double score = 0.0;
};

/// Keeps the candidate unless ROUGE-L-F(candidate, original) is strictly
/// below the threshold; then the original sentence comes back instead.
inline GateResult quality_gate(const std::string& original, const std::string& candidate, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ValidationError("quality_gate: threshold must be in [0,1]");
  }
  const double score = rouge_l_f(candidate, original);
  if (score < threshold) return {original, true, score};
  return {candidate, false, score};
}

// ---------------------------------------------------------------------------
// Reading stage outputs

/// First recognised token decides: 1/yes/true/error/mismatch -> 1,
/// 0/no/false/none/match -> 0.
inline std::optional<int> interpret_flag(std::string_view value) {
  static const std::set<std::string> yes{"1", "yes", "true", "error", "mismatch", "different", "incorrect", "wrong"};
  static const std::set<std::string> no{"0", "no", "false", "none", "match", "same", "correct", "consistent"};
  for (const auto& t : tokenize(value)) {
    if (yes.contains(t)) return 1;
    if (no.contains(t)) return 0;
  }
  return std::nullopt;
}

/// First integer in the value, sign included.
inline std::optional<int> interpret_sentence_id(std::string_view value) {
  static const std::regex num(R"(-?\d+)");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(value.begin(), value.end(), m, num)) return std::nullopt;
  try {
    return std::stoi(m.str());
  } catch (const std::out_of_range&) {
    return std::nullopt;
  }
}

// ---------------------------------------------------------------------------
// Stage programs

inline Program make_program(std::string name, std::string instruction, std::vector<Field> inputs,
                            std::vector<Field> outputs, Strategy strategy) {
  Program p;
  p.signature = {std::move(name), std::move(instruction), std::move(inputs), std::move(outputs)};
  p.strategy = strategy;
  p.signature.validate();
  return p;
}

inline Program ms_extract_choice_program() {
  return make_program(
      "extract_choice",
      "You are given a clinical text and a similar multiple-choice medical question with its answer "
      "options. Identify the answer choice that the clinical text itself asserts, i.e. the finding, "
      "diagnosis, pathogen, drug or procedure the text commits to that plays the role of the question's "
      "answer.",
      {{"clinical_text", "the clinical text to audit"},
       {"question", "the most similar multiple-choice question"},
       {"options", "the question's answer options, one per line"}},
      {{"implicit_choice", "the answer choice asserted by the clinical text, worded as in the text"}},
      Strategy::kChainOfThought);
}

inline Program ms_compare_answer_program() {
  return make_program(
      "compare_answer",
      "Compare the answer choice asserted by a clinical text with the correct answer of a similar "
      "multiple-choice question. Decide whether they denote the same thing.",
      {{"question", "the similar multiple-choice question"},
       {"implicit_choice", "the answer choice asserted by the clinical text"},
       {"correct_answer", "the correct answer of the question"}},
      {{"verdict", "'match' if they denote the same thing, otherwise 'mismatch'"}},
      Strategy::kChainOfThought);
}

inline Program ms_localize_program() {
  return make_program(
      "localize",
      "Given numbered sentences of a clinical text and an erroneous answer choice, find the sentence that "
      "most closely matches the erroneous answer choice.",
      {{"numbered_sentences", "one sentence per line, prefixed with its number"},
       {"implicit_choice", "the erroneous answer choice"}},
      {{"sentence_id", "the number of the matching sentence"}}, Strategy::kPredict);
}

inline Program ms_correct_program() {
  return make_program(
      "correct",
      "Rewrite the erroneous sentence so that it states the correct answer instead of the erroneous answer "
      "choice. Change as little as possible.",
      {{"error_sentence", "the sentence containing the error"},
       {"implicit_choice", "the erroneous answer choice found in the sentence"},
       {"correct_answer", "the correct answer to use instead"}},
      {{"corrected_sentence", "the corrected sentence"}}, Strategy::kChainOfThought);
}

inline Program uw_detect_program() {
  return make_program(
      "detect",
      "Read the clinical note. It is either correct or contains exactly one medical error (a wrong "
      "diagnosis, finding, medication, dose or management step given the rest of the note). Decide "
      "whether it contains an error.",
      {{"clinical_text", "the clinical note"}},
      {{"error_flag", "1 if the note contains a medical error, otherwise 0"}}, Strategy::kChainOfThought);
}

inline Program uw_localize_program() {
  return make_program(
      "localize",
      "The clinical note below contains exactly one medical error. Find the sentence that contains it.",
      {{"numbered_sentences", "one sentence per line, prefixed with its number"}},
      {{"sentence_id", "the number of the sentence containing the error"}}, Strategy::kChainOfThought);
}

inline Program uw_correct_program() {
  return make_program(
      "correct",
      "The given sentence of the clinical note contains a medical error. Rewrite the sentence with the "
      "error corrected, keeping every other word unchanged.",
      {{"clinical_text", "the full clinical note for context"},
       {"error_sentence", "the sentence containing the error"}},
      {{"corrected_sentence", "the corrected sentence"}}, Strategy::kChainOfThought);
}

// ---------------------------------------------------------------------------
// Pipelines

struct MsPipeline {
  std::shared_ptr<const TfidfIndex> index;
  Program extract_choice = ms_extract_choice_program();
  Program compare_answer = ms_compare_answer_program();
  Program localize = ms_localize_program();  // never compiled
  Program correct = ms_correct_program();
  bool gate_enabled = false;
  double gate_threshold = kDefaultGateThreshold;

  static std::vector<std::string> all_stages() {
    return {"extract_choice", "compare_answer", "localize", "correct"};
  }

  Program& program(const std::string& name) {
    return const_cast<Program&>(std::as_const(*this).program(name));
  }
  const Program& program(const std::string& name) const {
    if (name == "extract_choice") return extract_choice;
    if (name == "compare_answer") return compare_answer;
    if (name == "localize") return localize;
    if (name == "correct") return correct;
    throw ValidationError("ms pipeline has no stage '" + name + "'");
  }

  void validate() const {
    for (const auto& s : all_stages()) program(s).validate();
    if (!localize.demos.empty()) throw ValidationError("ms pipeline: localize stage must carry zero demos");
    if (!(gate_threshold >= 0.0 && gate_threshold <= 1.0)) {
      throw ValidationError("ms pipeline: gate_threshold must be in [0,1]");
    }
  }
};

struct UwPipeline {
  Program detect = uw_detect_program();
  Program localize = uw_localize_program();
  Program correct = uw_correct_program();
  double gate_threshold = kDefaultGateThreshold;

  static std::vector<std::string> all_stages() { return {"detect", "localize", "correct"}; }

  Program& program(const std::string& name) {
    return const_cast<Program&>(std::as_const(*this).program(name));
  }
  const Program& program(const std::string& name) const {
    if (name == "detect") return detect;
    if (name == "localize") return localize;
    if (name == "correct") return correct;
    throw ValidationError("uw pipeline has no stage '" + name + "'");
  }

  void validate() const {
    for (const auto& s : all_stages()) program(s).validate();
    if (!(gate_threshold >= 0.0 && gate_threshold <= 1.0)) {
      throw ValidationError("uw pipeline: gate_threshold must be in [0,1]");
    }
  }
};

namespace detail {

inline std::string excerpt(std::string_view s, std::size_t n = 200) {
  return s.size() <= n ? std::string(s) : std::string(s.substr(0, n)) + "...";
}

inline const FieldMap& run_stage(const std::string& stage, const Program& program, FieldMap inputs,
                                 Gateway& gw, Prediction& pred) {
  try {
    RunResult rr = run(program, inputs, gw);
    pred.trace.push_back({stage, std::move(inputs), std::move(rr.outputs), std::move(rr.raw), rr.attempts,
                          std::move(rr.calls)});
  } catch (const ParseError& e) {
    throw StageError(stage, std::string(e.what()) + "; raw completion: " + excerpt(e.raw()));
  } catch (const ValidationError& e) {
    throw StageError(stage, e.what());
  }
  return pred.trace.back().outputs;
}

inline int stage_flag(const std::string& stage, const FieldMap& out, const std::string& field) {
  const auto v = interpret_flag(out.at(field));
  if (!v) throw StageError(stage, "cannot read a yes/no answer from '" + excerpt(out.at(field), 80) + "'");
  return *v;
}

inline int stage_sentence(const std::string& stage, const FieldMap& out, const ClinicalRecord& r) {
  const auto v = interpret_sentence_id(out.at("sentence_id"));
  if (!v) throw StageError(stage, "no sentence number in '" + excerpt(out.at("sentence_id"), 80) + "'");
  if (r.find_sentence(*v) == nullptr) {
    throw StageError(stage, "sentence id " + std::to_string(*v) + " is not in record '" + r.record_id + "'");
  }
  return *v;
}

inline std::string options_text(const McqRecord& m) {
  std::string s;
  for (const auto& o : m.options) {
    if (!s.empty()) s.push_back('\n');
    s += o.label + ". " + o.text;
  }
  return s;
}

struct MsContext {
  const McqRecord* mcq = nullptr;
  std::string implicit_choice;
};

inline const McqRecord& ms_retrieve(const MsPipeline& p, const ClinicalRecord& r, Prediction& pred) {
  if (!p.index) throw ValidationError("ms pipeline: no retrieval index loaded");
  const auto hits = p.index->query(r.text, 1);
  const auto& h = hits.front();
  StageTrace t;
  t.stage = "retrieve";
  t.inputs = {{"query", r.text}};
  t.outputs = {{"doc_id", std::to_string(h.doc_id)},
               {"score", nlohmann::json(h.score).dump()},
               {"question", h.record->question},
               {"correct_answer", h.record->correct_option().text}};
  pred.trace.push_back(std::move(t));
  return *h.record;
}

inline std::string ms_extract(const MsPipeline& p, const ClinicalRecord& r, const McqRecord& m, Gateway& gw,
                              Prediction& pred) {
  return run_stage("extract_choice", p.extract_choice,
                   {{"clinical_text", r.text}, {"question", m.question}, {"options", options_text(m)}}, gw, pred)
      .at("implicit_choice");
}

inline int ms_compare(const MsPipeline& p, const McqRecord& m, const std::string& choice, Gateway& gw,
                      Prediction& pred) {
  const auto& out = run_stage("compare_answer", p.compare_answer,
                              {{"question", m.question},
                               {"implicit_choice", choice},
                               {"correct_answer", m.correct_option().text}},
                              gw, pred);
  return stage_flag("compare_answer", out, "verdict");
}

inline std::string ms_rewrite(const MsPipeline& p, const std::string& sentence, const std::string& choice,
                              const McqRecord& m, Gateway& gw, Prediction& pred) {
  return run_stage("correct", p.correct,
                   {{"error_sentence", sentence},
                    {"implicit_choice", choice},
                    {"correct_answer", m.correct_option().text}},
                   gw, pred)
      .at("corrected_sentence");
}

}  // namespace detail

inline Prediction ms_predict(const MsPipeline& p, const ClinicalRecord& r, Gateway& gw) {
  Prediction pred;
  pred.record_id = r.record_id;
  const McqRecord& mcq = detail::ms_retrieve(p, r, pred);
  const std::string choice = detail::ms_extract(p, r, mcq, gw, pred);
  pred.flag = detail::ms_compare(p, mcq, choice, gw, pred);
  if (pred.flag == 0) return pred;

  const auto& loc = detail::run_stage("localize", p.localize,
                                      {{"numbered_sentences", numbered_text(r)}, {"implicit_choice", choice}},
                                      gw, pred);
  pred.error_sentence_id = detail::stage_sentence("localize", loc, r);
  const std::string& original = r.find_sentence(pred.error_sentence_id)->text;
  std::string corrected = detail::ms_rewrite(p, original, choice, mcq, gw, pred);
  if (p.gate_enabled) {
    auto g = quality_gate(original, corrected, p.gate_threshold);
    corrected = std::move(g.sentence);
    pred.gated = g.gated;
  }
  pred.corrected_sentence = std::move(corrected);
  check_prediction(pred, r);
  return pred;
}

inline Prediction uw_predict(const UwPipeline& p, const ClinicalRecord& r, Gateway& gw) {
  Prediction pred;
  pred.record_id = r.record_id;
  const auto& det = detail::run_stage("detect", p.detect, {{"clinical_text", r.text}}, gw, pred);
  pred.flag = detail::stage_flag("detect", det, "error_flag");
  if (pred.flag == 0) return pred;

  const auto& loc = detail::run_stage("localize", p.localize, {{"numbered_sentences", numbered_text(r)}}, gw, pred);
  pred.error_sentence_id = detail::stage_sentence("localize", loc, r);
  const std::string& original = r.find_sentence(pred.error_sentence_id)->text;
  const auto& cor = detail::run_stage("correct", p.correct,
                                      {{"clinical_text", r.text}, {"error_sentence", original}}, gw, pred);
  auto g = quality_gate(original, cor.at("corrected_sentence"), p.gate_threshold);
  pred.corrected_sentence = std::move(g.sentence);
  pred.gated = g.gated;
  check_prediction(pred, r);
  return pred;
}

inline Prediction predict(const MsPipeline& p, const ClinicalRecord& r, Gateway& gw) { return ms_predict(p, r, gw); }
inline Prediction predict(const UwPipeline& p, const ClinicalRecord& r, Gateway& gw) { return uw_predict(p, r, gw); }

/// Predictions in input order. Stage failures become flag-0 entries marked
/// failed unless strict is set; gateway errors always propagate.
template <class P>
std::vector<Prediction> predict_batch(const P& pipeline, const std::vector<ClinicalRecord>& records, Gateway& gw,
                                      std::size_t concurrency, bool strict = false) {
  std::vector<Prediction> out(records.size());
  parallel_for(records.size(), concurrency, [&](std::size_t i) {
    try {
      out[i] = predict(pipeline, records[i], gw);
    } catch (const StageError& e) {
      if (strict) throw;
      Prediction f;
      f.record_id = records[i].record_id;
      f.failed = true;
      f.error = e.what();
      out[i] = std::move(f);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Students: the views of a pipeline that the optimizer compiles

/// Joint extract_choice + compare_answer, scored on the error flag.
struct MsDetectStudent {
  MsPipeline pipeline;
  std::vector<std::string> stage_names() const { return {"extract_choice", "compare_answer"}; }
  Program& program(const std::string& n) { return pipeline.program(n); }
  const Program& program(const std::string& n) const { return pipeline.program(n); }
  bool accepts(const ClinicalRecord& r) const { return r.gold.has_value(); }
  Prediction run(const ClinicalRecord& r, Gateway& gw) const {
    Prediction pred;
    pred.record_id = r.record_id;
    const McqRecord& mcq = detail::ms_retrieve(pipeline, r, pred);
    const std::string choice = detail::ms_extract(pipeline, r, mcq, gw, pred);
    pred.flag = detail::ms_compare(pipeline, mcq, choice, gw, pred);
    return pred;
  }
};

/// Correction stage on gold error sentences; error records only.
struct MsCorrectStudent {
  MsPipeline pipeline;
  std::vector<std::string> stage_names() const { return {"correct"}; }
  Program& program(const std::string& n) { return pipeline.program(n); }
  const Program& program(const std::string& n) const { return pipeline.program(n); }
  bool accepts(const ClinicalRecord& r) const { return r.gold && r.gold->flag == 1; }
  Prediction run(const ClinicalRecord& r, Gateway& gw) const {
    Prediction pred;
    pred.record_id = r.record_id;
    pred.flag = 1;
    pred.error_sentence_id = r.gold->error_sentence_id;
    const McqRecord& mcq = detail::ms_retrieve(pipeline, r, pred);
    const std::string choice = detail::ms_extract(pipeline, r, mcq, gw, pred);
    pred.corrected_sentence =
        detail::ms_rewrite(pipeline, r.find_sentence(pred.error_sentence_id)->text, choice, mcq, gw, pred);
    return pred;
  }
};

struct UwDetectStudent {
  UwPipeline pipeline;
  std::vector<std::string> stage_names() const { return {"detect"}; }
  Program& program(const std::string& n) { return pipeline.program(n); }
  const Program& program(const std::string& n) const { return pipeline.program(n); }
  bool accepts(const ClinicalRecord& r) const { return r.gold.has_value(); }
  Prediction run(const ClinicalRecord& r, Gateway& gw) const {
    Prediction pred;
    pred.record_id = r.record_id;
    const auto& det = detail::run_stage("detect", pipeline.detect, {{"clinical_text", r.text}}, gw, pred);
    pred.flag = detail::stage_flag("detect", det, "error_flag");
    return pred;
  }
};

struct UwLocalizeStudent {
  UwPipeline pipeline;
  std::vector<std::string> stage_names() const { return {"localize"}; }
  Program& program(const std::string& n) { return pipeline.program(n); }
  const Program& program(const std::string& n) const { return pipeline.program(n); }
  bool accepts(const ClinicalRecord& r) const { return r.gold && r.gold->flag == 1; }
  Prediction run(const ClinicalRecord& r, Gateway& gw) const {
    Prediction pred;
    pred.record_id = r.record_id;
    pred.flag = 1;
    const auto& loc =
        detail::run_stage("localize", pipeline.localize, {{"numbered_sentences", numbered_text(r)}}, gw, pred);
    pred.error_sentence_id = detail::stage_sentence("localize", loc, r);
    return pred;
  }
};

struct UwCorrectStudent {
  UwPipeline pipeline;
  std::vector<std::string> stage_names() const { return {"correct"}; }
  Program& program(const std::string& n) { return pipeline.program(n); }
  const Program& program(const std::string& n) const { return pipeline.program(n); }
  bool accepts(const ClinicalRecord& r) const { return r.gold && r.gold->flag == 1; }
  Prediction run(const ClinicalRecord& r, Gateway& gw) const {
    Prediction pred;
    pred.record_id = r.record_id;
    pred.flag = 1;
    pred.error_sentence_id = r.gold->error_sentence_id;
    const std::string& original = r.find_sentence(pred.error_sentence_id)->text;
    const auto& cor = detail::run_stage("correct", pipeline.correct,
                                        {{"clinical_text", r.text}, {"error_sentence", original}}, gw, pred);
    pred.corrected_sentence = cor.at("corrected_sentence");
    return pred;
  }
};

static_assert(Student<MsDetectStudent> && Student<MsCorrectStudent> && Student<UwDetectStudent> &&
              Student<UwLocalizeStudent> && Student<UwCorrectStudent>);

// ---------------------------------------------------------------------------
// Whole-pipeline compilation

enum class Optimizer { kRandomSearch, kMipro };

struct PassThresholds {
  double binary = 1.0;
  double rouge_l = 0.8;
};

template <Student S>
std::pair<S, CompileReport> compile_student(const S& student, const std::vector<ClinicalRecord>& train,
                                            const std::vector<ClinicalRecord>& val, const MetricFn& metric,
                                            const CompileSettings& settings, Optimizer opt, Gateway& gw) {
  if (opt == Optimizer::kMipro) return mipro_compile(student, train, val, metric, settings, gw);
  return bootstrap_random_search(student, train, val, metric, settings, gw);
}

/// extract_choice and compare_answer are bootstrapped together on flag
/// accuracy; correct is compiled afterwards on ROUGE-L; localize stays
/// zero-shot.
inline std::pair<MsPipeline, std::vector<CompileReport>> compile_ms(
    const MsPipeline& pipeline, const std::vector<ClinicalRecord>& train, const std::vector<ClinicalRecord>& val,
    const CompileSettings& settings, Gateway& gw, Optimizer opt = Optimizer::kRandomSearch,
    PassThresholds thresholds = {}) {
  std::vector<CompileReport> reports;
  MetricFn flag = flag_accuracy_metric();
  flag.pass_threshold = thresholds.binary;
  auto [det, r1] = compile_student(MsDetectStudent{pipeline}, train, val, flag, settings, opt, gw);
  reports.push_back(std::move(r1));
  auto [cor, r2] = compile_student(MsCorrectStudent{det.pipeline}, train, val,
                                   correction_rouge_l_metric(thresholds.rouge_l), settings, opt, gw);
  reports.push_back(std::move(r2));
  MsPipeline out = cor.pipeline;
  out.validate();
  return {std::move(out), std::move(reports)};
}

/// Each stage compiled on its own metric; localize and correct see only
/// records that contain an error.
inline std::pair<UwPipeline, std::vector<CompileReport>> compile_uw(
    const UwPipeline& pipeline, const std::vector<ClinicalRecord>& train, const std::vector<ClinicalRecord>& val,
    const CompileSettings& settings, Gateway& gw, Optimizer opt = Optimizer::kMipro, PassThresholds thresholds = {}) {
  std::vector<CompileReport> reports;
  UwPipeline out = pipeline;
  MetricFn flag = flag_accuracy_metric();
  flag.pass_threshold = thresholds.binary;
  MetricFn exact = sentence_exact_metric();
  exact.pass_threshold = thresholds.binary;

  auto [d, rd] = compile_student(UwDetectStudent{out}, train, val, flag, settings, opt, gw);
  out.detect = d.pipeline.detect;
  reports.push_back(std::move(rd));
  auto [l, rl] = compile_student(UwLocalizeStudent{out}, train, val, exact, settings, opt, gw);
  out.localize = l.pipeline.localize;
  reports.push_back(std::move(rl));
  auto [c, rc] = compile_student(UwCorrectStudent{out}, train, val, correction_rouge_l_metric(thresholds.rouge_l),
                                 settings, opt, gw);
  out.correct = c.pipeline.correct;
  reports.push_back(std::move(rc));
  out.validate();
  return {std::move(out), std::move(reports)};
}

// ---------------------------------------------------------------------------
// Compiled pipeline documents

inline nlohmann::ordered_json to_json(const MsPipeline& p) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["kind"] = "ms";
  j["gate_enabled"] = p.gate_enabled;
  j["gate_threshold"] = p.gate_threshold;
  for (const auto& s : MsPipeline::all_stages()) j["stages"][s] = to_json(p.program(s));
  return j;
}

inline nlohmann::ordered_json to_json(const UwPipeline& p) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["kind"] = "uw";
  j["gate_threshold"] = p.gate_threshold;
  for (const auto& s : UwPipeline::all_stages()) j["stages"][s] = to_json(p.program(s));
  return j;
}

template <class P>
P pipeline_from_json(const nlohmann::ordered_json& j, std::string_view kind) {
  try {
    if (j.at("format_version").get<int>() != 1) throw ValidationError("pipeline: unsupported format_version");
    if (j.at("kind").get<std::string>() != kind) {
      throw ValidationError("pipeline: document is a '" + j.at("kind").get<std::string>() + "' pipeline, expected '" +
                            std::string(kind) + "'");
    }
    P p;
    p.gate_threshold = j.at("gate_threshold").get<double>();
    if constexpr (std::is_same_v<P, MsPipeline>) p.gate_enabled = j.value("gate_enabled", false);
    for (const auto& s : P::all_stages()) p.program(s) = program_from_json(j.at("stages").at(s));
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("pipeline: malformed document: ") + e.what());
  }
}

}  // namespace medcorr
