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

// Metric-driven compilation of multi-stage programs.
//
// bootstrap_demos runs a zero-shot copy of the student over the training
// set and keeps each stage's inputs/outputs from traces that pass the
// metric. random_search_compile scores a zero-demo baseline plus seeded
// random demo subsets on the validation set. mipro_compile adds
// LM-proposed instructions and samples (instruction, demo subset) pairs
// independently and uniformly per stage.

#include <concepts>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcorr/corpus.hpp"
#include "medcorr/error.hpp"
#include "medcorr/gateway.hpp"
#include "medcorr/instruction_template.hpp"
#include "medcorr/metrics.hpp"
#include "medcorr/parallel.hpp"
#include "medcorr/prediction.hpp"
#include "medcorr/program.hpp"
#include "medcorr/random.hpp"

namespace medcorr {

struct MetricFn {
  std::string name;
  std::function<double(const ClinicalRecord& gold, const Prediction& outputs)> score;
  double pass_threshold = 1.0;
};

inline MetricFn flag_accuracy_metric() {
  return {"flag_accuracy",
          [](const ClinicalRecord& g, const Prediction& p) {
            return g.gold && g.gold->flag == p.flag ? 1.0 : 0.0;
          },
          1.0};
}

inline MetricFn sentence_exact_metric() {
  return {"sentence_exact_match",
          [](const ClinicalRecord& g, const Prediction& p) {
            return g.gold && g.gold->error_sentence_id == p.error_sentence_id ? 1.0 : 0.0;
          },
          1.0};
}

inline MetricFn correction_rouge_l_metric(double pass_threshold = 0.8) {
  return {"correction_rouge_l",
          [](const ClinicalRecord& g, const Prediction& p) {
            if (!g.gold) return 0.0;
            return composite_score(p.corrected_sentence, g.gold->correction,
                                   [](const std::string& c, const std::string& r) { return rouge_l_f(c, r); });
          },
          pass_threshold};
}

/// A compilable program set. stage_names() lists the stages whose demos and
/// instructions the optimizer may change; accepts() filters the records the
/// student may train or validate on.
template <class S>
concept Student = std::copy_constructible<S> &&
    requires(S& s, const S& cs, const ClinicalRecord& r, Gateway& g, const std::string& name) {
      { cs.stage_names() } -> std::convertible_to<std::vector<std::string>>;
      { s.program(name) } -> std::same_as<Program&>;
      { cs.program(name) } -> std::same_as<const Program&>;
      { cs.run(r, g) } -> std::same_as<Prediction>;
      { cs.accepts(r) } -> std::convertible_to<bool>;
    };

using DemoPools = std::map<std::string, std::vector<Demo>>;

struct CompileSettings {
  std::size_t max_demos = kDefaultMaxDemos;
  std::size_t demos_per_stage = kDefaultMaxDemos;
  std::size_t n_candidates = 16;
  std::size_t n_instruction_proposals = 5;
  std::size_t concurrency = 4;
  std::uint64_t seed = 0;
  std::string instruction_template = std::string(kInstructionProposalTemplate);
};

struct BootstrapResult {
  DemoPools pools;
  std::vector<std::string> trainset_ids;  // after the student's filter
  std::vector<std::string> passed_ids;
  std::vector<std::string> warnings;
};

struct Candidate {
  std::size_t candidate_id = 0;
  std::map<std::string, std::size_t> instruction_choice;  // index into proposals; 0 = original
  std::map<std::string, std::vector<std::size_t>> demo_indices;
  std::map<std::string, std::vector<std::string>> demo_sources;
  double validation_score = 0.0;
  std::map<std::string, double> per_example;  // record id -> score
};

struct CompileReport {
  std::string optimizer;
  std::string metric;
  std::vector<std::string> stages;
  std::uint64_t seed = 0;
  std::vector<std::string> trainset_ids;
  std::vector<std::string> valset_ids;
  std::map<std::string, std::vector<std::string>> pool_sources;
  std::map<std::string, std::vector<std::string>> proposals;
  std::vector<Candidate> candidates;
  std::size_t winner_id = 0;
  std::vector<std::string> warnings;

  const Candidate& winner() const { return candidates.at(winner_id); }
};

namespace detail {

template <Student S>
S zero_shot_copy(const S& student) {
  S teacher = student;
  for (const auto& name : student.stage_names()) {
    teacher.program(name).demos.clear();
    teacher.program(name).compiled_instruction.reset();
  }
  return teacher;
}

template <Student S>
std::vector<const ClinicalRecord*> accepted(const S& student, const std::vector<ClinicalRecord>& set) {
  std::vector<const ClinicalRecord*> out;
  for (const auto& r : set) {
    if (student.accepts(r)) out.push_back(&r);
  }
  return out;
}

template <Student S>
void score_candidate(const S& student, const std::vector<const ClinicalRecord*>& valset,
                     const MetricFn& metric, Gateway& gw, std::size_t concurrency, Candidate& cand) {
  std::vector<double> scores(valset.size(), 0.0);
  parallel_for(valset.size(), concurrency, [&](std::size_t i) {
    try {
      scores[i] = metric.score(*valset[i], student.run(*valset[i], gw));
    } catch (const StageError&) {
      scores[i] = 0.0;
    }
  });
  double sum = 0.0;
  for (std::size_t i = 0; i < valset.size(); ++i) {
    cand.per_example[valset[i]->record_id] = scores[i];
    sum += scores[i];
  }
  cand.validation_score = sum / static_cast<double>(valset.size());
}

inline std::size_t pick_winner(const std::vector<Candidate>& cands) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < cands.size(); ++i) {
    if (cands[i].validation_score > cands[best].validation_score) best = i;
  }
  return best;
}

template <Student S>
S apply_candidate(const S& student, const Candidate& c, const DemoPools& pools,
                  const std::map<std::string, std::vector<std::string>>& proposals) {
  S out = zero_shot_copy(student);
  for (const auto& name : student.stage_names()) {
    Program& p = out.program(name);
    if (auto it = c.demo_indices.find(name); it != c.demo_indices.end()) {
      const auto& pool = pools.at(name);
      for (auto idx : it->second) p.demos.push_back(pool.at(idx));
    }
    if (auto it = c.instruction_choice.find(name); it != c.instruction_choice.end() && it->second > 0) {
      p.compiled_instruction = proposals.at(name).at(it->second);
    }
  }
  return out;
}

}  // namespace detail

template <Student S>
BootstrapResult bootstrap_demos(const S& student, const std::vector<ClinicalRecord>& trainset,
                                const MetricFn& metric, std::size_t max_demos, Gateway& gw,
                                std::uint64_t seed) {
  if (max_demos < 1) throw ValidationError("bootstrap_demos: max_demos must be >= 1");
  const auto train = detail::accepted(student, trainset);
  if (train.empty()) throw ValidationError("bootstrap_demos: training set is empty after filtering");
  const S teacher = detail::zero_shot_copy(student);
  const auto stages = student.stage_names();
  BootstrapResult res;
  for (const auto& s : stages) res.pools[s];
  for (const auto* r : train) res.trainset_ids.push_back(r->record_id);

  auto all_full = [&] {
    for (const auto& s : stages) {
      if (res.pools[s].size() < max_demos) return false;
    }
    return true;
  };
  for (auto idx : seeded_permutation(train.size(), seed)) {
    if (all_full()) break;
    const ClinicalRecord& r = *train[idx];
    Prediction pred;
    try {
      pred = teacher.run(r, gw);
    } catch (const StageError&) {
      continue;
    } catch (const GatewayError& e) {
      throw GatewayError("bootstrap example '" + r.record_id + "': " + e.what());
    }
    if (metric.score(r, pred) < metric.pass_threshold) continue;
    res.passed_ids.push_back(r.record_id);
    for (const auto& s : stages) {
      const StageTrace* t = pred.find_stage(s);
      if (t == nullptr || res.pools[s].size() >= max_demos) continue;
      res.pools[s].push_back({t->inputs, t->outputs, r.record_id});
    }
  }
  for (const auto& s : stages) {
    if (res.pools[s].empty()) {
      res.warnings.push_back("stage '" + s + "': no demos bootstrapped; compiling zero-shot");
    }
  }
  return res;
}

template <Student S>
std::pair<S, CompileReport> random_search_compile(const S& student, const DemoPools& pools,
                                                  const std::vector<ClinicalRecord>& valset,
                                                  const MetricFn& metric, std::size_t n_candidates,
                                                  std::size_t demos_per_stage, std::uint64_t seed,
                                                  Gateway& gw, std::size_t concurrency = 4) {
  if (n_candidates < 1) throw ValidationError("random_search_compile: n_candidates must be >= 1");
  const auto val = detail::accepted(student, valset);
  if (val.empty()) throw ValidationError("random_search_compile: validation set is empty");
  CompileReport rep;
  rep.optimizer = "random_search";
  rep.metric = metric.name;
  rep.stages = student.stage_names();
  rep.seed = seed;
  for (const auto* r : val) rep.valset_ids.push_back(r->record_id);
  for (const auto& [s, pool] : pools) {
    for (const auto& d : pool) rep.pool_sources[s].push_back(d.source_id);
  }

  SeededSampler sampler(seed);
  for (std::size_t c = 0; c < n_candidates; ++c) {
    Candidate cand;
    cand.candidate_id = c;
    if (c > 0) {
      for (const auto& s : rep.stages) {
        auto it = pools.find(s);
        const std::size_t n = it == pools.end() ? 0 : it->second.size();
        const std::size_t k = std::min({demos_per_stage, n, student.program(s).max_demos});
        cand.demo_indices[s] = sampler.sample(n, k);
        for (auto i : cand.demo_indices[s]) cand.demo_sources[s].push_back(it->second[i].source_id);
      }
    }
    rep.candidates.push_back(std::move(cand));
  }
  for (auto& cand : rep.candidates) {
    const S trial = detail::apply_candidate(student, cand, pools, {});
    detail::score_candidate(trial, val, metric, gw, concurrency, cand);
  }
  rep.winner_id = detail::pick_winner(rep.candidates);
  return {detail::apply_candidate(student, rep.winner(), pools, {}), std::move(rep)};
}

/// Asks the LM for n_proposals task instructions. The original instruction
/// is always proposal 0; empty and duplicate proposals are dropped.
inline std::vector<std::string> propose_instructions(const Signature& signature,
                                                     const std::vector<Demo>& sample_demos, Gateway& gw,
                                                     std::size_t n_proposals,
                                                     std::vector<std::string>* warnings = nullptr,
                                                     std::string_view meta_template =
                                                         kInstructionProposalTemplate) {
  if (n_proposals < 1) throw ValidationError("propose_instructions: n_proposals must be >= 1");
  std::vector<std::string> out{signature.instruction};
  Program shape;
  shape.signature = signature;
  for (std::size_t i = 0; i < n_proposals; ++i) {
    std::string user = "Task name: " + signature.name + "\n";
    user += "Current instruction: " + signature.instruction + "\n";
    user += "Input fields:";
    for (const auto& f : signature.inputs) user += "\n- " + field_label(f.name) + ": " + f.description;
    user += "\nOutput fields:";
    for (const auto& f : signature.outputs) user += "\n- " + field_label(f.name) + ": " + f.description;
    user += "\n\nExample demonstrations:";
    if (sample_demos.empty()) user += "\n(none)";
    for (const auto& d : sample_demos) {
      shape.strategy = d.outputs.contains(std::string(kRationaleField)) ? Strategy::kChainOfThought
                                                                         : Strategy::kPredict;
      user += "\n\n" + render_demo(shape, d);
    }
    user += "\n\nProposal " + std::to_string(i + 1) + " of " + std::to_string(n_proposals) + ".";
    user += "\nTip: " + std::string(kProposalTips[i % std::size(kProposalTips)]);
    user += "\n\nProposed Instruction:";
    const auto resp = gw.complete(gw.make_request({{"system", std::string(meta_template)}, {"user", user}}));
    std::string_view text = resp.text;
    if (auto pos = ascii_lower(text).find("proposed instruction:"); pos != std::string::npos) {
      text = text.substr(pos + std::string_view("proposed instruction:").size());
    }
    const std::string candidate(trim(text));
    if (candidate.empty()) continue;
    if (std::find(out.begin(), out.end(), candidate) != out.end()) continue;
    out.push_back(candidate);
  }
  if (out.size() == 1 && warnings != nullptr) {
    warnings->push_back("signature '" + signature.name +
                        "': every proposal was empty or a duplicate; keeping the original instruction");
  }
  return out;
}

template <Student S>
std::pair<S, CompileReport> mipro_compile(const S& student, const std::vector<ClinicalRecord>& trainset,
                                          const std::vector<ClinicalRecord>& valset, const MetricFn& metric,
                                          const CompileSettings& settings, Gateway& gw) {
  if (settings.n_instruction_proposals < 1 || settings.n_candidates < 1) {
    throw ValidationError("mipro_compile: budgets must be >= 1");
  }
  const auto val = detail::accepted(student, valset);
  if (val.empty()) throw ValidationError("mipro_compile: validation set is empty");
  BootstrapResult boot = bootstrap_demos(student, trainset, metric, settings.max_demos, gw, settings.seed);

  CompileReport rep;
  rep.optimizer = "mipro";
  rep.metric = metric.name;
  rep.stages = student.stage_names();
  rep.seed = settings.seed;
  rep.trainset_ids = boot.trainset_ids;
  rep.warnings = boot.warnings;
  for (const auto* r : val) rep.valset_ids.push_back(r->record_id);
  for (const auto& [s, pool] : boot.pools) {
    for (const auto& d : pool) rep.pool_sources[s].push_back(d.source_id);
  }
  for (const auto& s : rep.stages) {
    const auto& pool = boot.pools[s];
    std::vector<Demo> sample(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(3, pool.size())));
    rep.proposals[s] = propose_instructions(student.program(s).signature, sample, gw,
                                            settings.n_instruction_proposals, &rep.warnings,
                                            settings.instruction_template);
  }

  SeededSampler sampler(settings.seed);
  for (std::size_t c = 0; c < settings.n_candidates; ++c) {
    Candidate cand;
    cand.candidate_id = c;
    for (const auto& s : rep.stages) {
      cand.instruction_choice[s] = 0;
      if (c == 0) continue;
      cand.instruction_choice[s] = sampler.below(rep.proposals[s].size());
      const auto& pool = boot.pools[s];
      const std::size_t k = std::min({settings.demos_per_stage, pool.size(), student.program(s).max_demos});
      cand.demo_indices[s] = sampler.sample(pool.size(), k);
      for (auto i : cand.demo_indices[s]) cand.demo_sources[s].push_back(pool[i].source_id);
    }
    rep.candidates.push_back(std::move(cand));
  }
  for (auto& cand : rep.candidates) {
    const S trial = detail::apply_candidate(student, cand, boot.pools, rep.proposals);
    detail::score_candidate(trial, val, metric, gw, settings.concurrency, cand);
  }
  rep.winner_id = detail::pick_winner(rep.candidates);
  return {detail::apply_candidate(student, rep.winner(), boot.pools, rep.proposals), std::move(rep)};
}

/// Bootstrap followed by random search, the full few-shot compile.
template <Student S>
std::pair<S, CompileReport> bootstrap_random_search(const S& student, const std::vector<ClinicalRecord>& trainset,
                                                    const std::vector<ClinicalRecord>& valset,
                                                    const MetricFn& metric, const CompileSettings& settings,
                                                    Gateway& gw) {
  BootstrapResult boot = bootstrap_demos(student, trainset, metric, settings.max_demos, gw, settings.seed);
  auto [compiled, rep] = random_search_compile(student, boot.pools, valset, metric, settings.n_candidates,
                                               settings.demos_per_stage, settings.seed, gw,
                                               settings.concurrency);
  rep.trainset_ids = boot.trainset_ids;
  rep.warnings.insert(rep.warnings.begin(), boot.warnings.begin(), boot.warnings.end());
  return {std::move(compiled), std::move(rep)};
}

inline nlohmann::ordered_json to_json(const CompileReport& r) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["optimizer"] = r.optimizer;
  j["metric"] = r.metric;
  j["stages"] = r.stages;
  j["seed"] = r.seed;
  j["trainset_ids"] = r.trainset_ids;
  j["valset_ids"] = r.valset_ids;
  j["pool_sources"] = r.pool_sources;
  j["proposals"] = r.proposals;
  j["winner_id"] = r.winner_id;
  j["warnings"] = r.warnings;
  j["candidates"] = nlohmann::ordered_json::array();
  for (const auto& c : r.candidates) {
    nlohmann::ordered_json cj;
    cj["candidate_id"] = c.candidate_id;
    cj["validation_score"] = c.validation_score;
    cj["instruction_choice"] = c.instruction_choice;
    cj["demo_indices"] = c.demo_indices;
    cj["demo_sources"] = c.demo_sources;
    cj["per_example"] = c.per_example;
    j["candidates"].push_back(std::move(cj));
  }
  return j;
}

}  // namespace medcorr
