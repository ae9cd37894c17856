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

#include <gtest/gtest.h>

#include "medcorr/optimize.hpp"
#include "medcorr/pipelines.hpp"
#include "support.hpp"

using namespace medcorr;

namespace {

using Records = std::vector<ClinicalRecord>;

/// detect responder: `right(k, req)` decides whether record k is answered
/// with its gold flag or the opposite one.
ScriptedBackend::Responder detect_responder(const Records& all,
                                            std::function<bool(std::size_t, const LmRequest&)> right) {
  return [&all, right](const LmRequest& req) {
    const auto k = support::case_marker(support::live_block(req)).value();
    const int gold = all.at(k).gold->flag;
    const int flag = right(k, req) ? gold : 1 - gold;
    return "Rationale: looked at it.\nError Flag: " + std::to_string(flag);
  };
}

bool has_demos(const LmRequest& req) { return req.messages.back().content.find("\n---\n") != std::string::npos; }

Records slice(const Records& all, std::size_t b, std::size_t e) { return {all.begin() + b, all.begin() + e}; }

}  // namespace

TEST(Bootstrap, EveryPassingExampleFillsThePool) {
  const auto all = support::synthetic_records(5, 1);
  auto gw = make_scripted_gateway(support::GoldOracle(all));
  const auto res = bootstrap_demos(UwDetectStudent{}, all, flag_accuracy_metric(), 20, *gw, 0);
  EXPECT_EQ(res.pools.at("detect").size(), 5u);
  EXPECT_EQ(res.passed_ids.size(), 5u);
  EXPECT_TRUE(res.warnings.empty());
  for (const auto& d : res.pools.at("detect")) {
    EXPECT_TRUE(d.inputs.contains("clinical_text"));
    EXPECT_TRUE(d.outputs.contains("error_flag"));
    EXPECT_TRUE(d.outputs.contains("rationale"));
  }
}

TEST(Bootstrap, NothingPassesMeansEmptyPoolAndWarning) {
  const auto all = support::synthetic_records(6, 2);
  auto gw = make_scripted_gateway(detect_responder(all, [](std::size_t, const LmRequest&) { return false; }));
  const auto res = bootstrap_demos(UwDetectStudent{}, all, flag_accuracy_metric(), 20, *gw, 0);
  EXPECT_TRUE(res.pools.at("detect").empty());
  ASSERT_EQ(res.warnings.size(), 1u);
  EXPECT_NE(res.warnings[0].find("detect"), std::string::npos);
}

TEST(Bootstrap, PoolCapAndProvenance) {
  const auto all = support::synthetic_records(12, 3);
  auto gw = make_scripted_gateway(detect_responder(all, [](std::size_t k, const LmRequest&) { return k < 8; }));
  const auto res = bootstrap_demos(UwDetectStudent{}, all, flag_accuracy_metric(), 4, *gw, 5);
  const auto& pool = res.pools.at("detect");
  ASSERT_EQ(pool.size(), 4u);
  for (const auto& d : pool) {
    EXPECT_LT(std::stoul(d.source_id.substr(4)), 8u) << d.source_id;
  }
  // same seed, same pool
  const auto again = bootstrap_demos(UwDetectStudent{}, all, flag_accuracy_metric(), 4, *gw, 5);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(again.pools.at("detect")[i].source_id, pool[i].source_id);
}

TEST(Bootstrap, RejectsBadArguments) {
  const auto all = support::synthetic_records(3, 4);
  auto gw = make_scripted_gateway(support::GoldOracle(all));
  EXPECT_THROW(bootstrap_demos(UwDetectStudent{}, all, flag_accuracy_metric(), 0, *gw, 0), ValidationError);
  auto unlabeled = all;
  for (auto& r : unlabeled) r.gold.reset();
  EXPECT_THROW(bootstrap_demos(UwDetectStudent{}, unlabeled, flag_accuracy_metric(), 4, *gw, 0), ValidationError);
}

TEST(RandomSearch, EmptyPoolsYieldBaseline) {
  const auto all = support::synthetic_records(6, 5);
  auto gw = make_scripted_gateway(support::GoldOracle(all));
  const auto [compiled, rep] =
      random_search_compile(UwDetectStudent{}, DemoPools{{"detect", {}}}, all, flag_accuracy_metric(), 4, 3, 0, *gw);
  EXPECT_EQ(rep.candidates.size(), 4u);
  EXPECT_EQ(rep.winner_id, 0u);
  EXPECT_TRUE(compiled.program("detect").demos.empty());
  EXPECT_EQ(rep.winner().validation_score, 1.0);
}

TEST(RandomSearch, SingleCandidateIsZeroShot) {
  const auto all = support::synthetic_records(6, 6);
  auto gw = make_scripted_gateway(support::GoldOracle(all));
  const auto boot = bootstrap_demos(UwDetectStudent{}, all, flag_accuracy_metric(), 4, *gw, 0);
  const auto [compiled, rep] =
      random_search_compile(UwDetectStudent{}, boot.pools, all, flag_accuracy_metric(), 1, 4, 0, *gw);
  EXPECT_EQ(rep.candidates.size(), 1u);
  EXPECT_TRUE(rep.candidates[0].demo_indices.empty());
  EXPECT_TRUE(compiled.program("detect").demos.empty());
  EXPECT_THROW(random_search_compile(UwDetectStudent{}, boot.pools, all, flag_accuracy_metric(), 0, 4, 0, *gw),
               ValidationError);
}

TEST(RandomSearch, FindsTheOneUsefulDemo) {
  const auto all = support::synthetic_records(14, 7);
  const auto train = slice(all, 0, 6), val = slice(all, 6, 14);
  // validation answers are right only when record 3's demo is in the prompt
  auto gw = make_scripted_gateway(detect_responder(all, [](std::size_t k, const LmRequest& req) {
    if (k < 6) return true;
    const auto& user = req.messages.back().content;
    const auto cut = user.rfind("\n---\n");
    return cut != std::string::npos && user.substr(0, cut).find("case-3 of") != std::string::npos;
  }));
  CompileSettings s;
  s.n_candidates = 12;
  s.demos_per_stage = 2;
  const auto [compiled, rep] = bootstrap_random_search(UwDetectStudent{}, train, val, flag_accuracy_metric(), s, *gw);
  bool sampled = false;
  for (const auto& c : rep.candidates) {
    for (const auto& src : c.demo_sources.count("detect") ? c.demo_sources.at("detect") : std::vector<std::string>{}) {
      sampled |= src == "syn-3";
    }
  }
  ASSERT_TRUE(sampled);
  EXPECT_EQ(rep.winner().validation_score, 1.0);
  const auto& win = rep.winner().demo_sources.at("detect");
  EXPECT_NE(std::find(win.begin(), win.end(), "syn-3"), win.end());
  EXPECT_EQ(rep.candidates[0].validation_score, 0.0);
  EXPECT_EQ(compiled.program("detect").demos.size(), 2u);
}

TEST(RandomSearch, DeterministicForSeed) {
  const auto all = support::synthetic_records(16, 8);
  const auto train = slice(all, 0, 8), val = slice(all, 8, 16);
  auto gw = make_scripted_gateway(
      detect_responder(all, [](std::size_t k, const LmRequest& req) { return k < 8 || (has_demos(req) && k % 3); }));
  CompileSettings s;
  s.n_candidates = 5;
  s.demos_per_stage = 3;
  s.seed = 42;
  const auto a = bootstrap_random_search(UwDetectStudent{}, train, val, flag_accuracy_metric(), s, *gw);
  const auto b = bootstrap_random_search(UwDetectStudent{}, train, val, flag_accuracy_metric(), s, *gw);
  EXPECT_EQ(to_json(a.second).dump(), to_json(b.second).dump());
  EXPECT_EQ(to_json(a.first.program("detect")).dump(), to_json(b.first.program("detect")).dump());
  s.seed = 43;
  const auto c = bootstrap_random_search(UwDetectStudent{}, train, val, flag_accuracy_metric(), s, *gw);
  EXPECT_NE(to_json(a.second).dump(), to_json(c.second).dump());
}

TEST(Proposals, CountsAndDeduplication) {
  const Signature sig = uw_detect_program().signature;
  std::atomic<int> n{0};
  auto distinct = make_scripted_gateway([&](const LmRequest&) {
    return "Proposed Instruction: variant " + std::to_string(n++);
  });
  EXPECT_EQ(propose_instructions(sig, {}, *distinct, 1).size(), 2u);
  const auto three = propose_instructions(sig, {}, *distinct, 3);
  ASSERT_EQ(three.size(), 4u);
  EXPECT_EQ(three[0], sig.instruction);

  auto echo = make_scripted_gateway([&](const LmRequest&) { return "Proposed Instruction: " + sig.instruction; });
  std::vector<std::string> warnings;
  EXPECT_EQ(propose_instructions(sig, {}, *echo, 3, &warnings).size(), 1u);
  EXPECT_EQ(warnings.size(), 1u);

  auto same = make_scripted_gateway([](const LmRequest&) { return std::string("  Check doses.  "); });
  EXPECT_EQ(propose_instructions(sig, {}, *same, 4), (std::vector<std::string>{sig.instruction, "Check doses."}));
  EXPECT_THROW(propose_instructions(sig, {}, *same, 0), ValidationError);
}

TEST(Proposals, PromptCarriesSignatureAndDemos) {
  const Signature sig = uw_detect_program().signature;
  std::vector<std::string> users;
  std::mutex mu;
  auto gw = make_scripted_gateway([&](const LmRequest& req) {
    std::lock_guard lock(mu);
    users.push_back(req.messages.back().content);
    return std::string("Proposed Instruction: x");
  });
  Demo d{{{"clinical_text", "note"}}, {{"error_flag", "1"}, {"rationale", "why"}}, "r"};
  propose_instructions(sig, {d}, *gw, 2);
  ASSERT_EQ(users.size(), 2u);
  EXPECT_NE(users[0].find("Task name: detect"), std::string::npos);
  EXPECT_NE(users[0].find("Clinical Text: note\nRationale: why\nError Flag: 1"), std::string::npos);
  EXPECT_TRUE(users[0].ends_with("Proposed Instruction:"));
  EXPECT_NE(users[0], users[1]);  // tips rotate
}

TEST(Mipro, SmallestBudget) {
  const auto all = support::synthetic_records(8, 9);
  auto gw = make_scripted_gateway(support::GoldOracle(all));
  CompileSettings s;
  s.n_instruction_proposals = 1;
  s.n_candidates = 1;
  const auto [compiled, rep] = mipro_compile(UwDetectStudent{}, slice(all, 0, 4), slice(all, 4, 8),
                                             flag_accuracy_metric(), s, *gw);
  EXPECT_EQ(rep.candidates.size(), 1u);
  EXPECT_EQ(rep.optimizer, "mipro");
  EXPECT_EQ(rep.proposals.at("detect").size(), 2u);
  EXPECT_FALSE(compiled.program("detect").compiled_instruction);
  s.n_instruction_proposals = 0;
  EXPECT_THROW(mipro_compile(UwDetectStudent{}, all, all, flag_accuracy_metric(), s, *gw), ValidationError);
}

TEST(Mipro, PicksTheInstructionThatHelps) {
  const auto all = support::synthetic_records(16, 10);
  const std::string good = "Audit every dose against the problem list.";
  auto gw = make_scripted_gateway([&](const LmRequest& req) {
    if (support::open_label(support::live_block(req)) == "Proposed Instruction") {
      const bool first = req.messages.back().content.find("Proposal 1 of") != std::string::npos;
      return "Proposed Instruction: " + (first ? good : std::string("Skim the note."));
    }
    const auto k = support::case_marker(support::live_block(req)).value();
    const bool right = req.messages[0].content.starts_with(good) || k % 2 == 0;
    const int gold = all.at(k).gold->flag;
    return "Rationale: read it.\nError Flag: " + std::to_string(right ? gold : 1 - gold);
  });
  CompileSettings s;
  s.n_instruction_proposals = 2;
  s.n_candidates = 8;
  s.demos_per_stage = 1;
  const auto [compiled, rep] =
      mipro_compile(UwDetectStudent{}, slice(all, 0, 8), slice(all, 8, 16), flag_accuracy_metric(), s, *gw);
  EXPECT_EQ(rep.proposals.at("detect").size(), 3u);
  EXPECT_DOUBLE_EQ(rep.candidates[0].validation_score, 0.5);
  EXPECT_DOUBLE_EQ(rep.winner().validation_score, 1.0);
  EXPECT_EQ(compiled.program("detect").instruction(), good);
}

TEST(Report, JsonShape) {
  const auto all = support::synthetic_records(6, 11);
  auto gw = make_scripted_gateway(support::GoldOracle(all));
  CompileSettings s;
  s.n_candidates = 2;
  const auto [_, rep] = bootstrap_random_search(UwDetectStudent{}, all, all, flag_accuracy_metric(), s, *gw);
  const auto j = to_json(rep);
  EXPECT_EQ(j.at("optimizer"), "random_search");
  EXPECT_EQ(j.at("metric"), "flag_accuracy");
  EXPECT_EQ(j.at("candidates").size(), 2u);
  EXPECT_EQ(j.at("trainset_ids").size(), 6u);
  EXPECT_TRUE(j.at("candidates")[0].at("per_example").contains("syn-0"));
}
