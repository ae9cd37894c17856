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

#include <random>
#include <thread>

#include "medcorr/metrics.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace medcorr;

namespace {

LabelRow row(std::string id, int flag, int sid, Correction c) {
  return {std::move(id), flag, sid, std::move(c)};
}

class FixedScorer : public ExternalScorer {
 public:
  FixedScorer(std::string name, double v) : name_(std::move(name)), v_(v) {}
  std::string name() const override { return name_; }
  std::vector<double> score(const std::vector<ScorePair>& pairs) override {
    return std::vector<double>(pairs.size(), v_);
  }

 private:
  std::string name_;
  double v_;
};

class BrokenScorer : public ExternalScorer {
 public:
  std::string name() const override { return "bleurt"; }
  std::vector<double> score(const std::vector<ScorePair>&) override { throw Error("bleurt is down"); }
};

}  // namespace

TEST(Rouge, WorkedExamples) {
  EXPECT_DOUBLE_EQ(rouge_l_f("a b c d", "a b c e"), 0.75);
  EXPECT_DOUBLE_EQ(rouge_l_f("patient has fever", "patient has high fever"), 6.0 / 7.0);
  EXPECT_DOUBLE_EQ(rouge1_f("patient has fever", "patient has high fever"), 6.0 / 7.0);
  EXPECT_DOUBLE_EQ(rouge_l_f("c b a", "a b c"), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(rouge1_f("c b a", "a b c"), 1.0);
  EXPECT_DOUBLE_EQ(rouge_l_f("", "a"), 0.0);
  EXPECT_DOUBLE_EQ(rouge1_f("a", ""), 0.0);
  EXPECT_DOUBLE_EQ(rouge_l_f("Fever, 38C.", "fever 38c"), 1.0);
}

TEST(Rouge, UnigramCountsAreClipped) {
  // "the" appears 3 times in the candidate, once in the reference
  EXPECT_DOUBLE_EQ(rouge1_f("the the the", "the cat"), 2.0 * (1.0 / 3) * 0.5 / (1.0 / 3 + 0.5));
}

TEST(Rouge, AgreesWithBruteForceOracles) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 300; ++i) {
    const auto a = oracle::random_tokens(rng, 12);
    const auto b = oracle::random_tokens(rng, 12);
    const auto ca = oracle::join(a), cb = oracle::join(b);
    EXPECT_NEAR(rouge_l_f(ca, cb), oracle::rouge_l(a, b), 1e-12) << ca << " | " << cb;
    EXPECT_NEAR(rouge1_f(ca, cb), oracle::rouge1(a, b), 1e-12) << ca << " | " << cb;
    EXPECT_NEAR(rouge_l_f(ca, cb), rouge_l_f(cb, ca), 1e-12);  // beta = 1 is symmetric
  }
}

TEST(Composite, NaRulesAndBase) {
  const BaseMetric base = [](const std::string& a, const std::string& b) { return rouge_l_f(a, b); };
  EXPECT_EQ(composite_score(std::nullopt, std::nullopt, base), 1.0);
  EXPECT_EQ(composite_score(std::string("x"), std::nullopt, base), 0.0);
  EXPECT_EQ(composite_score(std::nullopt, std::string("x"), base), 0.0);
  EXPECT_DOUBLE_EQ(composite_score(std::string("a b c d"), std::string("a b c e"), base), 0.75);
}

TEST(Aggregate, MeanOfThree) {
  EXPECT_NEAR(aggregate_of(0.776, 0.809, 0.783), 0.7893, 5e-4);
}

TEST(Accuracy, FlagAndSentence) {
  const std::vector<LabelRow> gold{row("a", 1, 2, "x"), row("b", 0, -1, std::nullopt), row("c", 1, 0, "y"),
                                   row("d", 0, -1, std::nullopt), row("e", 1, 4, "z")};
  const std::vector<LabelRow> pred{row("e", 1, 3, "z"), row("d", 1, 1, "q"), row("c", 1, 0, "y"),
                                   row("b", 0, -1, std::nullopt), row("a", 1, 1, "x")};
  EXPECT_DOUBLE_EQ(flag_accuracy(pred, gold), 0.8);
  EXPECT_DOUBLE_EQ(sentence_accuracy(pred, gold), 0.4);
}

TEST(Accuracy, IdMismatchIsValidationError) {
  const std::vector<LabelRow> gold{row("a", 0, -1, std::nullopt), row("b", 0, -1, std::nullopt)};
  const std::vector<LabelRow> pred{row("a", 0, -1, std::nullopt), row("c", 0, -1, std::nullopt)};
  try {
    flag_accuracy(pred, gold);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("c"), std::string::npos);
  }
  EXPECT_THROW(evaluate({row("a", 0, -1, std::nullopt), row("a", 0, -1, std::nullopt)}, gold),
               ValidationError);
}

TEST(Evaluate, PerfectPredictionsScoreOne) {
  const std::vector<LabelRow> gold{row("a", 1, 2, "Start heparin."), row("b", 0, -1, std::nullopt)};
  const auto rep = evaluate(gold, gold);
  EXPECT_EQ(rep.flag_accuracy, 1.0);
  EXPECT_EQ(rep.sentence_accuracy, 1.0);
  EXPECT_EQ(*rep.mean_rouge1_f, 1.0);
  EXPECT_EQ(*rep.mean_rouge_l_f, 1.0);
  EXPECT_EQ(rep.composite_means.at("rouge1"), 1.0);
  EXPECT_EQ(rep.n_scored_corrections, 1u);
  EXPECT_FALSE(rep.aggregate_score);
  EXPECT_TRUE(rep.unavailable.contains("bertscore"));
  EXPECT_TRUE(rep.unavailable.contains("aggregate"));
}

TEST(Evaluate, MeansOverBothSidedRecordsOnly) {
  const std::vector<LabelRow> gold{row("a", 1, 0, "a b c e"), row("b", 1, 0, "x y"), row("c", 0, -1, std::nullopt)};
  const std::vector<LabelRow> pred{row("a", 1, 0, "a b c d"), row("b", 0, -1, std::nullopt),
                                   row("c", 0, -1, std::nullopt)};
  const auto rep = evaluate(pred, gold);
  EXPECT_EQ(rep.n_scored_corrections, 1u);
  EXPECT_DOUBLE_EQ(*rep.mean_rouge_l_f, 0.75);
  EXPECT_DOUBLE_EQ(rep.composite_means.at("rougeL"), (0.75 + 0.0 + 1.0) / 3.0);
}

TEST(Evaluate, ExternalScorersFeedAggregate) {
  const std::vector<LabelRow> gold{row("a", 1, 0, "a b c e"), row("b", 0, -1, std::nullopt)};
  const std::vector<LabelRow> pred{row("a", 1, 0, "a b c d"), row("b", 0, -1, std::nullopt)};
  EvaluateOptions o;
  o.scorers = {std::make_shared<FixedScorer>("bertscore", 0.9), std::make_shared<FixedScorer>("bleurt", 0.6)};
  const auto rep = evaluate(pred, gold, o);
  EXPECT_DOUBLE_EQ(*rep.aggregate_score, (0.75 + 0.9 + 0.6) / 3.0);
  EXPECT_DOUBLE_EQ(rep.composite_means.at("aggregate"), ((0.75 + 0.9 + 0.6) / 3.0 + 1.0) / 2.0);
  EXPECT_TRUE(rep.unavailable.empty());
}

TEST(Evaluate, BrokenScorerStrictVersusLenient) {
  const std::vector<LabelRow> gold{row("a", 1, 0, "a b")};
  EvaluateOptions o;
  o.scorers = {std::make_shared<BrokenScorer>()};
  const auto rep = evaluate(gold, gold, o);
  EXPECT_EQ(rep.unavailable.at("bleurt"), "bleurt is down");
  EXPECT_FALSE(rep.aggregate_score);
  o.strict = true;
  EXPECT_THROW(evaluate(gold, gold, o), Error);
}

TEST(HttpScorer, BatchesOverTheWire) {
  httplib::Server srv;
  std::vector<std::size_t> batch_sizes;
  srv.Post("/svc/score", [&](const httplib::Request& req, httplib::Response& res) {
    const auto j = nlohmann::json::parse(req.body);
    nlohmann::json scores = nlohmann::json::array();
    for (const auto& p : j.at("pairs")) {
      scores.push_back(p.at("candidate") == p.at("reference") ? 1.0 : 0.25);
    }
    batch_sizes.push_back(j["pairs"].size());
    res.set_content(nlohmann::json{{"scores", scores}}.dump(), "application/json");
  });
  const int port = srv.bind_to_any_port("127.0.0.1");
  std::thread t([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  HttpScorer scorer("bertscore", "http://127.0.0.1:" + std::to_string(port) + "/svc/", 2);
  const auto out = scorer.score({{"a", "a"}, {"a", "b"}, {"c", "c"}, {"d", "e"}, {"f", "f"}});
  srv.stop();
  t.join();
  EXPECT_EQ(out, (std::vector<double>{1.0, 0.25, 1.0, 0.25, 1.0}));
  EXPECT_EQ(batch_sizes, (std::vector<std::size_t>{2, 2, 1}));
}

TEST(HttpScorer, UnreachableIsError) {
  HttpScorer scorer("bleurt", "http://127.0.0.1:9/");
  EXPECT_THROW(scorer.score({{"a", "b"}}), Error);
  EXPECT_THROW(HttpScorer("x", "ftp://nowhere"), ValidationError);
}

TEST(Report, JsonRoundTripAndRendering) {
  const std::vector<LabelRow> gold{row("a", 1, 0, "a b c e"), row("b", 0, -1, std::nullopt)};
  const std::vector<LabelRow> pred{row("a", 1, 0, "a b c d"), row("b", 0, -1, std::nullopt)};
  const auto rep = evaluate(pred, gold);
  const auto j = to_json(rep);
  const auto back = score_report_from_json(nlohmann::ordered_json::parse(j.dump()));
  EXPECT_EQ(to_json(back).dump(), j.dump());

  const auto table = render_report(rep, ReportFormat::kTable);
  EXPECT_NE(table.find("flag_accuracy"), std::string::npos);
  EXPECT_NE(table.find("rougeL_f"), std::string::npos);
  EXPECT_NE(table.find("0.75"), std::string::npos);
  EXPECT_NE(table.find("unavailable"), std::string::npos);
  const auto md = render_report(rep, ReportFormat::kMarkdown);
  EXPECT_TRUE(md.starts_with("| metric | value |\n|---|---|\n"));
  EXPECT_NE(md.find("| bertscore | unavailable |"), std::string::npos);
  EXPECT_EQ(nlohmann::ordered_json::parse(render_report(rep, ReportFormat::kJson)).dump(), j.dump());
}
