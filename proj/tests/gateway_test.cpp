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

#include <atomic>
#include <chrono>
#include <thread>

#include "medcorr/gateway.hpp"
#include "medcorr/live_client.hpp"
#include "support.hpp"

using namespace medcorr;

namespace {

LmRequest sample_request() {
  LmRequest r;
  r.model = "gpt-4-0125-preview";
  r.messages = {{"system", "Be brief."}, {"user", "Question: 2+2?\n\nAnswer:"}};
  return r;
}

/// Local OpenAI-compatible stub on an ephemeral port.
class StubServer {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;
  explicit StubServer(Handler h) {
    server_.Post("/v1/chat/completions", std::move(h));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::string completion_body(const std::string& text) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}},
                        {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 3}}}}
      .dump();
}

LiveClientOptions fast_options(const std::string& base, std::vector<long>* sleeps) {
  LiveClientOptions o;
  o.base_url = base;
  o.api_key = "sk-test";
  o.timeout = std::chrono::milliseconds(2000);
  o.sleep = [sleeps](std::chrono::milliseconds d) { sleeps->push_back(static_cast<long>(d.count())); };
  return o;
}

}  // namespace

TEST(CanonicalKey, MatchesGoldenFile) {
  const auto golden = nlohmann::json::parse(support::slurp(support::source_path("tests/golden/canonical_key.json")));
  const LmRequest req = request_from_json(golden.at("request"));
  EXPECT_EQ(canonical_serialization(req), golden.at("canonical").get<std::string>());
  EXPECT_EQ(canonical_key(req), golden.at("key").get<std::string>());
}

TEST(CanonicalKey, StableAndSensitive) {
  const auto a = sample_request();
  const auto b = sample_request();
  EXPECT_EQ(canonical_key(a), canonical_key(b));
  auto c = a;
  c.max_tokens = 4095;
  EXPECT_NE(canonical_key(a), canonical_key(c));
}

TEST(CanonicalKey, FieldPerturbationsNeverCollide) {
  const auto base = sample_request();
  std::set<std::string> keys{canonical_key(base)};
  std::vector<LmRequest> variants;
  auto v = base;
  v.model = "gpt-4";
  variants.push_back(v);
  v = base;
  v.temperature = 0.0;
  variants.push_back(v);
  v = base;
  v.top_p = 0.9;
  variants.push_back(v);
  v = base;
  v.messages[0].role = "user";
  variants.push_back(v);
  v = base;
  std::swap(v.messages[0], v.messages[1]);
  variants.push_back(v);
  v = base;
  v.messages[1].content += " ";
  variants.push_back(v);
  v = base;
  v.messages.push_back({"assistant", ""});
  variants.push_back(v);
  for (std::size_t i = 0; i < base.messages[1].content.size(); ++i) {
    v = base;
    v.messages[1].content[i] ^= 0x01;
    variants.push_back(v);
  }
  for (const auto& r : variants) {
    EXPECT_TRUE(keys.insert(canonical_key(r)).second) << canonical_serialization(r);
  }
}

TEST(CanonicalKey, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Scripted, FixedReply) {
  auto gw = make_scripted_gateway([](const LmRequest&) { return std::string("Answer: B"); });
  const auto r = gw->complete(sample_request());
  EXPECT_EQ(r.text, "Answer: B");
  EXPECT_EQ(r.backend, BackendTag::kScripted);
  EXPECT_EQ(gw->calls(), 1u);
}

TEST(Scripted, RuleTable) {
  const auto rules = nlohmann::json::parse(R"({
    "rules": [
      {"contains": ["2+2"], "scope": "tail", "response": "Answer: 4"},
      {"contains": ["Be brief."], "response": "Answer: brief"}
    ],
    "default": "Answer: ?"})");
  auto backend = ScriptedBackend::from_rules(rules);
  EXPECT_EQ(backend->complete(sample_request()).text, "Answer: 4");
  auto req = sample_request();
  req.messages[1].content = "Question: 2+2?\n\n---\n\nQuestion: 3+3?\n\nAnswer:";
  EXPECT_EQ(backend->complete(req).text, "Answer: brief");  // 2+2 only in a demo
  req.messages[0].content = "x";
  EXPECT_EQ(backend->complete(req).text, "Answer: ?");
  auto strict = ScriptedBackend::from_rules(nlohmann::json::parse(R"({"rules": []})"));
  EXPECT_THROW(strict->complete(req), GatewayError);
  EXPECT_THROW(ScriptedBackend::from_rules(nlohmann::json::parse(R"({"rules": [{}]})")), ValidationError);
}

TEST(Request, ValidationRejectsBadRequests) {
  auto gw = make_scripted_gateway([](const LmRequest&) { return std::string("x"); });
  auto r = sample_request();
  r.messages.clear();
  EXPECT_THROW(gw->complete(r), ValidationError);
  r = sample_request();
  r.max_tokens = 0;
  EXPECT_THROW(gw->complete(r), ValidationError);
  r = sample_request();
  r.temperature = -0.5;
  EXPECT_THROW(gw->complete(r), ValidationError);
  r = sample_request();
  r.messages[0].role = "tool";
  EXPECT_THROW(gw->complete(r), ValidationError);
  EXPECT_EQ(gw->calls(), 0u);
}

TEST(Replay, RecordThenReplayIsByteIdentical) {
  support::TempDir dir("replay");
  const std::string path = dir.file("cache.jsonl");
  const std::string reply = "Rationale: two and two.\nAnswer:  4 \n\xce\xbc";
  {
    auto cache = std::make_shared<ReplayCache>(path);
    Gateway rec(std::make_unique<ScriptedBackend>([&](const LmRequest&) { return reply; }), {}, cache);
    rec.complete(sample_request());
    rec.complete(sample_request());  // duplicate key is not appended twice
    EXPECT_EQ(cache->size(), 1u);
  }
  auto loaded = std::make_shared<const ReplayCache>(path);
  EXPECT_EQ(loaded->size(), 1u);
  Gateway replay(std::make_unique<ReplayBackend>(loaded));
  const auto r = replay.complete(sample_request());
  EXPECT_EQ(r.text, reply);
  EXPECT_EQ(r.backend, BackendTag::kReplay);
  const auto line = nlohmann::json::parse(support::slurp(path));
  EXPECT_EQ(line.at("key"), canonical_key(sample_request()));
  EXPECT_TRUE(line.contains("request"));
  EXPECT_TRUE(line.contains("response"));
}

TEST(Replay, OneCharacterMutationMisses) {
  auto cache = std::make_shared<ReplayCache>();
  cache->append(sample_request(), {"Answer: 4", {}, BackendTag::kScripted});
  Gateway replay(std::make_unique<ReplayBackend>(cache));
  auto mutated = sample_request();
  mutated.messages[1].content[10] = '3';
  const std::string expected_key = sha256_hex(canonical_serialization(mutated));
  ASSERT_NE(expected_key, canonical_key(sample_request()));
  try {
    replay.complete(mutated);
    FAIL() << "expected a cache miss";
  } catch (const CacheMissError& e) {
    EXPECT_EQ(e.key(), expected_key);
    EXPECT_NE(std::string(e.what()).find("cache miss"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find(expected_key), std::string::npos);
  }
}

TEST(Replay, CorruptCacheLineIsRejected) {
  support::TempDir dir("corrupt");
  const std::string path = dir.file("c.jsonl");
  auto entry = ReplayCache::entry_to_json({canonical_key(sample_request()), sample_request(), {"x", {}, {}}});
  entry["key"] = std::string(64, '0');
  support::spit(path, entry.dump() + "\n");
  EXPECT_THROW(ReplayCache{path}, ValidationError);
  support::spit(path, "{not json\n");
  EXPECT_THROW(ReplayCache{path}, ValidationError);
}

TEST(Replay, MissingFileIsEmptyCache) {
  ReplayCache c("/nonexistent/dir/cache.jsonl");
  EXPECT_EQ(c.size(), 0u);
}

TEST(Gateway, ReplayedResponsesAreNotReRecorded) {
  auto source = std::make_shared<ReplayCache>();
  source->append(sample_request(), {"Answer: 4", {}, BackendTag::kScripted});
  auto sink = std::make_shared<ReplayCache>();
  Gateway gw(std::make_unique<ReplayBackend>(source), {}, sink);
  gw.complete(sample_request());
  EXPECT_EQ(sink->size(), 0u);
}

TEST(Gateway, ConcurrencyIsBounded) {
  std::atomic<int> in_flight{0}, peak{0};
  GatewayOptions opts;
  opts.concurrency = 3;
  auto gw = make_scripted_gateway(
      [&](const LmRequest&) {
        const int now = ++in_flight;
        int p = peak.load();
        while (now > p && !peak.compare_exchange_weak(p, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        --in_flight;
        return std::string("ok");
      },
      opts);
  std::vector<std::thread> ts;
  for (int i = 0; i < 16; ++i) ts.emplace_back([&] { gw->complete(sample_request()); });
  for (auto& t : ts) t.join();
  EXPECT_LE(peak.load(), 3);
  EXPECT_GE(peak.load(), 2);
  EXPECT_EQ(gw->calls(), 16u);
}

TEST(FifoSlots, AdmitsInArrivalOrder) {
  FifoSlots slots(1);
  slots.acquire();
  std::vector<int> order;
  std::mutex mu;
  std::vector<std::thread> ts;
  for (int i = 0; i < 5; ++i) {
    ts.emplace_back([&, i] {
      slots.acquire();
      {
        std::lock_guard lock(mu);
        order.push_back(i);
      }
      slots.release();
    });
    // let thread i take its ticket before the next one starts
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  slots.release();
  for (auto& t : ts) t.join();
  EXPECT_EQ(order, (std::vector<int>{0, 1, 2, 3, 4}));
}

TEST(Live, ParsesChatCompletion) {
  std::string seen_auth, seen_body;
  StubServer srv([&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_body = req.body;
    res.set_content(completion_body("Answer: 4"), "application/json");
  });
  std::vector<long> sleeps;
  LiveBackend live(fast_options(srv.base_url(), &sleeps));
  const auto r = live.complete(sample_request());
  EXPECT_EQ(r.text, "Answer: 4");
  EXPECT_EQ(r.backend, BackendTag::kLive);
  EXPECT_EQ(r.usage.prompt_tokens, 11);
  EXPECT_EQ(r.usage.completion_tokens, 3);
  EXPECT_EQ(seen_auth, "Bearer sk-test");
  const auto body = nlohmann::json::parse(seen_body);
  EXPECT_EQ(body.at("model"), "gpt-4-0125-preview");
  EXPECT_EQ(body.at("max_tokens"), 4096);
  EXPECT_EQ(body.at("temperature"), 1.0);
  EXPECT_TRUE(sleeps.empty());
}

TEST(Live, RetriesTransientFailuresWithCappedBackoff) {
  std::atomic<int> hits{0};
  std::vector<std::string> bodies;
  std::mutex mu;
  StubServer srv([&](const httplib::Request& req, httplib::Response& res) {
    {
      std::lock_guard lock(mu);
      bodies.push_back(req.body);
    }
    const int n = ++hits;
    if (n == 1) {
      res.status = 429;
      res.set_content("slow down", "text/plain");
    } else if (n < 5) {
      res.status = 503;
    } else {
      res.set_content(completion_body("ok"), "application/json");
    }
  });
  std::vector<long> sleeps;
  auto o = fast_options(srv.base_url(), &sleeps);
  o.backoff_initial = std::chrono::milliseconds(500);
  o.backoff_cap = std::chrono::milliseconds(1500);
  LiveBackend live(o);
  EXPECT_EQ(live.complete(sample_request()).text, "ok");
  EXPECT_EQ(hits.load(), 5);
  EXPECT_EQ(sleeps, (std::vector<long>{500, 1000, 1500, 1500}));
  for (const auto& b : bodies) EXPECT_EQ(b, bodies.front());  // never mutated between retries
}

TEST(Live, GivesUpAfterFiveAttempts) {
  std::atomic<int> hits{0};
  StubServer srv([&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 500;
    res.set_content("upstream exploded", "text/plain");
  });
  std::vector<long> sleeps;
  LiveBackend live(fast_options(srv.base_url(), &sleeps));
  try {
    live.complete(sample_request());
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_NE(std::string(e.what()).find("500"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("upstream exploded"), std::string::npos) << e.what();
  }
  EXPECT_EQ(hits.load(), 5);
  EXPECT_EQ(sleeps.size(), 4u);
}

TEST(Live, NonTransientStatusFailsImmediatelyWithExcerpt) {
  std::atomic<int> hits{0};
  StubServer srv([&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 401;
    res.set_content(std::string(500, 'k') + "tail", "application/json");
  });
  std::vector<long> sleeps;
  LiveBackend live(fast_options(srv.base_url(), &sleeps));
  try {
    live.complete(sample_request());
    FAIL();
  } catch (const GatewayError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("HTTP 401"), std::string::npos);
    EXPECT_EQ(msg.find("tail"), std::string::npos);  // excerpt only
  }
  EXPECT_EQ(hits.load(), 1);
}

TEST(Live, TimeoutIsAnError) {
  StubServer srv([&](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(800));
    res.set_content(completion_body("late"), "application/json");
  });
  std::vector<long> sleeps;
  auto o = fast_options(srv.base_url(), &sleeps);
  o.timeout = std::chrono::milliseconds(150);
  LiveBackend live(o);
  try {
    live.complete(sample_request());
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_NE(std::string(e.what()).find("timed out"), std::string::npos) << e.what();
  }
}

TEST(Live, MalformedBodyIsAnError) {
  StubServer srv([&](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices": []})", "application/json");
  });
  std::vector<long> sleeps;
  LiveBackend live(fast_options(srv.base_url(), &sleeps));
  EXPECT_THROW(live.complete(sample_request()), GatewayError);
}

TEST(Live, RecordsIntoCacheThroughGateway) {
  StubServer srv([&](const httplib::Request&, httplib::Response& res) {
    res.set_content(completion_body("Answer: 4"), "application/json");
  });
  std::vector<long> sleeps;
  auto sink = std::make_shared<ReplayCache>();
  Gateway gw(std::make_unique<LiveBackend>(fast_options(srv.base_url(), &sleeps)), {}, sink);
  gw.complete(sample_request());
  ASSERT_TRUE(sink->contains(canonical_key(sample_request())));
  EXPECT_EQ(sink->find(canonical_key(sample_request()))->text, "Answer: 4");
}

TEST(Live, BadBaseUrl) {
  LiveClientOptions o;
  o.base_url = "not a url";
  EXPECT_THROW(LiveBackend{o}, ValidationError);
}
