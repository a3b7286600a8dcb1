#include <gtest/gtest.h>

#include <future>

#include "httplib.h"
#include "json.hpp"
#include "support.hpp"
#include "vqr/io.hpp"
#include "vqr/questions.hpp"
#include "vqr/service.hpp"

using namespace vqr;
using namespace vqr::test;
using json = nlohmann::json;

namespace {

json golden_request(bool with_questions = true) {
  const auto q = golden_query();
  json body;
  body["query"] = {{"query_id", q.query_id},
                   {"reference_image_id", q.reference_image_id},
                   {"text", q.modification_text},
                   {"category", "dress"}};
  body["candidates"] = json::array();
  for (const auto& c : golden_candidates())
    body["candidates"].push_back({{"candidate_id", c.candidate_image_id}, {"score", c.cir_score_raw}});
  if (with_questions) {
    body["questions"] = json::array();
    for (const auto& v : golden_questions()) body["questions"].push_back(json::parse(io::question_to_json(v).dump()));
  }
  return body;
}

struct Fixture {
  MockVqaClient vqa{golden_vqa_store()};
  MockTextClient text;
  RerankService service{golden_config(), text, vqa};
};

}  // namespace

TEST(Service, GoldenRequestMatchesLibraryRerank) {
  Fixture f;
  auto r = f.service.handle(golden_request().dump());
  ASSERT_EQ(r.status, 200) << r.body;
  auto j = json::parse(r.body);
  EXPECT_EQ(j["query_id"], "q-golden");
  EXPECT_EQ(j["requests"], 12);
  const auto& expected = golden_expected();
  ASSERT_EQ(j["ranking"].size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_EQ(j["ranking"][i]["candidate_id"], expected[i].id);
    EXPECT_NEAR(j["ranking"][i]["fused_score"].get<double>(), expected[i].fused, 1e-12);
  }
  EXPECT_EQ(j["trace"].size(), 4u);

  MockVqaClient vqa(golden_vqa_store());
  const auto candidates = golden_candidates();
  auto lib = rerank(golden_query(), candidates, golden_questions(), golden_config(), vqa);
  EXPECT_EQ(nlohmann::ordered_json::parse(r.body)["ranking"].dump(), [&] {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (const auto& s : lib.ranking) a.push_back(io::score_to_json(s));
    return a.dump();
  }());
}

TEST(Service, GeneratesQuestionsWhenAbsent) {
  MockVqaClient vqa(golden_vqa_store());
  MockTextClient text;
  text.add_fixture(question_request(golden_query(), GenerationOptions{}, 0), serialize_questions(golden_questions()));
  RerankService service(golden_config(), text, vqa);
  auto r = service.handle(golden_request(false).dump());
  ASSERT_EQ(r.status, 200) << r.body;
  EXPECT_EQ(json::parse(r.body)["ranking"][0]["candidate_id"], "B");
}

TEST(Service, SchemaErrorsNameTheField) {
  Fixture f;
  auto check = [&](const json& body, const std::string& path) {
    auto r = f.service.handle(body.dump());
    EXPECT_EQ(r.status, 400) << r.body;
    auto j = json::parse(r.body);
    EXPECT_EQ(j["error"], "SchemaError");
    EXPECT_EQ(j["path"], path) << r.body;
  };
  auto body = golden_request();
  body["candidates"][2]["score"] = "high";
  check(body, "$.candidates[2].score");
  body = golden_request();
  body["candidates"][1].erase("candidate_id");
  check(body, "$.candidates[1].candidate_id");
  body = golden_request();
  body["query"].erase("text");
  check(body, "$.query.text");
  body = golden_request();
  body["questions"][0]["expected"] = "Maybe";
  check(body, "$.questions[0].expected");
  body = golden_request();
  body["candidates"] = json::array();
  check(body, "$.candidates");
  body = golden_request();
  body["questions"][1]["needs_reference"] = "yes";
  check(body, "$.questions[1].needs_reference");

  auto r = f.service.handle("{not json");
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(json::parse(r.body)["path"], "$");
}

TEST(Service, DomainErrorsAre400) {
  Fixture f;
  auto body = golden_request();
  body["query"]["category"] = "hats";
  auto r = f.service.handle(body.dump());
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(json::parse(r.body)["error"], "UnknownCategory");
  body = golden_request();
  body["candidates"][1]["candidate_id"] = "A";
  r = f.service.handle(body.dump());
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(json::parse(r.body)["error"], "DuplicateCandidateId");
}

TEST(Service, BackendFailureIs502) {
  InstrumentedVqaClient vqa(std::chrono::microseconds(0));
  vqa.fail_questions_containing("?");
  MockTextClient text;
  RerankService service(golden_config(), text, vqa);
  auto r = service.handle(golden_request().dump());
  EXPECT_EQ(r.status, 502) << r.body;
  EXPECT_EQ(json::parse(r.body)["error"], "BackendUnavailable");

  // Text backend with no fixture for this prompt.
  MockVqaClient ok(golden_vqa_store());
  RerankService gen(golden_config(), text, ok);
  r = gen.handle(golden_request(false).dump());
  EXPECT_EQ(r.status, 502) << r.body;
}

TEST(Service, ConcurrentIdenticalRequestsAgree) {
  Fixture f;
  const auto body = golden_request().dump();
  std::vector<std::future<ServiceResponse>> futures;
  for (int i = 0; i < 8; ++i)
    futures.push_back(std::async(std::launch::async, [&] { return f.service.handle(body); }));
  const auto first = futures[0].get();
  ASSERT_EQ(first.status, 200);
  for (std::size_t i = 1; i < futures.size(); ++i) EXPECT_EQ(futures[i].get().body, first.body);
}

TEST(Service, SharedFanOutLimitAcrossRequests) {
  InstrumentedVqaClient vqa(std::chrono::microseconds(500));
  MockTextClient text;
  auto config = golden_config();
  config.fan_out = 3;
  RerankService service(config, text, vqa);
  const auto body = golden_request().dump();
  std::vector<std::future<ServiceResponse>> futures;
  for (int i = 0; i < 6; ++i)
    futures.push_back(std::async(std::launch::async, [&] { return service.handle(body); }));
  for (auto& fu : futures) EXPECT_EQ(fu.get().status, 200);
  EXPECT_LE(vqa.peak_in_flight(), 3);
  EXPECT_EQ(vqa.calls(), 6u * 12u);
}

TEST(Service, HttpRoundTrip) {
  Fixture f;
  const int port = f.service.bind("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  std::thread server([&] { f.service.listen(); });
  httplib::Client client("127.0.0.1", port);
  client.set_connection_timeout(5);
  httplib::Result health;
  for (int i = 0; i < 100 && !(health = client.Get("/health")); ++i)
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);

  const auto body = golden_request().dump();
  auto res = client.Post("/rerank", body, "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->body, f.service.handle(body).body);

  res = client.Post("/rerank", "[]", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);

  f.service.stop();
  server.join();
}
