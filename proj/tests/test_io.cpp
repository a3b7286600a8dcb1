#include <gtest/gtest.h>

#include "support.hpp"
#include "vqr/io.hpp"

using namespace vqr;
using namespace vqr::test;

namespace {

std::string error_message(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Io, HeaderLine) { EXPECT_EQ(io::header_line("rankings"), "# vqr-rankings v1"); }

TEST(Io, TripletsWithAndWithoutHeader) {
  auto t = io::read_triplets(data_path("mini/triplets.jsonl"));
  ASSERT_EQ(t.size(), 6u);
  EXPECT_EQ(t[0].query.reference_image_id, "d000");
  EXPECT_EQ(t[0].target_image_id, "d005");
  EXPECT_EQ(t[0].query.modification_text, "is black with no sleeves, and longer than the reference");
  EXPECT_EQ(t[4].query.category, Category::Toptee);

  TempDir dir;
  spit(dir.file("t.jsonl"), "# vqr-triplets v1\n{\"query_id\":\"q\",\"reference\":\"r\",\"text\":\"is red\"}\n\n");
  auto u = io::read_triplets(dir.file("t.jsonl"));
  ASSERT_EQ(u.size(), 1u);
  EXPECT_EQ(u[0].query.category, Category::Other);
  EXPECT_TRUE(u[0].target_image_id.empty());
  EXPECT_TRUE(io::targets_of(u).empty());
}

TEST(Io, ErrorsNameFileAndLine) {
  TempDir dir;
  const auto path = dir.file("t.jsonl");
  spit(path, "{\"query_id\":\"q1\",\"candidate\":\"r\",\"text\":\"is red\"}\n{not json}\n");
  auto msg = error_message([&] { io::read_triplets(path); });
  EXPECT_NE(msg.find(path + ":2:"), std::string::npos) << msg;

  spit(path, "{\"query_id\":\"q1\",\"candidate\":\"r\",\"text\":\"is red\"}\n"
             "{\"query_id\":\"q1\",\"candidate\":\"r\",\"text\":\"is blue\"}\n");
  try {
    io::read_triplets(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateQueryId);
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
    EXPECT_EQ(std::string(e.what()).find("DuplicateQueryId", 5), std::string::npos);
  }

  spit(path, "{\"query_id\":\"q1\",\"candidate\":\"r\",\"text\":\"   \"}\n");
  try {
    io::read_triplets(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyModificationText);
  }
}

TEST(Io, WrongHeaderRejected) {
  TempDir dir;
  spit(dir.file("r.jsonl"), "# vqr-traces v1\n");
  auto msg = error_message([&] { io::read_rankings(dir.file("r.jsonl")); });
  EXPECT_NE(msg.find("expected header '# vqr-rankings v1'"), std::string::npos) << msg;
  spit(dir.file("r.jsonl"), "{\"query_id\":\"q\",\"ranking\":[]}\n");
  msg = error_message([&] { io::read_rankings(dir.file("r.jsonl")); });
  EXPECT_NE(msg.find("missing header"), std::string::npos) << msg;
  msg = error_message([&] { io::read_rankings(dir.file("absent.jsonl")); });
  EXPECT_NE(msg.find("cannot open"), std::string::npos) << msg;
}

TEST(Io, CirScoresKeepFileOrder) {
  auto s = io::read_cir_scores(data_path("mini/cir_scores.jsonl"));
  ASSERT_EQ(s.size(), 6u);
  for (const auto& [qid, c] : s) EXPECT_EQ(c.size(), 60u) << qid;
  EXPECT_EQ(s.at("q-dress-1")[0].candidate_image_id, "d001");
  EXPECT_DOUBLE_EQ(s.at("q-dress-1")[1].cir_score_raw, 0.7167);
}

TEST(Io, ImageIndex) {
  auto idx = io::read_image_index(data_path("mini/image_index.jsonl"));
  EXPECT_EQ(idx.size(), 36u);
  EXPECT_EQ(idx.images(Category::Shirt).size(), 12u);
  EXPECT_TRUE(idx.images(Category::Other).empty());
  TempDir dir;
  spit(dir.file("i.jsonl"), "{\"image_id\":\"a\",\"category\":\"dress\"}\n{\"image_id\":\"a\",\"category\":\"shirt\"}\n");
  EXPECT_THROW(io::read_image_index(dir.file("i.jsonl")), Error);
  spit(dir.file("i.jsonl"), "{\"image_id\":\"a\",\"category\":\"hats\"}\n");
  try {
    io::read_image_index(dir.file("i.jsonl"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownCategory);
  }
}

TEST(Io, QuestionCorpusRoundTrip) {
  auto c = io::read_question_corpus(data_path("mini/questions.jsonl"));
  ASSERT_EQ(c.size(), 6u);
  TempDir dir;
  io::write_question_corpus(dir.file("q.jsonl"), c);
  EXPECT_EQ(slurp(dir.file("q.jsonl")), slurp(data_path("mini/questions.jsonl")));
}

TEST(Io, RankingsRoundTrip) {
  RankingsByQuery r;
  r["q1"] = {{"a", 0.9, 1.0, 0.75, 1.05}, {"b", 0.1, 0.0, std::nullopt, 0.0}};
  TempDir dir;
  io::write_rankings(dir.file("r.jsonl"), r);
  auto back = io::read_rankings(dir.file("r.jsonl"));
  ASSERT_EQ(back.at("q1").size(), 2u);
  EXPECT_EQ(back.at("q1")[0].vqa_score, 0.75);
  EXPECT_FALSE(back.at("q1")[1].reranked());
  io::write_rankings(dir.file("r2.jsonl"), back);
  EXPECT_EQ(slurp(dir.file("r.jsonl")), slurp(dir.file("r2.jsonl")));
  EXPECT_EQ(slurp(dir.file("r.jsonl")),
            "# vqr-rankings v1\n"
            "{\"query_id\":\"q1\",\"ranking\":[{\"candidate_id\":\"a\",\"cir_score_raw\":0.9,\"cir_score_norm\":1.0,"
            "\"vqa_score\":0.75,\"fused_score\":1.05,\"reranked\":true},{\"candidate_id\":\"b\",\"cir_score_raw\":0.1,"
            "\"cir_score_norm\":0.0,\"vqa_score\":null,\"fused_score\":0.0,\"reranked\":false}]}\n");
}

TEST(Io, TracesRoundTrip) {
  CandidateTrace t;
  t.candidate_image_id = "a";
  t.vqa_score = 0.5;
  t.entries.push_back({VisualQuestion("Is it red?", Answer::Yes, false), AnswerProbability{0.5, 0.5}, {}});
  t.entries.push_back({VisualQuestion("Is it long?", Answer::No, true), std::nullopt, "Timeout: slow"});
  std::map<std::string, ReasoningTrace> traces{{"q1", {t}}};
  TempDir dir;
  io::write_traces(dir.file("t.jsonl"), traces);
  auto back = io::read_traces(dir.file("t.jsonl"));
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].query_id, "q1");
  ASSERT_EQ(back[0].trace.entries.size(), 2u);
  EXPECT_TRUE(back[0].trace.entries[0].ok());
  EXPECT_EQ(back[0].trace.entries[1].error, "Timeout: slow");
  std::map<std::string, ReasoningTrace> again{{"q1", {back[0].trace}}};
  io::write_traces(dir.file("t2.jsonl"), again);
  EXPECT_EQ(slurp(dir.file("t.jsonl")), slurp(dir.file("t2.jsonl")));
}

TEST(Io, CorpusFieldOrder) {
  VqaExample e{"Is it red?", {"r", "c"}, Answer::No, ExampleSource::AutoAnnotated, "q1", 0.8};
  EXPECT_EQ(io::example_record(e).dump(),
            "{\"question\":\"Is it red?\",\"images\":[\"r\",\"c\"],\"answer\":\"No\",\"source\":\"auto_annotated\","
            "\"origin_query_id\":\"q1\"}");
  TempDir dir;
  spit(dir.file("c.jsonl"), "# vqr-corpus v1\n{\"question\":\"Is it red?\",\"images\":[\"c\"],\"answer\":\"Maybe\","
                            "\"source\":\"target_known\",\"origin_query_id\":\"q\"}\n");
  try {
    io::read_corpus(dir.file("c.jsonl"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidExpectedAnswer);
  }
}

TEST(Io, ReportHasHeaderThenPrettyJson) {
  TempDir dir;
  nlohmann::ordered_json body;
  body["a"] = 1;
  io::write_report(dir.file("m.json"), "metrics", body);
  EXPECT_EQ(slurp(dir.file("m.json")), "# vqr-metrics v1\n{\n  \"a\": 1\n}\n");
}
