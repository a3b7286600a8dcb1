#include "vqr/app.hpp"

#include <cstdio>
#include <filesystem>
#include <set>

#include "vqr/hash.hpp"
#include "vqr/http_client.hpp"
#include "vqr/io.hpp"
#include "vqr/log.hpp"

namespace vqr {

struct Pipeline::Owned {
  std::unique_ptr<TextClient> text_backend;
  std::unique_ptr<VqaClient> vqa_backend;
  std::unique_ptr<VqaClient> annotator_backend;
  std::unique_ptr<CachingTextClient> text_cache;
  std::unique_ptr<CachingVqaClient> vqa_cache;
  std::unique_ptr<CachingVqaClient> annotator_cache;
};

namespace {

std::shared_ptr<RecordStore> fixture_store(const BackendConfig& b) {
  return b.fixtures.empty() ? std::make_shared<RecordStore>() : std::make_shared<RecordStore>(b.fixtures);
}

// One cache file per role and backend identity.
std::shared_ptr<RecordStore> cache_store(const std::string& dir, const char* role, BackendMode mode,
                                         const BackendConfig& b) {
  std::filesystem::create_directories(dir);
  std::string id = "mock";
  if (mode == BackendMode::Live) {
    const auto& e = b.endpoint;
    id = sha256_hex(e.base_url + "\n" + e.path + "\n" + e.model + "\n" + e.vqa_instruction).substr(0, 12);
  }
  return std::make_shared<RecordStore>((std::filesystem::path(dir) / (std::string(role) + "-" + id + ".records")).string());
}

void require_path(const std::string& path, const char* what) {
  if (path.empty()) throw Error(ErrorCode::InvalidArgument, std::string("no ") + what + " path configured");
}

std::map<std::string, const Triplet*> by_query(const std::vector<Triplet>& triplets) {
  std::map<std::string, const Triplet*> out;
  for (const auto& t : triplets) out.emplace(t.query.query_id, &t);
  return out;
}

nlohmann::ordered_json metrics_json(const CategoryMetrics& m) {
  nlohmann::ordered_json j;
  j["queries"] = m.queries;
  j["r10"] = m.r10;
  j["r50"] = m.r50;
  j["mrr"] = m.mrr ? nlohmann::ordered_json(*m.mrr) : nlohmann::ordered_json(nullptr);
  return j;
}

}  // namespace

Pipeline::Pipeline(AppConfig config) : config_(std::move(config)), owned_(std::make_unique<Owned>()) {
  config_.validate();
  build_clients();
}

Pipeline::Pipeline(AppConfig config, TextClient& text, VqaClient& vqa, VqaClient& annotator)
    : config_(std::move(config)), owned_(std::make_unique<Owned>()), text_(&text), vqa_(&vqa), annotator_(&annotator) {
  config_.validate();
}

Pipeline::~Pipeline() = default;

void Pipeline::build_clients() {
  auto& o = *owned_;
  if (config_.backend == BackendMode::Mock) {
    o.text_backend = std::make_unique<MockTextClient>(fixture_store(config_.text), config_.text.strict);
    o.vqa_backend = std::make_unique<MockVqaClient>(fixture_store(config_.vqa), config_.vqa.strict);
    o.annotator_backend = std::make_unique<MockVqaClient>(fixture_store(config_.annotator), config_.annotator.strict);
  } else {
    o.text_backend = std::make_unique<HttpChatClient>(config_.text.endpoint);
    o.vqa_backend = std::make_unique<HttpChatClient>(config_.vqa.endpoint);
    o.annotator_backend = std::make_unique<HttpChatClient>(config_.annotator.endpoint);
  }
  text_ = o.text_backend.get();
  vqa_ = o.vqa_backend.get();
  annotator_ = o.annotator_backend.get();
  if (!config_.cache_dir.empty()) {
    const auto& dir = config_.cache_dir;
    o.text_cache = std::make_unique<CachingTextClient>(*text_, cache_store(dir, "text", config_.backend, config_.text));
    o.vqa_cache = std::make_unique<CachingVqaClient>(*vqa_, cache_store(dir, "vqa", config_.backend, config_.vqa));
    o.annotator_cache =
        std::make_unique<CachingVqaClient>(*annotator_, cache_store(dir, "annotator", config_.backend, config_.annotator));
    text_ = o.text_cache.get();
    vqa_ = o.vqa_cache.get();
    annotator_ = o.annotator_cache.get();
  }
}

const PromptTemplate& Pipeline::prompt_template() {
  if (config_.prompt_template.empty()) return PromptTemplate::builtin();
  if (!custom_prompt_) custom_prompt_ = std::make_unique<PromptTemplate>(PromptTemplate::from_file(config_.prompt_template));
  return *custom_prompt_;
}

// ---------------------------------------------------------------------------
// questions

// Counts calls passing through to the wrapped client.
class CountingTextClient : public TextClient {
 public:
  explicit CountingTextClient(TextClient& inner) : inner_(inner) {}
  std::string complete(const TextGenRequest& request) override {
    ++calls_;
    return inner_.complete(request);
  }
  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  TextClient& inner_;
  std::atomic<std::size_t> calls_{0};
};

QuestionCorpus Pipeline::generate(const std::vector<Triplet>& triplets, std::size_t* backend_calls) {
  GenerationOptions options;
  options.retry_budget = config_.retry_budget;
  options.prompt_template = &prompt_template();

  auto* cache = owned_->text_cache.get();
  const std::size_t before = cache ? cache->backend_calls() : 0;
  CountingTextClient counter(*text_);

  std::vector<RetrievalQuery> queries;
  queries.reserve(triplets.size());
  for (const auto& t : triplets) queries.push_back(t.query);
  auto results = bounded_map(std::span<const RetrievalQuery>(queries), static_cast<std::size_t>(config_.rerank.fan_out),
                             [&](const RetrievalQuery& q) { return generate_questions(q, counter, options); });

  QuestionCorpus corpus;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (!results[i].ok()) {
      const auto& e = *results[i].error;
      throw Error(e.code(), "query '" + queries[i].query_id + "': " + e.message());
    }
    corpus.emplace(queries[i].query_id, std::move(*results[i].value));
  }
  if (backend_calls) *backend_calls = cache ? cache->backend_calls() - before : counter.calls();
  return corpus;
}

QuestionsSummary Pipeline::run_questions() {
  require_path(config_.paths.triplets, "triplets");
  require_path(config_.paths.questions, "questions");
  const auto triplets = io::read_triplets(config_.paths.triplets);
  QuestionsSummary s;
  s.corpus = generate(triplets, &s.backend_calls);
  s.stats = question_stats(s.corpus);
  io::write_question_corpus(config_.paths.questions, s.corpus);
  log_info("questions: " + std::to_string(s.stats.queries) + " queries, " + std::to_string(s.stats.questions) +
           " questions, " + std::to_string(s.backend_calls) + " backend calls");
  return s;
}

// ---------------------------------------------------------------------------
// dataset

DatasetSummary Pipeline::build_dataset() {
  require_path(config_.paths.triplets, "triplets");
  require_path(config_.paths.questions, "questions");
  require_path(config_.paths.image_index, "image index");
  require_path(config_.paths.corpus, "corpus");
  const auto triplets = io::read_triplets(config_.paths.triplets);
  const auto questions = io::read_question_corpus(config_.paths.questions);
  const auto pool = io::read_image_index(config_.paths.image_index);

  auto positives = positives_from_targets(triplets, questions);
  const auto tasks = annotation_tasks(triplets, questions);
  AnnotationOptions options;
  options.seed = config_.seed;
  options.attempt_cap = config_.attempt_cap;
  options.fan_out = config_.rerank.fan_out;
  options.answer_tokens = config_.rerank.answer_tokens;
  auto annotated = sample_and_annotate(tasks, pool, *annotator_, options);

  DatasetSummary s;
  s.annotation_requests = annotated.requests;
  s.exhausted = annotated.exhausted;
  s.corpus = balance(std::move(positives), std::move(annotated.examples), config_.seed,
                     BalanceStrategy::DownsampleMajority, io::categories_of(triplets));
  io::write_corpus(config_.paths.corpus, s.corpus.examples);
  if (!config_.paths.report.empty()) io::write_report(config_.paths.report, "report", io::report_to_json(s.corpus.report));
  return s;
}

// ---------------------------------------------------------------------------
// rerank

RerankSummary Pipeline::rerank_all(const std::vector<Triplet>& triplets, const QuestionCorpus& questions,
                                   const std::map<std::string, std::vector<CandidateInput>>& cir_scores) {
  const auto queries = by_query(triplets);
  RerankSummary s;
  for (const auto& [qid, candidates] : cir_scores) {
    auto t = queries.find(qid);
    if (t == queries.end()) throw Error(ErrorCode::IngestionError, "cir scores name unknown query '" + qid + "'");
    ++s.queries;
    if (config_.rerank.n == 0) {
      s.rankings.emplace(qid, cir_only_ranking(candidates, config_.rerank.normalization));
      s.traces.emplace(qid, ReasoningTrace{});
      continue;
    }
    auto q = questions.find(qid);
    if (q == questions.end() || q->second.empty())
      throw Error(ErrorCode::MissingQuestions, "no questions for query '" + qid + "'");
    auto result = rerank(t->second->query, candidates, q->second, config_.rerank, *vqa_);
    s.requests += result.requests_issued;
    for (const auto& c : result.trace) s.demoted += c.demoted ? 1 : 0;
    s.rankings.emplace(qid, std::move(result.ranking));
    s.traces.emplace(qid, std::move(result.trace));
  }
  return s;
}

RerankSummary Pipeline::rerank_all() {
  require_path(config_.paths.triplets, "triplets");
  require_path(config_.paths.cir_scores, "cir scores");
  require_path(config_.paths.rankings, "rankings");
  const auto triplets = io::read_triplets(config_.paths.triplets);
  const auto scores = io::read_cir_scores(config_.paths.cir_scores);
  QuestionCorpus questions;
  if (config_.rerank.n > 0) {
    require_path(config_.paths.questions, "questions");
    questions = io::read_question_corpus(config_.paths.questions);
  }
  auto s = rerank_all(triplets, questions, scores);
  io::write_rankings(config_.paths.rankings, s.rankings);
  if (!config_.paths.traces.empty()) io::write_traces(config_.paths.traces, s.traces);
  log_info("rerank: " + std::to_string(s.queries) + " queries, " + std::to_string(s.requests) + " VQA requests, " +
           std::to_string(s.demoted) + " demoted");
  return s;
}

std::vector<SweepPoint> Pipeline::sweep(const std::vector<int>& n_values) {
  require_path(config_.paths.triplets, "triplets");
  require_path(config_.paths.cir_scores, "cir scores");
  const auto triplets = io::read_triplets(config_.paths.triplets);
  const auto scores = io::read_cir_scores(config_.paths.cir_scores);
  QuestionCorpus questions;
  if (!config_.paths.questions.empty()) questions = io::read_question_corpus(config_.paths.questions);
  const int saved_n = config_.rerank.n;
  SweepRunner runner = [&](int n) {
    config_.rerank.n = n;
    auto s = rerank_all(triplets, questions, scores);
    return SweepRun{std::move(s.rankings), s.requests};
  };
  try {
    auto curve = sweep_n(runner, n_values, io::targets_of(triplets));
    config_.rerank.n = saved_n;
    return curve;
  } catch (...) {
    config_.rerank.n = saved_n;
    throw;
  }
}

// ---------------------------------------------------------------------------
// eval

EvalSummary evaluate_rankings(const RankingsByQuery& rankings, const std::vector<Triplet>& triplets,
                              const std::string& label) {
  if (rankings.empty()) throw Error(ErrorCode::IngestionError, "rankings file contains no queries");
  const auto targets = io::targets_of(triplets);
  const auto categories = io::categories_of(triplets);
  EvalSummary s;
  s.per_category = per_category_metrics(rankings, targets, categories);
  const auto ranks = target_ranks(rankings, targets);
  s.overall = {recall_at_k(ranks, 10), recall_at_k(ranks, 50), mrr(ranks), ranks.size()};

  nlohmann::ordered_json report;
  nlohmann::ordered_json cats = nlohmann::ordered_json::object();
  for (const auto& [cat, m] : s.per_category) cats[std::string(to_string(cat))] = metrics_json(m);
  report["categories"] = cats;
  report["overall"] = metrics_json(s.overall);
  try {
    s.table_row = aggregate(s.per_category);
    s.table = format_table(label, *s.table_row);
    nlohmann::ordered_json avg;
    avg["r10"] = s.table_row->avg_r10;
    avg["r50"] = s.table_row->avg_r50;
    avg["global"] = s.table_row->global;
    avg["mrr"] = s.table_row->avg_mrr ? nlohmann::ordered_json(*s.table_row->avg_mrr) : nlohmann::ordered_json(nullptr);
    report["average"] = avg;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::MissingCategory) throw;
    report["average"] = nullptr;
    s.table = "(table omitted: no queries for category " + e.message() + ")\n";
  }
  s.report = std::move(report);
  return s;
}

EvalSummary Pipeline::evaluate() {
  require_path(config_.paths.rankings, "rankings");
  require_path(config_.paths.triplets, "triplets");
  auto s = evaluate_rankings(io::read_rankings(config_.paths.rankings), io::read_triplets(config_.paths.triplets));
  if (!config_.paths.metrics.empty()) io::write_report(config_.paths.metrics, "metrics", s.report);
  return s;
}

// ---------------------------------------------------------------------------
// trace

std::string format_trace(const std::string& query_id, const CandidateTrace& trace) {
  std::string out;
  char buf[1024];
  std::snprintf(buf, sizeof buf, "query %s  candidate %s\n", query_id.c_str(), trace.candidate_image_id.c_str());
  out += buf;
  std::snprintf(buf, sizeof buf, "  %-2s %-9s %-9s %-11s %-4s %s\n", "", "expected", "predicted", "probability", "ref",
                "question");
  out += buf;
  for (const auto& e : trace.entries) {
    const std::string expected(to_string(e.question.expected_answer()));
    const char* ref = e.question.needs_reference() ? "yes" : "no";
    if (e.ok()) {
      const bool match = e.predicted() == e.question.expected_answer();
      std::snprintf(buf, sizeof buf, "  %-2s %-9s %-9s %-11.6f %-4s %s\n", match ? "ok" : "x", expected.c_str(),
                    std::string(to_string(e.predicted())).c_str(), e.probability_of_expected(), ref,
                    e.question.text().c_str());
    } else {
      std::snprintf(buf, sizeof buf, "  %-2s %-9s %-9s %-11s %-4s %s  [%s]\n", "!", expected.c_str(), "-", "-", ref,
                    e.question.text().c_str(), e.error.c_str());
    }
    out += buf;
  }
  if (trace.vqa_score) {
    std::snprintf(buf, sizeof buf, "  vqa_score %.6f\n", *trace.vqa_score);
    out += buf;
  }
  if (trace.demoted) out += "  demoted: too many failed questions, ranked by CIR score only\n";
  return out;
}

std::string trace_report(const std::string& traces_path, const std::string& query_id, const std::string& candidate_id) {
  for (const auto& st : io::read_traces(traces_path)) {
    if (st.query_id == query_id && st.trace.candidate_image_id == candidate_id) return format_trace(query_id, st.trace);
  }
  throw Error(ErrorCode::NotFound, "no trace for query '" + query_id + "' candidate '" + candidate_id + "'");
}

}  // namespace vqr
