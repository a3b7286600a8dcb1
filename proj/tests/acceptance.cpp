// Acceptance checks: prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. Runs entirely on mock backends.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>

#include "question_gen.hpp"
#include "support.hpp"
#include "vqr/app.hpp"
#include "vqr/dataset.hpp"
#include "vqr/evaluation.hpp"
#include "vqr/http_client.hpp"
#include "vqr/log.hpp"
#include "vqr/io.hpp"
#include "vqr/questions.hpp"
#include "vqr/rerank.hpp"
#include "vqr/scoring.hpp"

using namespace vqr;
using namespace vqr::test;

namespace {

struct Failure {
  std::string what;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure{what};
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

long double sigma_oracle(long double x, long double k) {
  const long double y = 1.0L / (2.0L * k);
  const long double coth = std::cosh(y) / std::sinh(y);
  return 0.5L + coth * (1.0L / (1.0L + std::exp(-x / k)) - 0.5L);
}

std::vector<std::string> ids(const Ranking& r) {
  std::vector<std::string> out;
  for (const auto& s : r) out.push_back(s.candidate_image_id);
  return out;
}

class ConstantVqa : public VqaClient {
 public:
  explicit ConstantVqa(double p) : p_(p) {}
  TokenLogprobs answer_logprobs(const VqaRequest& r) override {
    return {{r.answer_tokens.yes, std::log(p_)}, {r.answer_tokens.no, std::log1p(-p_)}};
  }

 private:
  double p_;
};

std::vector<CandidateInput> random_candidates(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::vector<CandidateInput> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({"c" + std::to_string(rng() % 100000) + "_" + std::to_string(i), std::round(u(rng) * 20) / 20});
  return out;
}

std::vector<std::string> cir_order(std::span<const CandidateInput> c) {
  std::vector<std::string> out;
  for (const auto& x : select_top_n(c, c.size()).top) out.push_back(x.candidate_image_id);
  return out;
}

const std::vector<VisualQuestion> kQuestions{{"Is it red?", Answer::Yes, false}, {"Is it longer?", Answer::No, true}};
const RetrievalQuery kQuery{"q", "ref", "is red and longer", Category::Dress};

// ---------------------------------------------------------------------------

std::string sigma_identities() {
  const auto start = std::chrono::steady_clock::now();
  for (double k : {0.01, 0.8375, 100.0}) {
    require(std::abs(sigma_k(0.0, k) - 0.5) <= 1e-12, "sigma(0) at k=" + fmt(k));
    require(std::abs(sigma_k(1.0, k) - 1.0) <= 1e-12, "sigma(1) at k=" + fmt(k));
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
      const double x = u(rng);
      require(std::abs(sigma_k(-x, k) - (1.0 - sigma_k(x, k))) <= 1e-12, "symmetry at x=" + fmt(x));
    }
    double prev = sigma_k(0.0, k);
    std::size_t flat = 0;
    for (int i = 1; i < 10000; ++i) {
      const double cur = sigma_k(i / 9999.0, k);
      require(cur >= prev, "decreasing at k=" + fmt(k));
      flat += cur == prev ? 1 : 0;
      prev = cur;
    }
    // At k=0.01 tanh(x/2k) rounds to 1 for x above ~0.37, so only
    // non-decreasing is representable in double precision there.
    if (k != 0.01) require(flat == 0, "not strictly increasing at k=" + fmt(k));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  require(secs < 1.0, "took " + fmt(secs) + " s");
  return "strict on [0,1] for k=0.8375,100; non-decreasing for k=0.01";
}

std::string sigma_golden() {
  const double v = sigma_k(0.5, 0.8375);
  require(std::abs(v - 0.771017191499) <= 1e-10, "got " + fmt(v));
  return "sigma(0.5) = " + fmt(v);
}

std::string score_oracles() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> p(0.0, 1.0), lambda(0.0, 1.0), logk(-2.0, 2.0);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> probs(1 + rng() % 10);
    long double sum = 0;
    for (auto& x : probs) sum += (x = p(rng));
    const long double mean = sum / static_cast<long double>(probs.size());
    const double v = vqa_score(probs);
    require(std::abs(v - static_cast<double>(mean)) <= 1e-12, "vqa_score case " + std::to_string(i));

    RerankConfig c;
    c.lambda_vqa = lambda(rng);
    c.k = std::pow(10.0, logk(rng));
    const double norm = p(rng);
    const long double oracle = norm + static_cast<long double>(c.lambda_vqa) * sigma_oracle(v, c.k);
    require(std::abs(fuse(norm, v, c) - static_cast<double>(oracle)) <= 1e-12, "fuse case " + std::to_string(i));
  }
  return "1000 cases";
}

std::string golden_rerank() {
  MockVqaClient client(golden_vqa_store());
  auto result = rerank(golden_query(), golden_candidates(), golden_questions(), golden_config(), client);
  const auto& expected = golden_expected();
  for (std::size_t i = 0; i < expected.size(); ++i) {
    require(result.ranking[i].candidate_image_id == expected[i].id, "order at " + std::to_string(i));
    require(std::abs(result.ranking[i].fused_score - expected[i].fused) <= 1e-12, "fused at " + std::to_string(i));
  }
  TempDir dir;
  io::write_rankings(dir.file("r.jsonl"), {{golden_query().query_id, result.ranking}});
  io::write_traces(dir.file("t.jsonl"), {{golden_query().query_id, result.trace}});
  const auto golden_r = slurp(data_path("golden/rankings.jsonl"));
  const auto golden_t = slurp(data_path("golden/traces.jsonl"));
  require(!golden_r.empty() && !golden_t.empty(), "golden files missing");
  require(slurp(dir.file("r.jsonl")) == golden_r, "rankings differ from golden file");
  require(slurp(dir.file("t.jsonl")) == golden_t, "traces differ from golden file");
  return "order B C A D E F G H";
}

std::string degeneracies() {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 200; ++i) {
    auto c = random_candidates(rng, 1 + rng() % 40);
    RerankConfig cfg;
    cfg.lambda_vqa = 0.0;
    cfg.n = 1 + static_cast<int>(rng() % 50);
    MockVqaClient client(std::make_shared<RecordStore>(), false);
    require(ids(rerank(kQuery, c, kQuestions, cfg, client).ranking) == cir_order(c), "lambda=0 instance " + std::to_string(i));
  }
  for (int i = 0; i < 200; ++i) {
    auto c = random_candidates(rng, 1 + rng() % 40);
    RerankConfig cfg;
    cfg.n = 1 + static_cast<int>(rng() % 50);
    ConstantVqa client(std::uniform_real_distribution<double>(0.01, 0.99)(rng));
    const auto r = ids(rerank(kQuery, c, kQuestions, cfg, client).ranking);
    const auto expected = cir_order(c);
    const std::size_t top = std::min<std::size_t>(cfg.n, c.size());
    require(std::equal(expected.begin(), expected.begin() + static_cast<std::ptrdiff_t>(top), r.begin()),
            "uniform vqa instance " + std::to_string(i));
  }
  for (int i = 0; i < 200; ++i) {
    auto c = random_candidates(rng, 1 + rng() % 40);
    RerankConfig cfg;
    cfg.n = static_cast<int>(c.size() + rng() % 5);
    MockVqaClient client(std::make_shared<RecordStore>(), false);
    const auto r = rerank(kQuery, c, kQuestions, cfg, client);
    for (const auto& s : r.ranking) require(s.reranked(), "n>=N instance " + std::to_string(i));
    require(r.requests_issued == c.size() * kQuestions.size(), "n>=N request count");
  }
  return "3 x 200 instances";
}

std::string metric_oracles() {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 500; ++i) {
    RankingsByQuery rankings;
    TargetsByQuery targets;
    const int queries = 1 + static_cast<int>(rng() % 30);
    for (int q = 0; q < queries; ++q) {
      std::vector<std::string> order;
      for (int j = 0, len = static_cast<int>(rng() % 80); j < len; ++j) order.push_back("c" + std::to_string(j));
      std::shuffle(order.begin(), order.end(), rng);
      Ranking r;
      for (const auto& id : order) r.push_back({id, 0, 0, std::nullopt, 0});
      rankings["q" + std::to_string(q)] = r;
      targets["q" + std::to_string(q)] = "c" + std::to_string(rng() % 90);
    }
    for (std::size_t k : {1u, 10u, 50u}) {
      std::size_t hits = 0;
      for (const auto& [qid, r] : rankings)
        for (std::size_t j = 0; j < r.size() && j < k; ++j) hits += r[j].candidate_image_id == targets[qid];
      require(recall_at_k(rankings, targets, k) == 100.0 * hits / static_cast<double>(rankings.size()),
              "recall instance " + std::to_string(i));
    }
    double rr = 0;
    for (const auto& [qid, r] : rankings)
      for (std::size_t j = 0; j < r.size(); ++j)
        if (r[j].candidate_image_id == targets[qid]) rr += 1.0 / static_cast<double>(j + 1);
    require(mrr(rankings, targets) == rr / static_cast<double>(rankings.size()), "mrr instance " + std::to_string(i));
  }

  const CategoryMetrics m{56.89, 76.70, std::nullopt, 1};
  const auto row = aggregate({{Category::Dress, m}, {Category::Shirt, m}, {Category::Toptee, m}});
  require(std::abs(row.global - 66.79) <= 0.005, "global " + fmt(row.global));

  for (int i = 0; i < 200; ++i) {
    std::vector<BinaryPrediction> p;
    for (int j = 0, n = 2 + static_cast<int>(rng() % 100); j < n; ++j)
      p.push_back({static_cast<double>(rng() % 21) / 20.0, rng() % 2 ? Answer::Yes : Answer::No});
    p[0].gold = Answer::Yes;
    p[1].gold = Answer::No;
    require(std::abs(auc_roc_rank_statistic(p) - auc_roc_trapezoid(p)) <= 1e-9, "auc instance " + std::to_string(i));
  }
  return "500 instances; Global " + fmt(row.global);
}

AppConfig mini_config(const TempDir& dir, int fan_out) {
  AppConfig c;
  c.annotator.strict = false;
  c.seed = 7;
  c.rerank.fan_out = fan_out;
  c.paths.triplets = data_path("mini/triplets.jsonl");
  c.paths.questions = data_path("mini/questions.jsonl");
  c.paths.image_index = data_path("mini/image_index.jsonl");
  c.paths.corpus = dir.file("corpus.jsonl");
  c.paths.report = dir.file("report.json");
  return c;
}

std::string dataset_builder() {
  TempDir a, b;
  auto s = Pipeline(mini_config(a, 8)).build_dataset();
  Pipeline(mini_config(b, 3)).build_dataset();
  require(slurp(a.file("corpus.jsonl")) == slurp(b.file("corpus.jsonl")), "corpus differs between runs");
  require(slurp(a.file("report.json")) == slurp(b.file("report.json")), "report differs between runs");
  const auto& r = s.corpus.report;
  const auto diff = static_cast<long>(r.yes) - static_cast<long>(r.no);
  require(diff == 0 || (r.total_examples % 2 == 1 && std::abs(diff) == 1), "unbalanced");
  require(slurp(a.file("report.json")).find("\"dual_image_fraction\"") != std::string::npos, "dual fraction missing");

  const auto triplets = io::read_triplets(data_path("mini/triplets.jsonl"));
  const auto corpus = io::read_question_corpus(data_path("mini/questions.jsonl"));
  const auto pool = io::read_image_index(data_path("mini/image_index.jsonl"));
  std::map<std::string, const Triplet*> by_id;
  for (const auto& t : triplets) by_id[t.query.query_id] = &t;
  std::set<std::string> pairs;
  for (const auto& e : io::read_corpus(a.file("corpus.jsonl"))) {
    const auto& t = *by_id.at(e.origin_query_id);
    const auto& qs = corpus.at(e.origin_query_id);
    auto q = std::find_if(qs.begin(), qs.end(), [&](const VisualQuestion& v) { return v.text() == e.question_text; });
    require(q != qs.end(), "question not from its query");
    require(e.image_refs.size() == (q->needs_reference() ? 2u : 1u), "image count");
    if (q->needs_reference()) require(e.image_refs.front() == t.query.reference_image_id, "reference image");
    const auto& img = e.image_refs.back();
    if (e.source == ExampleSource::TargetKnown) {
      require(img == t.target_image_id && e.answer == q->expected_answer(), "positive example");
    } else {
      const auto same = pool.images(t.query.category);
      require(img != t.target_image_id && img != t.query.reference_image_id, "negative uses target or reference");
      require(std::find(same.begin(), same.end(), img) != same.end(), "negative from another category");
      require(e.answer != q->expected_answer(), "negative label");
    }
    std::string key = e.question_text;
    for (const auto& i : e.image_refs) key += "\x1f" + i;
    require(pairs.insert(key).second, "duplicate pair");
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu examples, yes_fraction %.3f, dual-image %.3f", r.total_examples,
                r.yes_fraction, r.dual_image_fraction);
  return buf;
}

std::string concurrency_contract() {
  const auto triplets = io::read_triplets(data_path("mini/triplets.jsonl"));
  const auto questions = io::read_question_corpus(data_path("mini/questions.jsonl"));
  std::size_t question_count = 0;
  for (const auto& [_, qs] : questions) question_count += qs.size();
  std::map<std::string, std::vector<CandidateInput>> scores;
  std::mt19937_64 rng(3);
  for (const auto& t : triplets)
    for (int i = 0; i < 300; ++i) scores[t.query.query_id].push_back({"w" + std::to_string(i), (rng() % 1000) / 1000.0});

  TempDir dir;
  MockTextClient text;
  int peak = 0;
  for (int limit : {1, 4, 8}) {
    InstrumentedVqaClient vqa(std::chrono::microseconds(100));
    auto c = mini_config(dir, limit);
    c.rerank.n = 30;
    Pipeline p(c, text, vqa, vqa);
    const auto s = p.rerank_all(triplets, questions, scores);
    require(vqa.peak_in_flight() <= limit, "peak " + std::to_string(vqa.peak_in_flight()) + " > " + std::to_string(limit));
    require(s.requests == 30 * question_count && vqa.calls() == s.requests, "request count at limit " + std::to_string(limit));
    peak = std::max(peak, vqa.peak_in_flight());
  }

  std::map<int, std::size_t> requests;
  for (int n : {70, 250}) {
    InstrumentedVqaClient vqa(std::chrono::microseconds(0));
    auto c = mini_config(dir, 8);
    c.rerank.n = n;
    Pipeline p(c, text, vqa, vqa);
    requests[n] = p.rerank_all(triplets, questions, scores).requests;
    require(requests[n] == static_cast<std::size_t>(n) * question_count, "requests at n=" + std::to_string(n));
  }
  require(requests[70] * 250 == requests[250] * 70, "70:250 ratio");
  return "requests " + std::to_string(requests[70]) + ":" + std::to_string(requests[250]) + ", peak in-flight " +
         std::to_string(peak);
}

std::string wire_conformance() {
  const auto manifest = nlohmann::json::parse(slurp(data_path("wire/manifest.json")));
  std::size_t checked = 0;
  for (const auto& m : manifest) {
    const auto name = m.at("name").get<std::string>();
    const auto response = slurp(data_path("wire/" + name + ".response.json"));
    const auto request = slurp(data_path("wire/" + name + ".request.json"));
    require(wire::serialize_completion(wire::parse_completion(response)) == response, name + " response bytes");
    ChatEndpoint ep;
    ep.model = m.at("endpoint").at("model");
    ep.top_logprobs = m.at("endpoint").at("top_logprobs");
    ep.image_url_template = m.at("endpoint").at("image_url_template");
    if (m.at("kind") == "vqa") {
      const auto expected = *parse_answer(m.at("expected").get<std::string>());
      VqaRequest req;
      req.question_text = m.at("question");
      req.image_refs = m.at("images").get<std::vector<std::string>>();
      std::vector<std::string> urls;
      for (const auto& ref : req.image_refs) urls.push_back(resolve_image_url(ref, ep));
      require(wire::vqa_request_body(req, ep, urls) == request, name + " request bytes");
      const auto lp = wire::first_token_logprobs(wire::parse_completion(response), {});
      const double p = answer_probability(lp, {}, expected).expected;
      require(std::abs(p - m.at("p_expected").get<double>()) <= 1e-9, name + " p = " + fmt(p));
    } else {
      require(wire::text_request_body({m.at("prompt"), m.at("max_tokens"), 0.0}, ep) == request, name + " request bytes");
    }
    ++checked;
  }
  return std::to_string(checked) + " recorded exchanges";
}

std::string question_robustness() {
  std::mt19937_64 rng(99);
  const RetrievalQuery q{"q1", "ref", "is red and shorter", Category::Dress};
  std::size_t ok = 0, typed = 0;
  for (int i = 0; i < 10000; ++i) {
    ScriptedTextClient backend({fuzz_output(rng)});
    GenerationOptions options;
    options.retry_budget = 0;
    try {
      const auto violation = question_list_violation(generate_questions(q, backend, options));
      require(violation.empty(), "fuzz case " + std::to_string(i) + ": " + violation);
      ++ok;
    } catch (const Error& e) {
      require(is_typed_question_error(e.code()), std::string("untyped error ") + e.what());
      ++typed;
    }
  }
  std::mt19937_64 rng2(2024);
  for (int i = 0; i < 1000; ++i) {
    const auto qs = random_valid_list(rng2);
    require(parse_question_list(serialize_questions(qs)).questions == qs, "round trip case " + std::to_string(i));
  }
  return std::to_string(ok) + " valid lists, " + std::to_string(typed) + " typed errors; 1000 round trips";
}

}  // namespace

int main() {
  set_log_level(LogLevel::Error);
  const std::vector<std::pair<const char*, std::function<std::string()>>> criteria{
      {"sigma_k identities", sigma_identities},
      {"sigma_k golden value", sigma_golden},
      {"vqa_score and fusion oracles", score_oracles},
      {"rerank golden fixture", golden_rerank},
      {"degeneracy suite", degeneracies},
      {"metrics oracles", metric_oracles},
      {"dataset builder", dataset_builder},
      {"concurrency contract", concurrency_contract},
      {"wire protocol conformance", wire_conformance},
      {"question generation robustness", question_robustness},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    std::string detail;
    bool ok = false;
    try {
      detail = criteria[i].second();
      ok = true;
    } catch (const Failure& f) {
      detail = f.what;
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("%s %zu %s: %s\n", ok ? "PASS" : "FAIL", i + 1, criteria[i].first, detail.c_str());
    failed += ok ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
