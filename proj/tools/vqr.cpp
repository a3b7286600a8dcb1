// vqr: command-line driver for question generation, dataset building,
// re-ranking, evaluation, trace inspection and the re-rank service.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "vqr/app.hpp"
#include "vqr/io.hpp"
#include "vqr/log.hpp"
#include "vqr/service.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kDataError = 2, kBackendError = 3 };

struct Overrides {
  std::string config_path;
  std::optional<double> lambda_vqa;
  std::optional<double> k;
  std::optional<int> n;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> backend;
  std::optional<std::string> cache_dir;
  std::optional<int> fan_out;
  std::optional<int> retry_budget;
  std::optional<int> attempt_cap;
  std::optional<std::string> prompt_template;
  std::optional<std::string> text_fixtures;
  std::optional<std::string> vqa_fixtures;
  std::optional<std::string> annotator_fixtures;
  bool lenient_mock = false;
  std::string log_level = "info";
  vqr::PathConfig paths;
};

template <typename T>
void override_with(const std::optional<T>& v, T& target) {
  if (v) target = *v;
}

void override_with(const std::string& v, std::string& target) {
  if (!v.empty()) target = v;
}

vqr::AppConfig resolve_config(const Overrides& o) {
  vqr::AppConfig c = o.config_path.empty() ? vqr::AppConfig{} : vqr::AppConfig::load(o.config_path);
  override_with(o.lambda_vqa, c.rerank.lambda_vqa);
  override_with(o.k, c.rerank.k);
  override_with(o.n, c.rerank.n);
  override_with(o.seed, c.seed);
  if (o.backend) c.backend = vqr::parse_backend_mode(*o.backend);
  override_with(o.cache_dir, c.cache_dir);
  override_with(o.fan_out, c.rerank.fan_out);
  override_with(o.retry_budget, c.retry_budget);
  override_with(o.attempt_cap, c.attempt_cap);
  override_with(o.prompt_template, c.prompt_template);
  override_with(o.text_fixtures, c.text.fixtures);
  override_with(o.vqa_fixtures, c.vqa.fixtures);
  override_with(o.annotator_fixtures, c.annotator.fixtures);
  if (o.lenient_mock) c.text.strict = c.vqa.strict = c.annotator.strict = false;
  override_with(o.paths.triplets, c.paths.triplets);
  override_with(o.paths.questions, c.paths.questions);
  override_with(o.paths.cir_scores, c.paths.cir_scores);
  override_with(o.paths.image_index, c.paths.image_index);
  override_with(o.paths.rankings, c.paths.rankings);
  override_with(o.paths.traces, c.paths.traces);
  override_with(o.paths.corpus, c.paths.corpus);
  override_with(o.paths.report, c.paths.report);
  override_with(o.paths.metrics, c.paths.metrics);
  c.validate();
  return c;
}

int exit_code_for(const vqr::Error& e) {
  using vqr::ErrorCode;
  if (vqr::is_backend_error(e.code()) || e.code() == ErrorCode::AnnotatorUnavailable) return kBackendError;
  if (e.code() == ErrorCode::InvalidConfig || e.code() == ErrorCode::InvalidArgument ||
      e.code() == ErrorCode::NonPositiveK)
    return kUsage;
  return kDataError;
}

vqr::RerankService* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Composed image retrieval re-ranking with visual question answering"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "vqr 1.0.0");

  Overrides o;
  app.add_option("--config", o.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--lambda-vqa", o.lambda_vqa, "Fusion weight of the VQA term");
  app.add_option("--k", o.k, "Compression parameter of the VQA term (> 0)");
  app.add_option("--n", o.n, "Re-ranking depth");
  app.add_option("--seed", o.seed, "Seed for sampling and balancing");
  app.add_option("--backend", o.backend, "Inference backend")->check(CLI::IsMember({"live", "mock"}));
  app.add_option("--cache-dir", o.cache_dir, "Directory for response caches");
  app.add_option("--fan-out", o.fan_out, "Maximum in-flight backend requests");
  app.add_option("--retry-budget", o.retry_budget, "Re-asks after an unparseable question list");
  app.add_option("--attempt-cap", o.attempt_cap, "Negative sampling attempts per question");
  app.add_option("--prompt-template", o.prompt_template, "Question generation prompt template file");
  app.add_option("--text-fixtures", o.text_fixtures, "Mock text backend record file");
  app.add_option("--vqa-fixtures", o.vqa_fixtures, "Mock VQA backend record file");
  app.add_option("--annotator-fixtures", o.annotator_fixtures, "Mock annotator record file");
  app.add_flag("--lenient-mock", o.lenient_mock, "Mock backends answer unknown requests instead of failing");
  app.add_option("--log-level", o.log_level, "debug, info, warn or error")
      ->check(CLI::IsMember({"debug", "info", "warn", "error"}));

  auto* questions = app.add_subcommand("questions", "Generate visual questions for every triplet");
  questions->add_option("--triplets", o.paths.triplets, "Triplets file");
  questions->add_option("--out", o.paths.questions, "Question corpus to write");

  auto* dataset = app.add_subcommand("build-dataset", "Build a balanced yes/no VQA corpus");
  dataset->add_option("--triplets", o.paths.triplets, "Triplets file");
  dataset->add_option("--questions", o.paths.questions, "Question corpus");
  dataset->add_option("--image-index", o.paths.image_index, "Image index for negative sampling");
  dataset->add_option("--out", o.paths.corpus, "Corpus file to write");
  dataset->add_option("--report", o.paths.report, "Balance report to write");

  auto* rerank = app.add_subcommand("rerank", "Re-rank CIR results with VQA scores");
  rerank->add_option("--triplets", o.paths.triplets, "Triplets file (queries and reference images)");
  rerank->add_option("--questions", o.paths.questions, "Question corpus");
  rerank->add_option("--cir-scores", o.paths.cir_scores, "CIR scores file");
  rerank->add_option("--out", o.paths.rankings, "Rankings file to write");
  rerank->add_option("--traces", o.paths.traces, "Traces file to write");

  auto* eval = app.add_subcommand("eval", "Recall@10/50 and MRR of a rankings file");
  eval->add_option("--rankings", o.paths.rankings, "Rankings file");
  eval->add_option("--triplets", o.paths.triplets, "Triplets file (targets and categories)");
  eval->add_option("--out", o.paths.metrics, "Metrics report to write");
  std::string label = "CIR + VQA re-ranking";
  eval->add_option("--label", label, "Row label in the table");

  auto* trace = app.add_subcommand("trace", "Show the per-question evidence for one candidate");
  std::string query_id, candidate_id;
  trace->add_option("--traces", o.paths.traces, "Traces file");
  trace->add_option("--query", query_id, "Query id")->required();
  trace->add_option("--candidate", candidate_id, "Candidate image id")->required();

  auto* sweep = app.add_subcommand("sweep", "Global recall and request count for several depths");
  sweep->add_option("--triplets", o.paths.triplets, "Triplets file");
  sweep->add_option("--questions", o.paths.questions, "Question corpus");
  sweep->add_option("--cir-scores", o.paths.cir_scores, "CIR scores file");
  std::vector<int> n_values{0, 10, 25, 50, 70, 100, 250};
  sweep->add_option("--depths", n_values, "Depths to evaluate")->delimiter(',');

  auto* serve = app.add_subcommand("serve", "Serve POST /rerank over HTTP");
  std::optional<std::string> host;
  std::optional<int> port;
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks a free one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  const std::map<std::string, vqr::LogLevel> levels{{"debug", vqr::LogLevel::Debug},
                                                    {"info", vqr::LogLevel::Info},
                                                    {"warn", vqr::LogLevel::Warn},
                                                    {"error", vqr::LogLevel::Error}};
  vqr::set_log_level(levels.at(o.log_level));

  try {
    if (*trace) {
      std::string path = o.paths.traces;
      if (path.empty() && !o.config_path.empty()) path = resolve_config(o).paths.traces;
      if (path.empty()) throw vqr::Error(vqr::ErrorCode::InvalidArgument, "no traces path configured");
      std::cout << vqr::trace_report(path, query_id, candidate_id);
      return kOk;
    }

    auto config = resolve_config(o);
    if (*serve) {
      override_with(host, config.host);
      override_with(port, config.port);
    }
    vqr::Pipeline pipeline(config);

    if (*questions) {
      auto s = pipeline.run_questions();
      std::printf("queries %zu  questions %zu  avg/query %.3f  dual-image %.3f  backend calls %zu\n", s.stats.queries,
                  s.stats.questions, s.stats.avg_questions_per_triplet, s.stats.dual_image_fraction, s.backend_calls);
    } else if (*dataset) {
      auto s = pipeline.build_dataset();
      std::cout << vqr::io::report_to_json(s.corpus.report).dump(2) << "\n";
      std::printf("annotation requests %zu  exhausted %zu\n", s.annotation_requests, s.exhausted);
    } else if (*rerank) {
      auto s = pipeline.rerank_all();
      std::printf("queries %zu  vqa requests %zu  demoted %zu\n", s.queries, s.requests, s.demoted);
    } else if (*eval) {
      if (config.paths.rankings.empty() || config.paths.triplets.empty())
        throw vqr::Error(vqr::ErrorCode::InvalidArgument, "eval needs --rankings and --triplets");
      auto s = vqr::evaluate_rankings(vqr::io::read_rankings(config.paths.rankings),
                                      vqr::io::read_triplets(config.paths.triplets), label);
      if (!config.paths.metrics.empty()) vqr::io::write_report(config.paths.metrics, "metrics", s.report);
      std::cout << s.table;
      std::printf("overall  queries %zu  R@10 %.2f  R@50 %.2f  MRR %.4f\n", s.overall.queries, s.overall.r10,
                  s.overall.r50, s.overall.mrr.value_or(0.0));
    } else if (*sweep) {
      auto curve = pipeline.sweep(n_values);
      std::printf("%6s %10s %10s\n", "n", "global", "requests");
      for (const auto& p : curve) std::printf("%6d %10.2f %10zu\n", p.n, p.average_recall, p.requests);
    } else if (*serve) {
      vqr::RerankService service(config.rerank, pipeline.text_client(), pipeline.vqa_client(), config.retry_budget);
      const int bound = service.bind(config.host, config.port);
      std::printf("listening on %s:%d\n", config.host.c_str(), bound);
      std::fflush(stdout);
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      service.listen();
      g_service = nullptr;
    }
    return kOk;
  } catch (const vqr::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kDataError;
  }
}
