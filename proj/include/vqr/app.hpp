#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "vqr/config.hpp"
#include "vqr/dataset.hpp"
#include "vqr/evaluation.hpp"
#include "vqr/inference.hpp"
#include "vqr/questions.hpp"
#include "vqr/rerank.hpp"

namespace vqr {

struct QuestionsSummary {
  QuestionCorpus corpus;
  QuestionGenStats stats;
  std::size_t backend_calls = 0;  // calls that reached the text backend (cache misses)
};

struct RerankSummary {
  RankingsByQuery rankings;
  std::map<std::string, ReasoningTrace> traces;
  std::size_t queries = 0;
  std::size_t requests = 0;
  std::size_t demoted = 0;
};

struct DatasetSummary {
  BalancedCorpus corpus;
  std::size_t annotation_requests = 0;
  std::size_t exhausted = 0;
};

struct EvalSummary {
  std::map<Category, CategoryMetrics> per_category;
  CategoryMetrics overall;
  std::optional<TableRow> table_row;  // absent unless dress, shirt and toptee are all present
  std::string table;
  nlohmann::ordered_json report;
};

/// Wires configuration, files and clients into the pipeline stages. Clients
/// are built from the config (mock or live, optionally behind a response
/// cache) or injected.
class Pipeline {
 public:
  explicit Pipeline(AppConfig config);
  Pipeline(AppConfig config, TextClient& text, VqaClient& vqa, VqaClient& annotator);
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  const AppConfig& config() const noexcept { return config_; }
  AppConfig& config() noexcept { return config_; }

  TextClient& text_client() { return *text_; }
  VqaClient& vqa_client() { return *vqa_; }
  VqaClient& annotator_client() { return *annotator_; }

  // Reads paths.triplets, writes paths.questions.
  QuestionsSummary run_questions();
  QuestionCorpus generate(const std::vector<Triplet>& triplets, std::size_t* backend_calls = nullptr);

  // Reads paths.triplets, paths.questions, paths.image_index; writes paths.corpus and paths.report.
  DatasetSummary build_dataset();

  // Reads paths.triplets, paths.questions, paths.cir_scores; writes paths.rankings and paths.traces.
  RerankSummary rerank_all();
  RerankSummary rerank_all(const std::vector<Triplet>& triplets, const QuestionCorpus& questions,
                           const std::map<std::string, std::vector<CandidateInput>>& cir_scores);

  // Reads paths.rankings and paths.triplets; writes paths.metrics when set.
  EvalSummary evaluate();

  // Global recall and request count for each re-ranking depth, without writing files.
  std::vector<SweepPoint> sweep(const std::vector<int>& n_values);

 private:
  void build_clients();
  const PromptTemplate& prompt_template();

  AppConfig config_;
  struct Owned;
  std::unique_ptr<Owned> owned_;
  TextClient* text_ = nullptr;
  VqaClient* vqa_ = nullptr;
  VqaClient* annotator_ = nullptr;
  std::unique_ptr<PromptTemplate> custom_prompt_;
};

EvalSummary evaluate_rankings(const RankingsByQuery& rankings, const std::vector<Triplet>& triplets,
                              const std::string& label = "CIR + VQA re-ranking");

/// Per-question table for one stored candidate trace. Throws NotFound when
/// the (query, candidate) pair is not in the file.
std::string trace_report(const std::string& traces_path, const std::string& query_id, const std::string& candidate_id);
std::string format_trace(const std::string& query_id, const CandidateTrace& trace);

}  // namespace vqr
