#pragma once

// Line-delimited JSON file formats. Every file written here starts with a
// "# vqr-<kind> v1" header line. Ingestion files (triplets, cir-scores,
// image-index) may omit the header.

#include <fstream>
#include <functional>
#include <memory>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "vqr/dataset.hpp"
#include "vqr/evaluation.hpp"
#include "vqr/questions.hpp"
#include "vqr/rerank.hpp"

namespace vqr::io {

inline constexpr int kFormatVersion = 1;

std::string header_line(std::string_view kind);

/// Reads records from a line-delimited file, checking the optional header.
/// Malformed lines raise IngestionError naming the file and line.
class RecordReader {
 public:
  RecordReader(std::string path, std::string kind, bool header_required);

  // Calls fn(line_no, record) for every record line.
  void for_each(const std::function<void(std::size_t, const nlohmann::json&)>& fn) const;

 private:
  std::string path_;
  std::string kind_;
  bool header_required_;
};

/// Writes a header line followed by one compact JSON object per line.
class RecordWriter {
 public:
  RecordWriter(const std::string& path, std::string_view kind);
  ~RecordWriter();
  RecordWriter(const RecordWriter&) = delete;
  RecordWriter& operator=(const RecordWriter&) = delete;

  void write(const nlohmann::ordered_json& record);
  void close();

 private:
  std::string path_;
  std::unique_ptr<std::ofstream> out_;
};

// Triplets: {"query_id", "candidate" (reference image), "target", "captions": [..] | "text", "category"}.
std::vector<Triplet> read_triplets(const std::string& path);
std::map<std::string, Category> categories_of(const std::vector<Triplet>& triplets);
TargetsByQuery targets_of(const std::vector<Triplet>& triplets);

// CIR scores: {"query_id", "candidate_id", "score"}; candidates keep file order.
std::map<std::string, std::vector<CandidateInput>> read_cir_scores(const std::string& path);

// Image index: {"image_id", "category"}.
ImageIndex read_image_index(const std::string& path);

// Question corpus: {"query_id", "questions": [{"question", "expected", "needs_reference"}]}.
nlohmann::ordered_json question_to_json(const VisualQuestion& q);
VisualQuestion question_from_json(const nlohmann::json& j);
void write_question_corpus(const std::string& path, const QuestionCorpus& corpus);
QuestionCorpus read_question_corpus(const std::string& path);

// Rankings: {"query_id", "ranking": [{"candidate_id", "cir_score_raw", "cir_score_norm", "vqa_score", "fused_score", "reranked"}]}.
nlohmann::ordered_json score_to_json(const CandidateScore& s);
CandidateScore score_from_json(const nlohmann::json& j);
nlohmann::ordered_json ranking_record(const std::string& query_id, const Ranking& ranking);
void write_rankings(const std::string& path, const RankingsByQuery& rankings);
RankingsByQuery read_rankings(const std::string& path);

// Traces: {"query_id", "candidate_id", "vqa_score", "demoted", "entries": [...]}.
nlohmann::ordered_json trace_record(const std::string& query_id, const CandidateTrace& trace);
void write_traces(const std::string& path, const std::map<std::string, ReasoningTrace>& traces);

struct StoredTrace {
  std::string query_id;
  CandidateTrace trace;
};
std::vector<StoredTrace> read_traces(const std::string& path);

// Corpus: {"question", "images", "answer", "source", "origin_query_id"} in that order.
nlohmann::ordered_json example_record(const VqaExample& e);
void write_corpus(const std::string& path, const std::vector<VqaExample>& examples);
std::vector<VqaExample> read_corpus(const std::string& path);

nlohmann::ordered_json report_to_json(const BalanceReport& r);

// Single-document reports: header line followed by pretty-printed JSON.
void write_report(const std::string& path, std::string_view kind, const nlohmann::ordered_json& body);

std::string read_text_file(const std::string& path);

}  // namespace vqr::io
