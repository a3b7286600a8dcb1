#pragma once

#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vqr/error.hpp"

namespace vqr {

enum class Category { Dress, Shirt, Toptee, Other };

std::string_view to_string(Category c) noexcept;
Category parse_category(std::string_view s);  // throws UnknownCategory

enum class Answer { Yes, No };

std::string_view to_string(Answer a) noexcept;
std::optional<Answer> parse_answer(std::string_view s) noexcept;  // case-insensitive "yes"/"no"

std::string trim(std::string_view s);

// Connector used to join multiple captions into one modification text.
inline constexpr std::string_view kCaptionConnector = ", and ";

/// A composed query: a reference image plus the text describing how the
/// target should differ from it.
struct RetrievalQuery {
  std::string query_id;
  std::string reference_image_id;
  std::string modification_text;
  Category category = Category::Other;
};

/// Query record as read from an ingestion file, before validation.
/// Either `text` or `captions` carries the modification text.
struct RawQueryRecord {
  std::string query_id;
  std::string reference_image_id;
  std::optional<std::string> text;
  std::vector<std::string> captions;
  std::string category;
};

/// Validates raw records and enforces query_id uniqueness across one run.
class QueryValidator {
 public:
  RetrievalQuery validate(const RawQueryRecord& raw);

 private:
  std::set<std::string, std::less<>> seen_ids_;
};

/// Ordered, duplicate-free list of candidate image ids.
class CandidateSet {
 public:
  explicit CandidateSet(std::vector<std::string> ids);  // throws DuplicateCandidateId / InvalidArgument

  std::span<const std::string> ids() const noexcept { return ids_; }
  std::size_t size() const noexcept { return ids_.size(); }

 private:
  std::vector<std::string> ids_;
};

/// A yes/no question derived from the modification text.
class VisualQuestion {
 public:
  // Trims `text`; throws NotAQuestion if empty or not ending with '?'.
  VisualQuestion(std::string text, Answer expected, bool needs_reference);

  const std::string& text() const noexcept { return text_; }
  Answer expected_answer() const noexcept { return expected_; }
  bool needs_reference() const noexcept { return needs_reference_; }

  friend bool operator==(const VisualQuestion&, const VisualQuestion&) = default;

 private:
  std::string text_;
  Answer expected_;
  bool needs_reference_;
};

struct AnswerProbability {
  double p_yes = 0.5;
  double p_no = 0.5;

  double of(Answer a) const noexcept { return a == Answer::Yes ? p_yes : p_no; }
  // Ties resolve to Yes.
  Answer predicted() const noexcept { return p_yes >= p_no ? Answer::Yes : Answer::No; }
};

struct CandidateScore {
  std::string candidate_image_id;
  double cir_score_raw = 0.0;
  double cir_score_norm = 0.0;
  std::optional<double> vqa_score;
  double fused_score = 0.0;

  bool reranked() const noexcept { return vqa_score.has_value(); }
};

/// Candidates sorted by fused_score descending; equal scores are ordered by
/// ascending candidate id.
using Ranking = std::vector<CandidateScore>;

bool ranks_before(const CandidateScore& a, const CandidateScore& b) noexcept;
Ranking rank_candidates(std::vector<CandidateScore> scores);

struct AnswerTokens {
  std::string yes = "Yes";
  std::string no = "No";

  const std::string& of(Answer a) const noexcept { return a == Answer::Yes ? yes : no; }
  friend bool operator==(const AnswerTokens&, const AnswerTokens&) = default;
};

enum class Normalization { MinMax };

struct RerankConfig {
  double lambda_vqa = 0.068;
  double k = 0.8375;
  int n = 250;
  Normalization normalization = Normalization::MinMax;
  AnswerTokens answer_tokens;
  // Maximum concurrently in-flight VQA requests per rerank call.
  int fan_out = 8;

  void validate() const;  // throws InvalidConfig / NonPositiveK
};

struct TraceEntry {
  VisualQuestion question;
  std::optional<AnswerProbability> probability;  // absent when the request failed
  std::string error;                              // set when the request failed

  bool ok() const noexcept { return probability.has_value(); }
  Answer predicted() const { return probability->predicted(); }
  double probability_of_expected() const { return probability->of(question.expected_answer()); }
};

/// Per-question evidence for one re-ranked (or demoted) candidate.
struct CandidateTrace {
  std::string candidate_image_id;
  std::vector<TraceEntry> entries;
  std::optional<double> vqa_score;
  // Set when the failure policy dropped the candidate back to its CIR score.
  bool demoted = false;
};

using ReasoningTrace = std::vector<CandidateTrace>;

}  // namespace vqr
