#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vqr/domain.hpp"
#include "vqr/inference.hpp"

namespace vqr {

// Questions beyond this count are dropped when parsing.
inline constexpr std::size_t kMaxQuestionsPerQuery = 10;

inline constexpr std::string_view kQuestionFenceOpen = "```questions";
inline constexpr std::string_view kQuestionFenceClose = "```";

// Backslash-escapes '\\', '|', '`', newline and carriage return.
std::string escape_field(std::string_view s);

/// Serializes questions as a fenced block, one "question | Yes | true" record per line.
std::string serialize_questions(const std::vector<VisualQuestion>& questions);

struct ParsedQuestions {
  std::vector<VisualQuestion> questions;
  std::size_t duplicates_dropped = 0;
  std::size_t over_cap_dropped = 0;
};

/// Parses the first fenced question block out of free-form backend text.
/// Duplicate questions (case and whitespace insensitive) keep their first
/// occurrence; at most kMaxQuestionsPerQuery are kept.
ParsedQuestions parse_question_list(std::string_view backend_output);

struct InContextExample {
  std::string modification_text;
  std::vector<VisualQuestion> questions;
};

InContextExample default_in_context_example();

/// Prompt template with placeholders {{example_text}}, {{example_output}} and
/// {{target_text}}, each of which must appear exactly once.
class PromptTemplate {
 public:
  static const PromptTemplate& builtin();
  static PromptTemplate from_file(const std::string& path);
  explicit PromptTemplate(std::string text, std::string version = "custom");

  const std::string& text() const noexcept { return text_; }
  const std::string& version() const noexcept { return version_; }

 private:
  std::string text_;
  std::string version_;
};

struct QuestionGenPrompt {
  const PromptTemplate* prompt_template = nullptr;
  InContextExample in_context_example;
  std::string target_text;

  std::string render() const;
};

QuestionGenPrompt build_prompt(std::string_view modification_text,
                               const PromptTemplate& prompt_template = PromptTemplate::builtin());

struct GenerationOptions {
  int retry_budget = 2;
  int max_tokens = 512;
  const PromptTemplate* prompt_template = nullptr;  // builtin when null
};

/// Prompts the backend and parses its answer, re-asking up to retry_budget
/// times when the answer does not parse.
std::vector<VisualQuestion> generate_questions(const RetrievalQuery& query, TextClient& backend,
                                               const GenerationOptions& options = {});

// The request generate_questions sends on a given attempt (0 = first).
TextGenRequest question_request(const RetrievalQuery& query, const GenerationOptions& options, int attempt,
                                std::string_view previous_error = {});

struct QuestionGenStats {
  double avg_questions_per_triplet = 0.0;
  double dual_image_fraction = 0.0;
  std::size_t queries = 0;
  std::size_t questions = 0;
};

using QuestionCorpus = std::map<std::string, std::vector<VisualQuestion>>;

QuestionGenStats question_stats(const QuestionCorpus& corpus);

}  // namespace vqr
