#include "vqr/questions.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "vqr/log.hpp"

namespace vqr {

extern const char* const kBuiltinQuestionPrompt;  // generated from prompts/question_gen_v1.txt

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

// Splits on unescaped '|' and resolves escapes.
std::vector<std::string> split_record(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields(1);
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (ch == '|') {
      fields.emplace_back();
      continue;
    }
    if (ch != '\\') {
      fields.back().push_back(ch);
      continue;
    }
    if (i + 1 >= line.size())
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": dangling escape");
    switch (line[++i]) {
      case '\\': fields.back().push_back('\\'); break;
      case '|': fields.back().push_back('|'); break;
      case '`': fields.back().push_back('`'); break;
      case 'n': fields.back().push_back('\n'); break;
      case 'r': fields.back().push_back('\r'); break;
      default:
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": unknown escape '\\" +
                                              std::string(1, line[i]) + "'");
    }
  }
  return fields;
}

std::string dedup_key(std::string_view text) {
  std::string key;
  bool pending_space = false;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      pending_space = !key.empty();
      continue;
    }
    if (pending_space) key.push_back(' ');
    pending_space = false;
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  return key;
}

bool is_retryable_parse_failure(ErrorCode code) {
  return code == ErrorCode::ParseError || code == ErrorCode::EmptyQuestionList ||
         code == ErrorCode::InvalidExpectedAnswer || code == ErrorCode::NotAQuestion;
}

}  // namespace

std::string escape_field(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char ch : s) {
    switch (ch) {
      case '\\': out += "\\\\"; break;
      case '|': out += "\\|"; break;
      case '`': out += "\\`"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(ch);
    }
  }
  return out;
}

std::string serialize_questions(const std::vector<VisualQuestion>& questions) {
  std::string out(kQuestionFenceOpen);
  out.push_back('\n');
  for (const auto& q : questions) {
    out += escape_field(q.text());
    out += " | ";
    out += to_string(q.expected_answer());
    out += " | ";
    out += q.needs_reference() ? "true" : "false";
    out.push_back('\n');
  }
  out += kQuestionFenceClose;
  out.push_back('\n');
  return out;
}

ParsedQuestions parse_question_list(std::string_view backend_output) {
  const auto lines = split_lines(backend_output);
  std::size_t i = 0;
  while (i < lines.size() && trim(lines[i]) != kQuestionFenceOpen) ++i;
  if (i == lines.size()) throw Error(ErrorCode::ParseError, "no '```questions' block found");

  ParsedQuestions parsed;
  std::unordered_set<std::string> seen;
  bool closed = false;
  for (++i; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const auto stripped = trim(lines[i]);
    if (stripped == kQuestionFenceClose) {
      closed = true;
      break;
    }
    if (stripped.empty()) continue;

    auto fields = split_record(lines[i], line_no);
    if (fields.size() != 3)
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected 3 '|'-separated fields, got " +
                                            std::to_string(fields.size()));
    auto text = trim(fields[0]);
    if (text.empty() || text.back() != '?')
      throw Error(ErrorCode::NotAQuestion, "line " + std::to_string(line_no) + ": '" + text + "'");
    auto answer = parse_answer(trim(fields[1]));
    if (!answer)
      throw Error(ErrorCode::InvalidExpectedAnswer, "line " + std::to_string(line_no) + ": '" + trim(fields[1]) + "'");
    const auto flag = dedup_key(fields[2]);
    if (flag != "true" && flag != "false")
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": needs_reference must be true or false");

    if (!seen.insert(dedup_key(text)).second) {
      ++parsed.duplicates_dropped;
      continue;
    }
    if (parsed.questions.size() == kMaxQuestionsPerQuery) {
      ++parsed.over_cap_dropped;
      continue;
    }
    parsed.questions.emplace_back(std::move(text), *answer, flag == "true");
  }
  if (!closed) throw Error(ErrorCode::ParseError, "unterminated '```questions' block");
  if (parsed.questions.empty()) throw Error(ErrorCode::EmptyQuestionList, "question block has no records");
  if (parsed.over_cap_dropped > 0)
    log_warn("dropped " + std::to_string(parsed.over_cap_dropped) + " question(s) beyond the cap of " +
             std::to_string(kMaxQuestionsPerQuery));
  return parsed;
}

InContextExample default_in_context_example() {
  return {"is black with no sleeves and longer than the reference",
          {VisualQuestion("Is the garment black?", Answer::Yes, false),
           VisualQuestion("Does the garment have sleeves?", Answer::No, false),
           VisualQuestion("Is the garment longer than in the reference image?", Answer::Yes, true)}};
}

PromptTemplate::PromptTemplate(std::string text, std::string version)
    : text_(std::move(text)), version_(std::move(version)) {
  for (std::string_view placeholder : {"{{example_text}}", "{{example_output}}", "{{target_text}}"}) {
    const auto first = text_.find(placeholder);
    if (first == std::string::npos || text_.find(placeholder, first + 1) != std::string::npos)
      throw Error(ErrorCode::InvalidConfig,
                  "prompt template must contain " + std::string(placeholder) + " exactly once");
  }
}

const PromptTemplate& PromptTemplate::builtin() {
  static const PromptTemplate instance(kBuiltinQuestionPrompt, "question_gen_v1");
  return instance;
}

PromptTemplate PromptTemplate::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot read prompt template " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return PromptTemplate(ss.str(), path);
}

std::string QuestionGenPrompt::render() const {
  const std::string& tpl = prompt_template->text();
  const std::pair<std::string_view, std::string> substitutions[] = {
      {"{{example_text}}", escape_field(in_context_example.modification_text)},
      {"{{example_output}}", serialize_questions(in_context_example.questions)},
      {"{{target_text}}", escape_field(target_text)},
  };
  // Single left-to-right pass so substituted text is never re-scanned.
  std::string out;
  out.reserve(tpl.size() + 256);
  std::size_t pos = 0;
  while (pos < tpl.size()) {
    bool replaced = false;
    if (tpl.compare(pos, 2, "{{") == 0) {
      for (const auto& [key, value] : substitutions) {
        if (tpl.compare(pos, key.size(), key) == 0) {
          out += value;
          pos += key.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out.push_back(tpl[pos++]);
  }
  return out;
}

QuestionGenPrompt build_prompt(std::string_view modification_text, const PromptTemplate& prompt_template) {
  return QuestionGenPrompt{&prompt_template, default_in_context_example(), std::string(modification_text)};
}

TextGenRequest question_request(const RetrievalQuery& query, const GenerationOptions& options, int attempt,
                                std::string_view previous_error) {
  const PromptTemplate& tpl = options.prompt_template ? *options.prompt_template : PromptTemplate::builtin();
  TextGenRequest request;
  request.prompt = build_prompt(query.modification_text, tpl).render();
  if (attempt > 0) {
    request.prompt += "\nYour previous reply could not be used (";
    request.prompt += escape_field(previous_error);
    request.prompt += "). Reply again with only the ```questions block in the required format.\n";
  }
  request.max_tokens = options.max_tokens;
  request.temperature = 0.0;
  return request;
}

std::vector<VisualQuestion> generate_questions(const RetrievalQuery& query, TextClient& backend,
                                               const GenerationOptions& options) {
  if (options.retry_budget < 0) throw Error(ErrorCode::InvalidArgument, "retry budget must be >= 0");
  std::string last_error;
  for (int attempt = 0; attempt <= options.retry_budget; ++attempt) {
    const auto output = backend.complete(question_request(query, options, attempt, last_error));
    try {
      return parse_question_list(output).questions;
    } catch (const Error& e) {
      if (!is_retryable_parse_failure(e.code())) throw;
      last_error = e.what();
      log(LogLevel::Debug, "query " + query.query_id + ": attempt " + std::to_string(attempt) + " failed: " + last_error);
    }
  }
  throw Error(ErrorCode::ExhaustedRetries,
              "query " + query.query_id + " after " + std::to_string(options.retry_budget + 1) +
                  " attempt(s); last error: " + last_error);
}

QuestionGenStats question_stats(const QuestionCorpus& corpus) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "no queries in question corpus");
  QuestionGenStats stats;
  std::size_t dual = 0;
  for (const auto& [id, questions] : corpus) {
    stats.questions += questions.size();
    for (const auto& q : questions) dual += q.needs_reference() ? 1 : 0;
  }
  stats.queries = corpus.size();
  stats.avg_questions_per_triplet = static_cast<double>(stats.questions) / static_cast<double>(stats.queries);
  stats.dual_image_fraction =
      stats.questions == 0 ? 0.0 : static_cast<double>(dual) / static_cast<double>(stats.questions);
  return stats;
}

}  // namespace vqr
