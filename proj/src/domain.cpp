#include "vqr/domain.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <unordered_set>

namespace vqr {

std::string_view to_string(Category c) noexcept {
  switch (c) {
    case Category::Dress: return "dress";
    case Category::Shirt: return "shirt";
    case Category::Toptee: return "toptee";
    case Category::Other: return "other";
  }
  return "other";
}

Category parse_category(std::string_view s) {
  if (s == "dress") return Category::Dress;
  if (s == "shirt") return Category::Shirt;
  if (s == "toptee") return Category::Toptee;
  if (s == "other") return Category::Other;
  throw Error(ErrorCode::UnknownCategory, "'" + std::string(s) + "'");
}

std::string_view to_string(Answer a) noexcept { return a == Answer::Yes ? "Yes" : "No"; }

std::optional<Answer> parse_answer(std::string_view s) noexcept {
  std::string lower;
  lower.reserve(s.size());
  for (char ch : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  if (lower == "yes") return Answer::Yes;
  if (lower == "no") return Answer::No;
  return std::nullopt;
}

std::string trim(std::string_view s) {
  auto is_space = [](char ch) { return std::isspace(static_cast<unsigned char>(ch)) != 0; };
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

RetrievalQuery QueryValidator::validate(const RawQueryRecord& raw) {
  if (raw.query_id.empty()) throw Error(ErrorCode::InvalidArgument, "query_id is empty");
  if (raw.reference_image_id.empty())
    throw Error(ErrorCode::InvalidArgument, "reference image id is empty for query '" + raw.query_id + "'");

  std::string text;
  if (raw.text) {
    text = trim(*raw.text);
  } else {
    for (const auto& caption : raw.captions) {
      auto part = trim(caption);
      if (part.empty()) continue;
      if (!text.empty()) text += kCaptionConnector;
      text += part;
    }
  }
  if (text.empty()) throw Error(ErrorCode::EmptyModificationText, "query '" + raw.query_id + "'");

  Category category = parse_category(raw.category);

  if (seen_ids_.contains(raw.query_id)) throw Error(ErrorCode::DuplicateQueryId, "'" + raw.query_id + "'");
  seen_ids_.insert(raw.query_id);

  return RetrievalQuery{raw.query_id, raw.reference_image_id, std::move(text), category};
}

CandidateSet::CandidateSet(std::vector<std::string> ids) : ids_(std::move(ids)) {
  if (ids_.empty()) throw Error(ErrorCode::InvalidArgument, "candidate set is empty");
  std::unordered_set<std::string_view> seen;
  for (const auto& id : ids_) {
    if (!seen.insert(id).second) throw Error(ErrorCode::DuplicateCandidateId, "'" + id + "'");
  }
}

VisualQuestion::VisualQuestion(std::string text, Answer expected, bool needs_reference)
    : text_(trim(text)), expected_(expected), needs_reference_(needs_reference) {
  if (text_.empty() || text_.back() != '?') throw Error(ErrorCode::NotAQuestion, "'" + text_ + "'");
}

bool ranks_before(const CandidateScore& a, const CandidateScore& b) noexcept {
  if (a.fused_score != b.fused_score) return a.fused_score > b.fused_score;
  return a.candidate_image_id < b.candidate_image_id;
}

Ranking rank_candidates(std::vector<CandidateScore> scores) {
  std::sort(scores.begin(), scores.end(), ranks_before);
  return scores;
}

void RerankConfig::validate() const {
  if (!(k > 0.0) || !std::isfinite(k)) throw Error(ErrorCode::NonPositiveK, "k = " + std::to_string(k));
  if (!(lambda_vqa >= 0.0) || !std::isfinite(lambda_vqa))
    throw Error(ErrorCode::InvalidConfig, "lambda_vqa must be a non-negative real");
  if (n < 1) throw Error(ErrorCode::InvalidConfig, "n must be >= 1");
  if (fan_out < 1) throw Error(ErrorCode::InvalidConfig, "fan_out must be >= 1");
  if (answer_tokens.yes.empty() || answer_tokens.no.empty() || answer_tokens.yes == answer_tokens.no)
    throw Error(ErrorCode::InvalidConfig, "answer tokens must be two distinct non-empty strings");
}

}  // namespace vqr
