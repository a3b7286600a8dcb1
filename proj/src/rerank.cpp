#include "vqr/rerank.hpp"

#include <algorithm>
#include <unordered_map>

#include "vqr/log.hpp"
#include "vqr/scoring.hpp"

namespace vqr {

namespace {

void check_candidates(std::span<const CandidateInput> candidates) {
  std::vector<std::string> ids;
  ids.reserve(candidates.size());
  for (const auto& c : candidates) ids.push_back(c.candidate_image_id);
  CandidateSet set(std::move(ids));  // rejects empty and duplicate ids
}

std::vector<double> normalized_scores(std::span<const CandidateInput> candidates, Normalization mode) {
  std::vector<double> raw;
  raw.reserve(candidates.size());
  for (const auto& c : candidates) raw.push_back(c.cir_score_raw);
  return normalize_cir(raw, mode);
}

CandidateScore plain_score(const CandidateInput& c, double norm) {
  CandidateScore s;
  s.candidate_image_id = c.candidate_image_id;
  s.cir_score_raw = c.cir_score_raw;
  s.cir_score_norm = norm;
  s.fused_score = norm;
  return s;
}

}  // namespace

TopNSplit select_top_n(std::span<const CandidateInput> candidates, std::size_t n) {
  std::vector<CandidateInput> sorted(candidates.begin(), candidates.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const CandidateInput& a, const CandidateInput& b) {
    if (a.cir_score_raw != b.cir_score_raw) return a.cir_score_raw > b.cir_score_raw;
    return a.candidate_image_id < b.candidate_image_id;
  });
  const auto cut = std::min(n, sorted.size());
  TopNSplit split;
  split.top.assign(std::make_move_iterator(sorted.begin()), std::make_move_iterator(sorted.begin() + cut));
  split.rest.assign(std::make_move_iterator(sorted.begin() + cut), std::make_move_iterator(sorted.end()));
  return split;
}

CandidateOutcome failure_policy(std::span<const TraceEntry> entries) {
  if (entries.empty()) throw Error(ErrorCode::EmptyQuestionSet, "candidate has no question results");
  std::vector<double> probabilities;
  probabilities.reserve(entries.size());
  for (const auto& e : entries) {
    if (e.ok()) probabilities.push_back(e.probability_of_expected());
  }
  const std::size_t errors = entries.size() - probabilities.size();
  if (2 * errors >= entries.size() && errors > 0) return {std::nullopt, true};
  return {vqa_score(probabilities), false};
}

RerankResult rerank(const RetrievalQuery& query, std::span<const CandidateInput> candidates,
                    const std::vector<VisualQuestion>& questions, const RerankConfig& config, VqaClient& client) {
  config.validate();
  if (questions.empty()) throw Error(ErrorCode::EmptyQuestionSet, "query " + query.query_id + " has no questions");
  check_candidates(candidates);

  const auto norms = normalized_scores(candidates, config.normalization);
  std::unordered_map<std::string_view, double> norm_of;
  for (std::size_t i = 0; i < candidates.size(); ++i) norm_of.emplace(candidates[i].candidate_image_id, norms[i]);

  const auto split = select_top_n(candidates, static_cast<std::size_t>(config.n));

  std::vector<VqaRequest> requests;
  requests.reserve(split.top.size() * questions.size());
  for (const auto& c : split.top) {
    for (const auto& q : questions)
      requests.push_back(make_vqa_request(q, query.reference_image_id, c.candidate_image_id, config.answer_tokens));
  }
  const auto outcomes = bounded_map(std::span<const VqaRequest>(requests), static_cast<std::size_t>(config.fan_out), client);

  RerankResult result;
  result.requests_issued = requests.size();
  result.trace.reserve(split.top.size());
  std::vector<CandidateScore> scores;
  scores.reserve(candidates.size());

  bool any_reranked = false;
  std::optional<Error> last_backend_error;
  for (std::size_t ci = 0; ci < split.top.size(); ++ci) {
    const auto& c = split.top[ci];
    CandidateTrace trace;
    trace.candidate_image_id = c.candidate_image_id;
    for (std::size_t qi = 0; qi < questions.size(); ++qi) {
      const auto& outcome = outcomes[ci * questions.size() + qi];
      TraceEntry entry{questions[qi], std::nullopt, {}};
      try {
        if (!outcome.ok()) throw *outcome.error;
        entry.probability =
            answer_probability(*outcome.value, config.answer_tokens, questions[qi].expected_answer()).probability;
      } catch (const Error& e) {
        entry.error = e.what();
        if (is_backend_error(e.code())) last_backend_error = e;
      }
      trace.entries.push_back(std::move(entry));
    }

    const auto decision = failure_policy(trace.entries);
    auto score = plain_score(c, norm_of.at(c.candidate_image_id));
    if (decision.demoted) {
      trace.demoted = true;
      log_warn("query " + query.query_id + ": candidate " + c.candidate_image_id +
               " demoted to its CIR score after failed VQA requests");
    } else {
      any_reranked = true;
      score.vqa_score = decision.vqa_score;
      score.fused_score = fuse(score.cir_score_norm, *decision.vqa_score, config);
    }
    trace.vqa_score = decision.vqa_score;
    scores.push_back(std::move(score));
    result.trace.push_back(std::move(trace));
  }

  if (!split.top.empty() && !any_reranked && last_backend_error)
    throw Error(ErrorCode::BackendUnavailable,
                "every re-ranked candidate of query " + query.query_id + " failed; last: " + last_backend_error->what());

  for (const auto& c : split.rest) scores.push_back(plain_score(c, norm_of.at(c.candidate_image_id)));
  result.ranking = rank_candidates(std::move(scores));
  return result;
}

Ranking cir_only_ranking(std::span<const CandidateInput> candidates, Normalization mode) {
  check_candidates(candidates);
  const auto norms = normalized_scores(candidates, mode);
  std::vector<CandidateScore> scores;
  scores.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) scores.push_back(plain_score(candidates[i], norms[i]));
  return rank_candidates(std::move(scores));
}

}  // namespace vqr
