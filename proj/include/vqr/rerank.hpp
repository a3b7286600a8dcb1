#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vqr/domain.hpp"
#include "vqr/inference.hpp"

namespace vqr {

struct CandidateInput {
  std::string candidate_image_id;
  double cir_score_raw = 0.0;
};

struct TopNSplit {
  std::vector<CandidateInput> top;   // highest raw CIR first
  std::vector<CandidateInput> rest;  // same order
};

/// Splits candidates into the min(n, N) best by raw CIR score and the rest.
/// Ties are broken by ascending id.
TopNSplit select_top_n(std::span<const CandidateInput> candidates, std::size_t n);

struct CandidateOutcome {
  std::optional<double> vqa_score;
  bool demoted = false;
};

/// Decides a candidate's VQA score from its per-question results. If at least
/// half the questions failed the candidate is demoted (no VQA score);
/// otherwise failed questions are left out of the mean.
CandidateOutcome failure_policy(std::span<const TraceEntry> entries);

struct RerankResult {
  Ranking ranking;
  ReasoningTrace trace;  // one entry per top-n candidate, in CIR order
  std::size_t requests_issued = 0;
};

RerankResult rerank(const RetrievalQuery& query, std::span<const CandidateInput> candidates,
                    const std::vector<VisualQuestion>& questions, const RerankConfig& config, VqaClient& client);

/// Ranking by normalized CIR score alone (no VQA requests).
Ranking cir_only_ranking(std::span<const CandidateInput> candidates, Normalization mode = Normalization::MinMax);

}  // namespace vqr
