#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "vqr/domain.hpp"

namespace vqr {

/// Log-probabilities of candidate tokens at the first generated position.
using TokenLogprobs = std::map<std::string, double>;

struct ExpectedAnswerProbability {
  AnswerProbability probability;
  double expected = 0.0;  // p(y_q)
};

/// Turns first-token log-probabilities into a renormalized Yes/No
/// distribution. A missing token gets max(0, 1 - p_other) before
/// renormalization.
ExpectedAnswerProbability answer_probability(const TokenLogprobs& logprobs, const AnswerTokens& tokens,
                                             Answer expected);

/// Mean of per-question probabilities of the expected answers.
double vqa_score(std::span<const double> probabilities);

/// 1/2 + coth(1/(2k)) * (logistic(x/k) - 1/2), evaluated as
/// 1/2 + tanh(x/(2k)) / (2 tanh(1/(2k))). Maps 0 -> 1/2 and 1 -> 1.
double sigma_k(double x, double k);

std::vector<double> normalize_cir(std::span<const double> raw_scores, Normalization mode = Normalization::MinMax);

/// cir_norm + lambda * sigma_k(vqa).
double fuse(double cir_norm, double vqa, const RerankConfig& config);

}  // namespace vqr
