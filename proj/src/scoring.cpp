#include "vqr/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vqr/kernels.hpp"

namespace vqr {

namespace {

void require_unit_interval(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::InvalidArgument, std::string(what) + " outside [0,1]: " + std::to_string(v));
}

}  // namespace

ExpectedAnswerProbability answer_probability(const TokenLogprobs& logprobs, const AnswerTokens& tokens,
                                             Answer expected) {
  auto yes_it = logprobs.find(tokens.yes);
  auto no_it = logprobs.find(tokens.no);
  if (yes_it == logprobs.end() && no_it == logprobs.end())
    throw Error(ErrorCode::MissingBothAnswerTokens, "neither '" + tokens.yes + "' nor '" + tokens.no + "' present");

  auto raw = [](double logprob) {
    if (!std::isfinite(logprob) && logprob != -INFINITY)
      throw Error(ErrorCode::ProtocolError, "non-finite log-probability");
    return std::exp(logprob);
  };

  double p_yes = 0.0;
  double p_no = 0.0;
  if (yes_it != logprobs.end() && no_it != logprobs.end()) {
    p_yes = raw(yes_it->second);
    p_no = raw(no_it->second);
  } else if (yes_it != logprobs.end()) {
    p_yes = raw(yes_it->second);
    p_no = std::max(0.0, 1.0 - p_yes);
  } else {
    p_no = raw(no_it->second);
    p_yes = std::max(0.0, 1.0 - p_no);
  }

  AnswerProbability probability;
  const double total = p_yes + p_no;
  if (total > 0.0) {
    probability.p_yes = p_yes / total;
    probability.p_no = p_no / total;
  }
  return {probability, probability.of(expected)};
}

double vqa_score(std::span<const double> probabilities) {
  if (probabilities.empty()) throw Error(ErrorCode::EmptyQuestionSet, "no answer probabilities");
  double sum = 0.0;
  for (double p : probabilities) {
    require_unit_interval(p, "answer probability");
    sum += p;
  }
  return sum / static_cast<double>(probabilities.size());
}

double sigma_k(double x, double k) {
  if (!(k > 0.0)) throw Error(ErrorCode::NonPositiveK, "k = " + std::to_string(k));
  if (!std::isfinite(x)) throw Error(ErrorCode::InvalidArgument, "sigma_k argument is not finite");
  return 0.5 + 0.5 * std::tanh(x / (2.0 * k)) / std::tanh(1.0 / (2.0 * k));
}

std::vector<double> normalize_cir(std::span<const double> raw_scores, Normalization mode) {
  if (raw_scores.empty()) throw Error(ErrorCode::EmptyScoreList, "no CIR scores to normalize");
  for (double x : raw_scores) {
    if (!std::isfinite(x)) throw Error(ErrorCode::InvalidArgument, "CIR score is not finite");
  }
  std::vector<double> out(raw_scores.size());
  switch (mode) {
    case Normalization::MinMax:
      kernels::omp::normalize_min_max(raw_scores, out);
      break;
  }
  return out;
}

double fuse(double cir_norm, double vqa, const RerankConfig& config) {
  require_unit_interval(cir_norm, "normalized CIR score");
  require_unit_interval(vqa, "VQA score");
  config.validate();
  return cir_norm + config.lambda_vqa * sigma_k(vqa, config.k);
}

}  // namespace vqr
