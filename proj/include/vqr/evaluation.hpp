#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vqr/domain.hpp"

namespace vqr {

using RankingsByQuery = std::map<std::string, Ranking>;
using TargetsByQuery = std::map<std::string, std::string>;

/// 1-based rank of each query's target (0 when the target is absent from the
/// ranking), in the iteration order of `rankings`.
std::vector<std::size_t> target_ranks(const RankingsByQuery& rankings, const TargetsByQuery& targets);

/// Percentage of queries whose target is within the first k results.
double recall_at_k(const RankingsByQuery& rankings, const TargetsByQuery& targets, std::size_t k);
double recall_at_k(std::span<const std::size_t> ranks, std::size_t k);

/// Mean reciprocal rank of the target; absent targets contribute 0.
double mrr(const RankingsByQuery& rankings, const TargetsByQuery& targets);
double mrr(std::span<const std::size_t> ranks);

/// Mean of Recall@10 and Recall@50.
double global_recall(const RankingsByQuery& rankings, const TargetsByQuery& targets);

struct CategoryMetrics {
  double r10 = 0.0;
  double r50 = 0.0;
  std::optional<double> mrr;
  std::size_t queries = 0;
};

struct TableRow {
  std::map<Category, CategoryMetrics> per_category;
  double avg_r10 = 0.0;
  double avg_r50 = 0.0;
  double global = 0.0;
  std::optional<double> avg_mrr;
};

/// Unweighted mean over dress, shirt and toptee; Global is the mean of the
/// two averages.
TableRow aggregate(const std::map<Category, CategoryMetrics>& per_category);

std::map<Category, CategoryMetrics> per_category_metrics(const RankingsByQuery& rankings, const TargetsByQuery& targets,
                                                         const std::map<std::string, Category>& category_of_query);

// Plain-text table laid out as: Dresses, Shirts, Tops&tees (R@10 R@50 each), Average R@10 R@50 Global, MRR.
std::string format_table(const std::string& label, const TableRow& row);

struct BinaryPrediction {
  double p_yes = 0.5;
  Answer gold = Answer::Yes;
};

struct ClassifierMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double auc_pr = 0.0;
  double auc_roc = 0.0;
  std::size_t count = 0;
  std::size_t positives = 0;
};

/// Yes is the positive class; the threshold for predicting Yes is p_yes >= 0.5.
ClassifierMetrics vqa_classifier_metrics(std::span<const BinaryPrediction> predictions);

double auc_roc_rank_statistic(std::span<const BinaryPrediction> predictions);
double auc_roc_trapezoid(std::span<const BinaryPrediction> predictions);
double auc_pr_step(std::span<const BinaryPrediction> predictions);

struct SweepPoint {
  int n = 0;
  double average_recall = 0.0;  // global_recall
  std::size_t requests = 0;
};

struct SweepRun {
  RankingsByQuery rankings;
  std::size_t requests = 0;
};

using SweepRunner = std::function<SweepRun(int n)>;

std::vector<SweepPoint> sweep_n(const SweepRunner& runner, std::span<const int> n_values, const TargetsByQuery& targets);

}  // namespace vqr
