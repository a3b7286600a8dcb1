#include "vqr/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "vqr/kernels.hpp"

namespace vqr {

std::vector<std::size_t> target_ranks(const RankingsByQuery& rankings, const TargetsByQuery& targets) {
  std::vector<std::vector<std::string>> ids;
  std::vector<kernels::RankQuery> queries;
  ids.reserve(rankings.size());
  queries.reserve(rankings.size());
  for (const auto& [qid, ranking] : rankings) {
    auto t = targets.find(qid);
    if (t == targets.end()) throw Error(ErrorCode::MissingTarget, "query '" + qid + "'");
    auto& list = ids.emplace_back();
    list.reserve(ranking.size());
    for (const auto& c : ranking) list.push_back(c.candidate_image_id);
    queries.push_back({list, t->second});
  }
  return kernels::omp::target_ranks(queries);
}

double recall_at_k(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) throw Error(ErrorCode::InvalidArgument, "no queries to evaluate");
  const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t r) { return r != 0 && r <= k; });
  return 100.0 * static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double recall_at_k(const RankingsByQuery& rankings, const TargetsByQuery& targets, std::size_t k) {
  return recall_at_k(target_ranks(rankings, targets), k);
}

double mrr(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw Error(ErrorCode::InvalidArgument, "no queries to evaluate");
  double sum = 0.0;
  for (auto r : ranks) sum += r == 0 ? 0.0 : 1.0 / static_cast<double>(r);
  return sum / static_cast<double>(ranks.size());
}

double mrr(const RankingsByQuery& rankings, const TargetsByQuery& targets) { return mrr(target_ranks(rankings, targets)); }

double global_recall(const RankingsByQuery& rankings, const TargetsByQuery& targets) {
  const auto ranks = target_ranks(rankings, targets);
  return (recall_at_k(ranks, 10) + recall_at_k(ranks, 50)) / 2.0;
}

TableRow aggregate(const std::map<Category, CategoryMetrics>& per_category) {
  static constexpr Category kTableCategories[] = {Category::Dress, Category::Shirt, Category::Toptee};
  TableRow row;
  double mrr_sum = 0.0;
  bool all_mrr = true;
  for (auto c : kTableCategories) {
    auto it = per_category.find(c);
    if (it == per_category.end()) throw Error(ErrorCode::MissingCategory, std::string(to_string(c)));
    row.per_category.emplace(c, it->second);
    row.avg_r10 += it->second.r10;
    row.avg_r50 += it->second.r50;
    if (it->second.mrr) mrr_sum += *it->second.mrr;
    else all_mrr = false;
  }
  row.avg_r10 /= 3.0;
  row.avg_r50 /= 3.0;
  row.global = (row.avg_r10 + row.avg_r50) / 2.0;
  if (all_mrr) row.avg_mrr = mrr_sum / 3.0;
  return row;
}

std::map<Category, CategoryMetrics> per_category_metrics(const RankingsByQuery& rankings, const TargetsByQuery& targets,
                                                         const std::map<std::string, Category>& category_of_query) {
  std::map<Category, RankingsByQuery> grouped;
  for (const auto& [qid, ranking] : rankings) {
    auto it = category_of_query.find(qid);
    grouped[it == category_of_query.end() ? Category::Other : it->second].emplace(qid, ranking);
  }
  std::map<Category, CategoryMetrics> out;
  for (const auto& [cat, subset] : grouped) {
    const auto ranks = target_ranks(subset, targets);
    out[cat] = {recall_at_k(ranks, 10), recall_at_k(ranks, 50), mrr(ranks), ranks.size()};
  }
  return out;
}

std::string format_table(const std::string& label, const TableRow& row) {
  char buf[512];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-24s | %-13s | %-13s | %-13s | %-21s | %s\n", "", "Dresses", "Shirts",
                "Tops&tees", "Average", "");
  out += buf;
  std::snprintf(buf, sizeof buf, "%-24s | %6s %6s | %6s %6s | %6s %6s | %6s %6s %7s | %6s\n", "Model", "R@10",
                "R@50", "R@10", "R@50", "R@10", "R@50", "R@10", "R@50", "Global", "MRR");
  out += buf;
  out += std::string(std::string_view(buf).size() - 1, '-') + "\n";
  const auto& d = row.per_category.at(Category::Dress);
  const auto& s = row.per_category.at(Category::Shirt);
  const auto& t = row.per_category.at(Category::Toptee);
  std::snprintf(buf, sizeof buf, "%-24s | %6.2f %6.2f | %6.2f %6.2f | %6.2f %6.2f | %6.2f %6.2f %7.2f | %6.4f\n",
                label.c_str(), d.r10, d.r50, s.r10, s.r50, t.r10, t.r50, row.avg_r10, row.avg_r50, row.global,
                row.avg_mrr.value_or(0.0));
  out += buf;
  return out;
}

// ---------------------------------------------------------------------------
// Classifier metrics

namespace {

std::pair<std::size_t, std::size_t> class_counts(std::span<const BinaryPrediction> preds) {
  std::size_t pos = 0;
  for (const auto& p : preds) pos += p.gold == Answer::Yes ? 1 : 0;
  return {pos, preds.size() - pos};
}

void require_both_classes(std::span<const BinaryPrediction> preds) {
  if (preds.empty()) throw Error(ErrorCode::InvalidArgument, "no predictions");
  for (const auto& p : preds) {
    if (!(p.p_yes >= 0.0 && p.p_yes <= 1.0)) throw Error(ErrorCode::InvalidArgument, "p_yes outside [0,1]");
  }
  auto [pos, neg] = class_counts(preds);
  if (pos == 0 || neg == 0) throw Error(ErrorCode::SingleClassOnly, "AUC needs both Yes and No labels");
}

// Indices sorted by descending score.
std::vector<std::size_t> by_score_desc(std::span<const BinaryPrediction> preds) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return preds[a].p_yes > preds[b].p_yes; });
  return order;
}

}  // namespace

double auc_roc_rank_statistic(std::span<const BinaryPrediction> preds) {
  require_both_classes(preds);
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return preds[a].p_yes < preds[b].p_yes; });
  // Average 1-based ranks over tie groups.
  double positive_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && preds[order[j]].p_yes == preds[order[i]].p_yes) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t m = i; m < j; ++m) positive_rank_sum += preds[order[m]].gold == Answer::Yes ? avg_rank : 0.0;
    i = j;
  }
  const auto [pos, neg] = class_counts(preds);
  const double p = static_cast<double>(pos);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(neg));
}

double auc_roc_trapezoid(std::span<const BinaryPrediction> preds) {
  require_both_classes(preds);
  const auto order = by_score_desc(preds);
  const auto [pos, neg] = class_counts(preds);
  double tp = 0.0, fp = 0.0, prev_tpr = 0.0, prev_fpr = 0.0, area = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    for (; j < order.size() && preds[order[j]].p_yes == preds[order[i]].p_yes; ++j)
      (preds[order[j]].gold == Answer::Yes ? tp : fp) += 1.0;
    const double tpr = tp / static_cast<double>(pos);
    const double fpr = fp / static_cast<double>(neg);
    area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
    prev_tpr = tpr;
    prev_fpr = fpr;
    i = j;
  }
  return area;
}

double auc_pr_step(std::span<const BinaryPrediction> preds) {
  require_both_classes(preds);
  const auto order = by_score_desc(preds);
  const auto [pos, neg] = class_counts(preds);
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, ap = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    for (; j < order.size() && preds[order[j]].p_yes == preds[order[i]].p_yes; ++j)
      (preds[order[j]].gold == Answer::Yes ? tp : fp) += 1.0;
    const double recall = tp / static_cast<double>(pos);
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
    i = j;
  }
  return ap;
}

ClassifierMetrics vqa_classifier_metrics(std::span<const BinaryPrediction> preds) {
  require_both_classes(preds);
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (const auto& p : preds) {
    const bool predicted_yes = p.p_yes >= 0.5;
    const bool gold_yes = p.gold == Answer::Yes;
    if (predicted_yes && gold_yes) ++tp;
    else if (predicted_yes) ++fp;
    else if (gold_yes) ++fn;
    else ++tn;
  }
  ClassifierMetrics m;
  m.count = preds.size();
  m.positives = tp + fn;
  m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(m.count);
  m.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  m.auc_pr = auc_pr_step(preds);
  m.auc_roc = auc_roc_rank_statistic(preds);
  return m;
}

std::vector<SweepPoint> sweep_n(const SweepRunner& runner, std::span<const int> n_values, const TargetsByQuery& targets) {
  std::vector<SweepPoint> curve;
  curve.reserve(n_values.size());
  for (int n : n_values) {
    if (n < 0) throw Error(ErrorCode::InvalidArgument, "n must be >= 0");
    auto run = runner(n);
    curve.push_back({n, global_recall(run.rankings, targets), run.requests});
  }
  return curve;
}

}  // namespace vqr
