#include "vqr/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vqr::kernels {

namespace {

inline double sigma(double x, double k, double inv_tanh_scale) {
  return 0.5 + 0.5 * std::tanh(x / (2.0 * k)) * inv_tanh_scale;
}

inline double unit_map(double x, MinMax mm) {
  const double range = mm.max - mm.min;
  return range > 0.0 ? (x - mm.min) / range : 0.5;
}

TargetRank rank_of(const RankQuery& q) {
  for (std::size_t i = 0; i < q.ranked_ids.size(); ++i) {
    if (q.ranked_ids[i] == q.target_id) return i + 1;
  }
  return 0;
}

}  // namespace

namespace serial {

MinMax min_max(std::span<const double> xs) {
  MinMax mm{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (double x : xs) {
    mm.min = std::min(mm.min, x);
    mm.max = std::max(mm.max, x);
  }
  return mm;
}

void normalize_min_max(std::span<const double> raw, std::span<double> out) {
  const MinMax mm = min_max(raw);
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = unit_map(raw[i], mm);
}

void fuse(std::span<const double> cir_norm, std::span<const double> vqa, double lambda, double k,
          std::span<double> out) {
  const double inv = 1.0 / std::tanh(1.0 / (2.0 * k));
  for (std::size_t i = 0; i < cir_norm.size(); ++i) out[i] = cir_norm[i] + lambda * sigma(vqa[i], k, inv);
}

std::vector<TargetRank> target_ranks(std::span<const RankQuery> queries) {
  std::vector<TargetRank> ranks(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) ranks[i] = rank_of(queries[i]);
  return ranks;
}

}  // namespace serial

namespace omp {

MinMax min_max(std::span<const double> xs) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  const auto n = static_cast<std::ptrdiff_t>(xs.size());
  const double* data = xs.data();
#pragma omp parallel for reduction(min : lo) reduction(max : hi) schedule(static) if (n > 4096)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    lo = std::min(lo, data[i]);
    hi = std::max(hi, data[i]);
  }
  return {lo, hi};
}

void normalize_min_max(std::span<const double> raw, std::span<double> out) {
  const MinMax mm = min_max(raw);
  const auto n = static_cast<std::ptrdiff_t>(raw.size());
#pragma omp parallel for schedule(static) if (n > 4096)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = unit_map(raw[i], mm);
}

void fuse(std::span<const double> cir_norm, std::span<const double> vqa, double lambda, double k,
          std::span<double> out) {
  const double inv = 1.0 / std::tanh(1.0 / (2.0 * k));
  const auto n = static_cast<std::ptrdiff_t>(cir_norm.size());
#pragma omp parallel for schedule(static) if (n > 4096)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = cir_norm[i] + lambda * sigma(vqa[i], k, inv);
}

std::vector<TargetRank> target_ranks(std::span<const RankQuery> queries) {
  std::vector<TargetRank> ranks(queries.size());
  const auto n = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(dynamic, 16) if (n > 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) ranks[i] = rank_of(queries[i]);
  return ranks;
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace omp

}  // namespace vqr::kernels
