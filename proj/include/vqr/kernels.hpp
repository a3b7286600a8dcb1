#pragma once

// Data-parallel batch kernels. Each kernel has a straightforward serial
// reference and an OpenMP version; tests require them to agree exactly.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace vqr::kernels {

struct MinMax {
  double min;
  double max;
};

/// Ranked candidate ids of one query plus the id being searched for.
struct RankQuery {
  std::span<const std::string> ranked_ids;
  std::string_view target_id;
};

// 1-based rank of target in ranked_ids; 0 when absent.
using TargetRank = std::size_t;

namespace serial {

MinMax min_max(std::span<const double> xs);
void normalize_min_max(std::span<const double> raw, std::span<double> out);
void fuse(std::span<const double> cir_norm, std::span<const double> vqa, double lambda, double k,
          std::span<double> out);
std::vector<TargetRank> target_ranks(std::span<const RankQuery> queries);

}  // namespace serial

namespace omp {

MinMax min_max(std::span<const double> xs);
void normalize_min_max(std::span<const double> raw, std::span<double> out);
void fuse(std::span<const double> cir_norm, std::span<const double> vqa, double lambda, double k,
          std::span<double> out);
std::vector<TargetRank> target_ranks(std::span<const RankQuery> queries);

int max_threads();

}  // namespace omp

}  // namespace vqr::kernels
