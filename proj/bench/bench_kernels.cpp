// Serial reference vs OpenMP kernels on batch sizes typical of a full
// validation run (many queries x re-ranking depth).

#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "vqr/kernels.hpp"

namespace k = vqr::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <auto Fn>
void BM_Normalize(benchmark::State& state) {
  const auto raw = random_values(static_cast<std::size_t>(state.range(0)), 1);
  std::vector<double> out(raw.size());
  for (auto _ : state) {
    Fn(raw, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <auto Fn>
void BM_Fuse(benchmark::State& state) {
  const auto norm = random_values(static_cast<std::size_t>(state.range(0)), 2);
  const auto vqa = random_values(norm.size(), 3);
  std::vector<double> out(norm.size());
  for (auto _ : state) {
    Fn(norm, vqa, 0.068, 0.8375, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <auto Fn>
void BM_TargetRanks(benchmark::State& state) {
  const auto queries = static_cast<std::size_t>(state.range(0));
  std::vector<std::vector<std::string>> lists(queries);
  std::vector<std::string> targets(queries);
  std::mt19937_64 rng(4);
  for (std::size_t q = 0; q < queries; ++q) {
    for (int i = 0; i < 1000; ++i) lists[q].push_back("img" + std::to_string(rng() % 100000));
    targets[q] = "img" + std::to_string(rng() % 100000);
  }
  std::vector<k::RankQuery> input;
  for (std::size_t q = 0; q < queries; ++q) input.push_back({lists[q], targets[q]});
  for (auto _ : state) benchmark::DoNotOptimize(Fn(input));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_Normalize<k::serial::normalize_min_max>)->Name("normalize/serial")->Range(1 << 10, 1 << 22);
BENCHMARK(BM_Normalize<k::omp::normalize_min_max>)->Name("normalize/omp")->Range(1 << 10, 1 << 22);
BENCHMARK(BM_Fuse<k::serial::fuse>)->Name("fuse/serial")->Range(1 << 10, 1 << 22);
BENCHMARK(BM_Fuse<k::omp::fuse>)->Name("fuse/omp")->Range(1 << 10, 1 << 22);
BENCHMARK(BM_TargetRanks<k::serial::target_ranks>)->Name("target_ranks/serial")->Range(64, 4096);
BENCHMARK(BM_TargetRanks<k::omp::target_ranks>)->Name("target_ranks/omp")->Range(64, 4096);

BENCHMARK_MAIN();
