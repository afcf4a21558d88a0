#include <benchmark/benchmark.h>

#include "eva/causal.hpp"
#include "eva/estimators.hpp"
#include "eva/rng.hpp"

namespace {

using namespace eva;

AttentionInstance make_instance(std::size_t n, std::size_t d) {
  SeededRng rng(42);
  Mat q(n, d), k(n, d), v(n, d);
  for (double& x : q.data) x = rng.next_gaussian();
  for (double& x : k.data) x = rng.next_gaussian();
  for (double& x : v.data) x = rng.next_gaussian();
  for (Mat* m : {&q, &k, &v}) {
    for (std::size_t r = 0; r < n; ++r) {
      const double norm = std::sqrt(squared_norm(m->row(r)));
      for (std::size_t j = 0; j < d; ++j) (*m)(r, j) /= norm;
    }
  }
  return AttentionInstance(std::move(q), std::move(k), std::move(v));
}

constexpr std::size_t kDim = 32;

void BM_SoftmaxAttention(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const AttentionInstance inst = make_instance(n, kDim);
  for (auto _ : state) {
    benchmark::DoNotOptimize(softmax_attention(inst));
  }
}
BENCHMARK(BM_SoftmaxAttention)->RangeMultiplier(2)->Range(256, 2048);

void BM_Performer(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const AttentionInstance inst = make_instance(n, kDim);
  RFConfig cfg;
  cfg.samples = 64;
  for (auto _ : state) {
    benchmark::DoNotOptimize(performer_attention(inst, cfg));
  }
}
BENCHMARK(BM_Performer)->RangeMultiplier(2)->Range(256, 2048);

void BM_PracticalEva(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const AttentionInstance inst = make_instance(n, kDim);
  const PartitionSpec partition = build_partition(n, n, 64, 32, true);
  RFConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(practical_eva(inst, partition, cfg));
  }
}
BENCHMARK(BM_PracticalEva)->RangeMultiplier(2)->Range(256, 2048);

void BM_CausalEva(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const AttentionInstance inst = make_instance(n, kDim);
  const PartitionSpec partition = build_partition(n, n, 64, 32, true);
  RFConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(causal_eva(inst, partition, cfg));
  }
}
BENCHMARK(BM_CausalEva)->RangeMultiplier(2)->Range(256, 2048);

}  // namespace

BENCHMARK_MAIN();
