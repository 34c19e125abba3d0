// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "flowuq/kernels.hpp"

namespace k = flowuq::kernels;

namespace {

std::vector<double> random_values(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::gemm(a, b, c, n, n, n);
    else k::serial::gemm(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}

template <bool Parallel>
void BM_Conv(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const k::ConvDims d{batch, 8, 4, 32, 16, 2, 4};
  const auto x = random_values(d.input_size(), 3), w = random_values(d.kernel_size(), 4);
  std::vector<double> y(d.output_size());
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::conv2d_forward(x, w, y, d);
    else k::serial::conv2d_forward(x, w, y, d);
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Arg(64)->Arg(256);
BENCHMARK(BM_Conv<false>)->Arg(16)->Arg(128);
BENCHMARK(BM_Conv<true>)->Arg(16)->Arg(128);

BENCHMARK_MAIN();
