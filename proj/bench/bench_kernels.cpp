#include <benchmark/benchmark.h>

#include <vector>

#include "seqrl/kernels.hpp"
#include "seqrl/rng.hpp"

namespace k = seqrl::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  seqrl::Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform() * 2.0 - 1.0;
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::gemm(a.data(), b.data(), c.data(), n, n, n, false);
    } else {
      k::serial::gemm(a.data(), b.data(), c.data(), n, n, n, false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <bool Parallel>
void BM_Conv(benchmark::State& state) {
  const k::ConvGeometry g{static_cast<std::size_t>(state.range(0)), 5, 9, 9, 16, 3, 3, 1, 1};
  const auto in = random_values(g.batch * g.channels * g.height * g.width, 3);
  const auto w = random_values(g.filters * g.channels * g.kernel_h * g.kernel_w, 4);
  std::vector<double> out(g.batch * g.filters * g.out_h() * g.out_w());
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::conv2d_forward(g, in.data(), w.data(), out.data());
    } else {
      k::serial::conv2d_forward(g, in.data(), w.data(), out.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_Attention(benchmark::State& state) {
  const k::AttentionGeometry g{static_cast<std::size_t>(state.range(0)), 50, 64, 8};
  const std::size_t n = g.batch * g.length * g.width;
  const auto q = random_values(n, 5), kk = random_values(n, 6), v = random_values(n, 7);
  std::vector<std::uint8_t> mask(g.length * g.length);
  for (std::size_t i = 0; i < g.length; ++i)
    for (std::size_t j = 0; j <= i; ++j) mask[i * g.length + j] = 1;
  std::vector<double> out(n), probs(g.batch * g.heads * g.length * g.length);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::attention_forward(g, q.data(), kk.data(), v.data(), mask.data(), out.data(), probs.data());
    } else {
      k::serial::attention_forward(g, q.data(), kk.data(), v.data(), mask.data(), out.data(), probs.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Arg(64)->Arg(256);
BENCHMARK(BM_Conv<false>)->Arg(32);
BENCHMARK(BM_Conv<true>)->Arg(32);
BENCHMARK(BM_Attention<false>)->Arg(8);
BENCHMARK(BM_Attention<true>)->Arg(8);

BENCHMARK_MAIN();
