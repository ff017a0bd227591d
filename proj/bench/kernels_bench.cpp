// OpenMP kernels against the serial reference, plus whole-block forward passes.

#include <benchmark/benchmark.h>

#include <vector>

#include "pinet/blocks.hpp"
#include "pinet/kernels.hpp"
#include "pinet/rng.hpp"

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  pinet::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

template <auto Matmul>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Matmul(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul<pinet::kernels::matmul>)->Name("matmul/openmp")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Matmul<pinet::reference::matmul>)->Name("matmul/serial")->RangeMultiplier(2)->Range(32, 256);

template <auto KhatriRao>
void BM_KhatriRao(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const std::size_t k = 64;
  const auto a = random_values(d * k, 3), b = random_values(d * k, 4);
  std::vector<double> out(d * d * k);
  for (auto _ : state) {
    KhatriRao(a, b, out, d, d, k);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_KhatriRao<pinet::kernels::khatri_rao>)->Name("khatri_rao/openmp")->Arg(32)->Arg(64);
BENCHMARK(BM_KhatriRao<pinet::reference::khatri_rao>)->Name("khatri_rao/serial")->Arg(32)->Arg(64);

void BM_BlockForward(benchmark::State& state) {
  const auto variant = static_cast<pinet::Variant>(state.range(0));
  const auto order = static_cast<std::size_t>(state.range(1));
  const pinet::PolyBlockSpec spec{.variant = variant, .order = order, .rank = 64, .input_dim = 64,
                                  .output_dim = 64};
  const pinet::PolyBlock block{spec, pinet::init_params(spec, 0)};
  const std::size_t batch = 128;
  const pinet::Tensor z = pinet::Tensor({batch, 64}, random_values(batch * 64, 5));
  for (auto _ : state) benchmark::DoNotOptimize(pinet::forward_block(block, z));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_BlockForward)
    ->Name("forward/d64_k64_batch128")
    ->ArgsProduct({{static_cast<long>(pinet::Variant::kCcp), static_cast<long>(pinet::Variant::kNcp),
                    static_cast<long>(pinet::Variant::kNcpSkip)},
                   {2, 4, 8}});

}  // namespace

BENCHMARK_MAIN();
