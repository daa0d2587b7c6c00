#include <benchmark/benchmark.h>

#include "cta/data.hpp"
#include "cta/rng.hpp"
#include "cta/tensor.hpp"

using namespace cta;

namespace {

Tensor gaussian(std::size_t r, std::size_t c, Rng& rng, bool grad) {
  std::vector<double> v(r * c);
  for (double& x : v) x = standard_normal(rng);
  return Tensor({r, c}, std::move(v), grad);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = gaussian(n, n, rng, false), b = gaussian(n, n, rng, false);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(8, 256)->Complexity(benchmark::oNCubed);

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  Tensor a = gaussian(n, n, rng, true), b = gaussian(n, n, rng, true);
  for (auto _ : state) {
    backward(sum_all(matmul(a, b)));
    a.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_MatmulBackward)->RangeMultiplier(2)->Range(8, 128);

void BM_SoftmaxRows(benchmark::State& state) {
  Rng rng(3);
  const Tensor x = gaussian(64, static_cast<std::size_t>(state.range(0)), rng, false);
  for (auto _ : state) benchmark::DoNotOptimize(softmax(x, 1));
}
BENCHMARK(BM_SoftmaxRows)->Arg(8)->Arg(64)->Arg(512);

void BM_NegativeSampling(benchmark::State& state) {
  const auto items = static_cast<std::size_t>(state.range(0));
  std::vector<double> freq(items + 1, 0.0);
  Rng init(4);
  for (std::size_t i = 1; i <= items; ++i) freq[i] = 1.0 + 100.0 * uniform01(init) * uniform01(init);
  const NegativeSampler sampler(freq);
  Rng rng(5);
  std::size_t target = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sampler.sample(target, 100, rng));
    target = target % items + 1;
  }
}
BENCHMARK(BM_NegativeSampling)->Arg(200)->Arg(2000)->Arg(20000);

}  // namespace
