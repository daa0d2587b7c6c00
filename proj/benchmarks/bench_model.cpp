#include <benchmark/benchmark.h>

#include "cta/losses.hpp"
#include "cta/model.hpp"
#include "cta/synthetic.hpp"
#include "cta/training.hpp"

using namespace cta;

namespace {

// Desk defaults at the given window; 200 items.
ModelConfig desk(std::size_t window) {
  ModelConfig m;
  m.num_items = 200;
  m.window = window;
  return m;
}

std::vector<WindowSample> windows(std::size_t window) {
  RecencyCorpus rc;
  rc.samples = 64;
  rc.items = 200;
  rc.window = window;
  return make_recency_windows(rc);
}

void BM_Forward(benchmark::State& state) {
  const auto L = static_cast<std::size_t>(state.range(0));
  const CtaModel model(desk(L), 1);
  const auto ws = windows(L);
  NoGradGuard ng;
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(model.score_all(ws[i++ % ws.size()]));
}
BENCHMARK(BM_Forward)->Arg(8)->Arg(16)->Arg(32);

void BM_ForwardBackward(benchmark::State& state) {
  const auto L = static_cast<std::size_t>(state.range(0));
  CtaModel model(desk(L), 2);
  const auto ws = windows(L);
  const NegativeSampler sampler(std::vector<double>(201, 1.0));
  TrainConfig cfg;
  Rng rng(3);
  std::size_t i = 0;
  for (auto _ : state) {
    backward(sample_loss(model, ws[i++ % ws.size()], sampler, cfg, rng));
    model.zero_grad();
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(8)->Arg(16)->Arg(32);

void BM_TrainBatch(benchmark::State& state) {
  CtaModel model(desk(8), 4);
  const auto ws = windows(8);
  const NegativeSampler sampler(std::vector<double>(201, 1.0));
  TrainConfig cfg;
  cfg.batch_size = ws.size();
  Adam adam(model.parameters(), cfg.beta1, cfg.beta2, cfg.epsilon);
  std::size_t epoch = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(accumulate_batch(model, ws, sampler, cfg, epoch++));
    adam.step(cfg.learning_rate);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * ws.size()));
}
BENCHMARK(BM_TrainBatch)->Unit(benchmark::kMillisecond);

}  // namespace
