// Microbenchmarks for the hot paths: the tensor ops that dominate training,
// one full forward pass, and the evaluation metric.
#include <benchmark/benchmark.h>

#include <vector>

#include "spade/data.hpp"
#include "spade/evaluation.hpp"
#include "spade/graph.hpp"
#include "spade/model.hpp"
#include "spade/rng.hpp"
#include "spade/tensor.hpp"

using namespace spade;

namespace {

Tensor rand_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values) v = rng.uniform(lo, hi);
  return t;
}

void BM_matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(1);
  const Tensor a = rand_tensor(rng, {n, n});
  const Tensor b = rand_tensor(rng, {n, n});
  for (auto _ : state) {
    Graph g;
    TensorRef out = g.matmul(g.constant(a), g.constant(b));
    benchmark::DoNotOptimize(g.value(out).values.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n) * n * n);
}

void BM_conv1d_causal(benchmark::State& state) {
  const int T = static_cast<int>(state.range(0));
  Rng rng(2);
  const Tensor x = rand_tensor(rng, {8, T});
  const Tensor k = rand_tensor(rng, {8, 8, 8});
  for (auto _ : state) {
    Graph g;
    TensorRef out = g.conv1d_causal(g.constant(x), g.constant(k), 4);
    benchmark::DoNotOptimize(g.value(out).values.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(T) * 8 * 8 * 8);
}

void BM_masked_softmax(benchmark::State& state) {
  const int cols = static_cast<int>(state.range(0));
  Rng rng(3);
  const Tensor logits = rand_tensor(rng, {64, cols}, -4.0, 4.0);
  Tensor mask({64, cols}, 1.0);
  for (std::size_t i = 0; i < mask.values.size(); i += 3) mask.values[i] = 0.0;
  for (auto _ : state) {
    Graph g;
    TensorRef out = g.softmax_masked(g.constant(logits), g.constant(mask));
    benchmark::DoNotOptimize(g.value(out).values.data());
  }
}

void BM_forward(benchmark::State& state) {
  SynthConfig sc;
  sc.n_series = 4;
  sc.periods = static_cast<int>(state.range(0));
  sc.seed = 7;
  const std::vector<SeriesRecord> corpus = contaminate(synthesize_corpus(sc), 0.03, 7).records;
  const SpadeModel model(ModelConfig{}, 7);  // default desk widths, Full variant
  for (auto _ : state) {
    ForecastGrid grid = model.forward(corpus);
    benchmark::DoNotOptimize(grid.series.data());
  }
}

void BM_wql(benchmark::State& state) {
  SynthConfig sc;
  sc.n_series = static_cast<int>(state.range(0));
  sc.periods = 60;
  sc.seed = 11;
  const std::vector<SeriesRecord> corpus = contaminate(synthesize_corpus(sc), 0.05, 11).records;
  const ModelConfig mc;
  const EvalSet eval = build_eval_set(corpus, mc.horizons, -12, 0, 4);
  Rng rng(12);
  ForecastGrid grid;
  grid.quantiles = mc.quantiles;
  grid.horizons = mc.horizons;
  for (const SeriesRecord& r : corpus) {
    SeriesForecast f;
    f.series_id = r.series_id;
    f.t_count = r.periods();
    f.values.resize(static_cast<std::size_t>(f.t_count) * mc.horizons.size() * mc.quantiles.size());
    for (double& v : f.values) v = rng.uniform(0.0, 200.0);
    grid.series.push_back(std::move(f));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(wql(eval, grid, 0.9, MetricScope{}));
  }
}

}  // namespace

BENCHMARK(BM_matmul)->Arg(32)->Arg(128);
BENCHMARK(BM_conv1d_causal)->Arg(64)->Arg(256);
BENCHMARK(BM_masked_softmax)->Arg(64)->Arg(512);
BENCHMARK(BM_forward)->Arg(60)->Arg(228)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_wql)->Arg(16)->Arg(64);

BENCHMARK_MAIN();
