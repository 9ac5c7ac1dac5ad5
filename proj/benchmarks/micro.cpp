#include <benchmark/benchmark.h>

#include <vector>

#include "stepscale/analysis.hpp"
#include "stepscale/dataset.hpp"
#include "stepscale/models.hpp"
#include "stepscale/nn.hpp"
#include "stepscale/quasirand.hpp"

namespace {

using namespace stepscale;

Model mlp(std::size_t hidden) {
  ModelSpec spec;
  spec.widths = {16, hidden, 4};
  spec.seed = 3;
  return build_model(spec);
}

Dataset synth(std::size_t per_class) {
  SynthSpec s;
  s.per_class = per_class;
  return synth_dataset(s, 11);
}

void BM_ForwardBackward(benchmark::State& state) {
  const Model model = mlp(64);
  const Dataset data = synth(256);
  std::vector<std::size_t> rows(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const Dataset batch = data.subset(rows);
  for (auto _ : state) {
    auto fw = forward(model, batch.inputs);
    benchmark::DoNotOptimize(backward(model, std::move(fw.cache), batch.labels));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->RangeMultiplier(8)->Range(2, 512);

void BM_FullGradient(benchmark::State& state) {
  const Model model = mlp(64);
  const Dataset data = synth(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(full_gradient(model, data));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.size()));
}
BENCHMARK(BM_FullGradient)->Arg(250)->Arg(2000);

void BM_LipschitzEstimate(benchmark::State& state) {
  const Model model = mlp(32);
  const Dataset data = synth(250);
  const auto grad = full_gradient_fn(model, data);
  std::vector<double> w0(model.parameters().begin(), model.parameters().end());
  std::vector<double> w1 = w0;
  for (std::size_t i = 0; i < w1.size(); ++i) w1[i] += 1e-3 * static_cast<double>(i % 7);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_lipschitz(grad, w0, w1, 0.1));
}
BENCHMARK(BM_LipschitzEstimate);

void BM_Sobol(benchmark::State& state) {
  SobolSequence seq(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(seq.next_integers());
}
BENCHMARK(BM_Sobol)->Arg(1)->Arg(8);

}  // namespace

BENCHMARK_MAIN();
