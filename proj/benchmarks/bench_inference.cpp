#include <benchmark/benchmark.h>

#include <random>

#include "casdet/architectures.hpp"
#include "casdet/features.hpp"
#include "casdet/postprocess.hpp"
#include "casdet/synth.hpp"

namespace {

casdet::Recording noise_recording() {
  casdet::Recording r;
  r.id = "bench";
  r.samples = casdet::breathing_noise(60000, 3.0, 0.0, casdet::kDefaultSampleRate, 7);
  return r;
}

void BM_Preprocess(benchmark::State& state) {
  const casdet::Recording r = noise_recording();
  for (auto _ : state) benchmark::DoNotOptimize(casdet::preprocess(r));
}
BENCHMARK(BM_Preprocess)->Unit(benchmark::kMillisecond);

// Arg 0 selects the variant, arg 1 the preset: 0 full width, 1 toy.
void BM_Predict(benchmark::State& state) {
  const auto v = casdet::kAllVariants[state.range(0)];
  const casdet::ModelSpec spec = state.range(1) == 0 ? casdet::ModelSpec::defaults(v) : casdet::ModelSpec::toy(v);
  casdet::Model model(spec);
  const casdet::FeatureMatrix f = casdet::preprocess(noise_recording()).features;
  for (auto _ : state) benchmark::DoNotOptimize(casdet::predict(model, f));
  state.SetLabel(casdet::to_string(v));
}
BENCHMARK(BM_Predict)
    ->ArgsProduct({{0, 1, 2, 3, 4, 5}, {0, 1}})
    ->Unit(benchmark::kMillisecond)
    ->Iterations(3);

void BM_Postprocess(benchmark::State& state) {
  const casdet::Spectrogram s = casdet::preprocess(noise_recording()).spectrogram;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(469);
  for (double& v : p) v = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(casdet::postprocess(p, {469, 0.032}, 0.5, s));
}
BENCHMARK(BM_Postprocess)->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
