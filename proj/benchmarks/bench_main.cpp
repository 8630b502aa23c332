#include <benchmark/benchmark.h>

#include <random>

#include "segtriage/bundle.hpp"
#include "segtriage/score_table.hpp"
#include "segtriage/stat_model.hpp"
#include "segtriage/synth_gen.hpp"
#include "segtriage/triage_sim.hpp"

using namespace segtriage;

namespace {

Bundle sample_bundle(std::size_t side) {
  GeneratorConfig cfg;
  cfg.num_images = 1;
  cfg.height = cfg.width = side;
  return generate_image(cfg, 0).bundle;
}

std::vector<QualitySample> sample_corpus(std::size_t n) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::vector<QualitySample> out(n);
  for (auto& s : out) {
    s.uncertainty.u = {ud(rng), ud(rng), ud(rng), ud(rng)};
    s.uncertainty.pixel_counts = {1, 1, 1, 1};
    s.mean_dice = 0.9 - 0.2 * *s.uncertainty.u[1] - 0.1 * *s.uncertainty.u[2] + 0.02 * ud(rng);
  }
  return out;
}

}  // namespace

static void BM_EntropyMap(benchmark::State& state) {
  const auto mean = mean_probability(sample_bundle(state.range(0)).probabilities);
  for (auto _ : state) benchmark::DoNotOptimize(entropy_map(mean));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_EntropyMap)->Arg(64)->Arg(256);

static void BM_DiceReport(benchmark::State& state) {
  const auto b = sample_bundle(state.range(0));
  const auto seg = argmax_segmentation(mean_probability(b.probabilities));
  for (auto _ : state) benchmark::DoNotOptimize(dice_report(seg, *b.label, b.class_spec));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_DiceReport)->Arg(64)->Arg(256);

static void BM_AnalyzeBundle(benchmark::State& state) {
  const auto b = sample_bundle(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(analyze_bundle(b));
}
BENCHMARK(BM_AnalyzeBundle)->Arg(64)->Arg(256);

static void BM_FitQualityModel(benchmark::State& state) {
  const auto corpus = sample_corpus(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(fit_quality_model(corpus, 0.05));
}
BENCHMARK(BM_FitQualityModel)->Arg(50)->Arg(500);

static void BM_RunSimulation(benchmark::State& state) {
  const auto corpus = sample_corpus(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(run_simulation(corpus, {30, 7, 0.05, 0}));
}
BENCHMARK(BM_RunSimulation)->Arg(100)->Arg(1000);

static void BM_EncodeBundle(benchmark::State& state) {
  const auto b = sample_bundle(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(encode_bundle(b));
}
BENCHMARK(BM_EncodeBundle)->Arg(64)->Arg(256);

static void BM_DecodeBundle(benchmark::State& state) {
  const auto bytes = encode_bundle(sample_bundle(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(decode_bundle(bytes));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(bytes.size()));
}
BENCHMARK(BM_DecodeBundle)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
