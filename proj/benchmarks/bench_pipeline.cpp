#include <benchmark/benchmark.h>

#include <filesystem>

#include "ctpipe/ensemble.hpp"
#include "ctpipe/manifest.hpp"
#include "ctpipe/metrics.hpp"
#include "ctpipe/rng.hpp"
#include "ctpipe/synthgen.hpp"
#include "ctpipe/threshold.hpp"

using namespace ctpipe;

namespace {

SynthConfig bench_synth(int n_events) {
  SynthConfig cfg;
  cfg.n_classes = 16;
  cfg.feature_dim = 16;
  cfg.n_events = n_events;
  cfg.seed = 11;
  return cfg;
}

std::vector<MultiTaskPrediction> random_predictions(int n, int k, std::uint64_t seed) {
  Rng rng(seed);
  auto dist = [&](int classes) {
    std::vector<double> v(static_cast<std::size_t>(classes));
    double sum = 0;
    for (auto& x : v) {
      x = rng.uniform(0.0, 1.0) + 1e-9;
      sum += x;
    }
    for (auto& x : v) x /= sum;
    return v;
  };
  std::vector<MultiTaskPrediction> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    MultiTaskPrediction p;
    p.species_probs = dist(k);
    p.count_probs = dist(12);
    p.attribute_probs.assign(6, 0.5);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

static void BM_Generate(benchmark::State& state) {
  const SynthConfig cfg = bench_synth(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(generate(cfg));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_Generate)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

static void BM_ManifestRoundTrip(benchmark::State& state) {
  const Dataset d = generate(bench_synth(1000));
  const auto path = std::filesystem::temp_directory_path() / "ctpipe_bench_manifest.jsonl";
  for (auto _ : state) {
    save_manifest(d, path);
    benchmark::DoNotOptimize(load_manifest(path));
  }
  std::filesystem::remove(path);
}
BENCHMARK(BM_ManifestRoundTrip)->Unit(benchmark::kMillisecond);

static void BM_AveragePredictions(benchmark::State& state) {
  const auto members = random_predictions(static_cast<int>(state.range(0)), 48, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(average_predictions(members));
  }
}
BENCHMARK(BM_AveragePredictions)->Arg(3)->Arg(9);

static void BM_TopkAccuracy(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto preds_full = random_predictions(n, 48, 5);
  std::vector<std::vector<double>> preds;
  std::vector<int> labels;
  Rng rng(6);
  for (const auto& p : preds_full) {
    preds.push_back(p.species_probs);
    labels.push_back(static_cast<int>(rng.below(48)));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(topk_accuracy(preds, labels, 5));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * n);
}
BENCHMARK(BM_TopkAccuracy)->Arg(10000);

static void BM_ThresholdSweep(benchmark::State& state) {
  Rng rng(7);
  std::vector<SweepExample> examples;
  for (int i = 0; i < state.range(0); ++i) {
    SweepExample e;
    e.confidence = rng.uniform(0.0, 1.0);
    e.primary_correct = rng.bernoulli(0.8);
    e.secondary_correct = true;
    examples.push_back(e);
  }
  const auto grid = default_threshold_grid();
  for (auto _ : state) {
    benchmark::DoNotOptimize(sweep(examples, grid));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_ThresholdSweep)->Arg(10000);
