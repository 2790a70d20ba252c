#include <benchmark/benchmark.h>

#include "ctpipe/imbalance.hpp"
#include "ctpipe/model.hpp"
#include "ctpipe/rng.hpp"

using namespace ctpipe;

namespace {

HeadLayout multitask_layout(int k) {
  HeadLayout layout;
  layout.mode = HeadMode::multitask;
  layout.n_species = k;
  return layout;
}

TrainingSet make_data(int n, int dim, int k, std::uint64_t seed) {
  Rng rng(seed);
  TrainingSet ts;
  ts.feature_dim = dim;
  for (int i = 0; i < n; ++i) {
    std::vector<double> x(static_cast<std::size_t>(dim));
    for (auto& v : x) v = rng.normal();
    ts.features.push_back(std::move(x));
    Target t;
    t.empty = false;
    t.species = static_cast<int>(rng.below(static_cast<std::size_t>(k)));
    t.count_bin = static_cast<int>(rng.below(12));
    for (int a = 0; a < 6; ++a) t.attributes[static_cast<std::size_t>(a)] = rng.bernoulli(0.2);
    t.has_attributes = true;
    ts.targets.push_back(t);
    ts.image_ids.push_back("im" + std::to_string(i));
    ts.event_ids.push_back("ev" + std::to_string(i / 3));
  }
  return ts;
}

}  // namespace

static void BM_Forward(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  Network net(multitask_layout(48), dim, {64, 32}, Activation::tanh_fn, 1);
  Rng rng(2);
  std::vector<double> x(static_cast<std::size_t>(dim));
  for (auto& v : x) v = rng.normal();
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.forward(x));
  }
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(64)->Arg(256);

static void BM_BackwardBatch(benchmark::State& state) {
  const auto batch_size = static_cast<std::size_t>(state.range(0));
  Network net(multitask_layout(48), 32, {64, 32}, Activation::tanh_fn, 1);
  const TrainingSet data = make_data(1024, 32, 48, 3);
  std::vector<std::size_t> batch(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) batch[i] = i;
  const HeadWeights weights = no_head_weights(net.layout());
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.backward(data, batch, weights, std::nullopt));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(batch_size));
}
BENCHMARK(BM_BackwardBatch)->Arg(32)->Arg(128);

static void BM_TrainEpoch(benchmark::State& state) {
  const TrainingSet data = make_data(512, 16, 8, 4);
  HeadLayout layout = multitask_layout(8);
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.epochs = 1;
  cfg.schedule = uniform_schedule(1, 0.05, 0.0005);
  cfg.hidden = {32, 16};
  for (auto _ : state) {
    UniformSampler sampler(data.size(), 32, 7);
    ModelState s = init_state(layout, data.feature_dim, cfg);
    benchmark::DoNotOptimize(fit(std::move(s), data, data, cfg, sampler, no_head_weights(layout)));
  }
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

static void BM_OversampleDraw(benchmark::State& state) {
  std::vector<std::size_t> class_of_example;
  for (int c = 0; c < 8; ++c) {
    for (int i = 0; i < 1 << (c + 2); ++i) class_of_example.push_back(static_cast<std::size_t>(c));
  }
  OversampleSampler sampler(class_of_example, 8, 128, 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sampler.next_step());
  }
}
BENCHMARK(BM_OversampleDraw);
