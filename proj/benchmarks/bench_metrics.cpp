#include <random>

#include <benchmark/benchmark.h>

#include "geovocab/metrics.hpp"

using namespace geovocab;

namespace {

LabelRaster random_raster(std::mt19937& rng, std::size_t side, std::size_t k) {
  std::vector<std::uint16_t> v(side * side);
  for (auto& x : v) x = static_cast<std::uint16_t>(rng() % k);
  return LabelRaster(side, side, std::move(v), k);
}

void BM_Accumulate(benchmark::State& state) {
  std::mt19937 rng(3);
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto pool = loveda_pool();
  const auto pred = random_raster(rng, side, pool.size());
  const auto truth = random_raster(rng, side, pool.size());
  for (auto _ : state) {
    ConfusionMatrix cm(pool);
    cm.accumulate(pred, truth);
    benchmark::DoNotOptimize(cm);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(side * side));
}
BENCHMARK(BM_Accumulate)->Arg(256)->Arg(1024);

void BM_Report(benchmark::State& state) {
  std::mt19937 rng(4);
  ConfusionMatrix cm(loveda_pool());
  cm.accumulate(random_raster(rng, 512, 7), random_raster(rng, 512, 7));
  for (auto _ : state) benchmark::DoNotOptimize(render_report(make_report(cm, 0.5, 1, 0), ReportFormat::TextTable));
}
BENCHMARK(BM_Report);

}  // namespace
