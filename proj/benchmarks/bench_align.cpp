#include <random>

#include <benchmark/benchmark.h>

#include "geovocab/align.hpp"

using namespace geovocab;

namespace {

struct Scene {
  CategoryPool pool;
  DenseFeatureMap features;
  TextEmbeddingSet embeddings;
};

Scene make_scene(std::size_t side, std::size_t dim, std::size_t classes) {
  std::mt19937 rng(1);
  std::normal_distribution<float> normal;
  std::vector<CategorySeed> seeds;
  for (std::size_t i = 0; i < classes; ++i) seeds.push_back({"c" + std::to_string(i), ""});
  CategoryPool pool(seeds);
  std::vector<float> emb(classes * dim), feat(side * side * dim);
  for (auto& v : emb) v = normal(rng);
  for (auto& v : feat) v = normal(rng);
  TextEmbeddingSet embeddings(pool, dim, std::move(emb));
  return {pool, DenseFeatureMap(side, side, dim, std::move(feat)), std::move(embeddings)};
}

void BM_SegmentFullPool(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto scene = make_scene(side, 512, 7);
  const auto vocab = AdaptiveVocabulary::full_pool(scene.pool);
  AlignmentConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(segment(scene.features, scene.embeddings, vocab, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(side * side));
}
BENCHMARK(BM_SegmentFullPool)->Arg(32)->Arg(64)->Arg(128);

void BM_SegmentRestricted(benchmark::State& state) {
  const auto scene = make_scene(64, 512, 7);
  const std::vector<std::size_t> candidates{0, 3, 6};
  for (auto _ : state) {
    benchmark::DoNotOptimize(segment_candidates(scene.features, scene.embeddings, candidates, Similarity::Cosine));
  }
  state.SetItemsProcessed(state.iterations() * 64 * 64);
}
BENCHMARK(BM_SegmentRestricted);

void BM_SegmentJobs(benchmark::State& state) {
  const auto scene = make_scene(128, 512, 7);
  const auto all = std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6};
  const int jobs = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(segment_candidates(scene.features, scene.embeddings, all, Similarity::Cosine, jobs));
  }
}
BENCHMARK(BM_SegmentJobs)->Arg(1)->Arg(4)->UseRealTime();

}  // namespace
