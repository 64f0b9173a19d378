#include <random>
#include <string>

#include <benchmark/benchmark.h>

#include "geovocab/json_extract.hpp"
#include "geovocab/npy.hpp"

using namespace geovocab;

namespace {

std::vector<float> random_values(std::size_t n) {
  std::mt19937 rng(5);
  std::normal_distribution<float> normal;
  std::vector<float> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

void BM_NpyEncode(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto values = random_values(side * side * 64);
  for (auto _ : state) benchmark::DoNotOptimize(npy::encode_f4({side, side, 64}, values));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(values.size() * sizeof(float)));
}
BENCHMARK(BM_NpyEncode)->Arg(64)->Arg(256);

void BM_NpyParse(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto values = random_values(side * side * 64);
  const auto bytes = npy::encode_f4({side, side, 64}, values);
  for (auto _ : state) benchmark::DoNotOptimize(npy::parse(bytes).as_f4());
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(bytes.size()));
}
BENCHMARK(BM_NpyParse)->Arg(64)->Arg(256);

void BM_ExtractJsonFenced(benchmark::State& state) {
  std::string text = "Here is my analysis of the tile.\n```json\n{\"verdicts\": [";
  for (int i = 0; i < 7; ++i) {
    if (i) text += ", ";
    text += "{\"category\": \"c" + std::to_string(i) + "\", \"present\": true, \"justification\": \"a {b} c\"}";
  }
  text += "]}\n```\nDone.";
  for (auto _ : state) benchmark::DoNotOptimize(extract_json(text));
}
BENCHMARK(BM_ExtractJsonFenced);

void BM_ExtractJsonProse(benchmark::State& state) {
  std::string text(2000, 'x');
  text += " {\"scene\": \"rural\", \"confidence\": 0.9, \"rationale\": \"fields [and] rows\"} trailing";
  for (auto _ : state) benchmark::DoNotOptimize(extract_json(text));
}
BENCHMARK(BM_ExtractJsonProse);

}  // namespace
