#include <benchmark/benchmark.h>

#include <random>

#include "mils/core.hpp"
#include "mils/prompts.hpp"
#include "mils/scorers.hpp"

namespace {

using namespace mils;

CandidatePool random_pool(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Candidate> batch;
  batch.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto c = Candidate::make("caption number " + std::to_string(i));
    c.score = ScoreValue::single("s", u(rng));
    batch.push_back(std::move(c));
  }
  CandidatePool pool;
  pool.merge(batch);
  return pool;
}

void BM_TopK(benchmark::State& state) {
  const auto pool = random_pool(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(top_k_select(pool, 50));
}
BENCHMARK(BM_TopK)->Arg(1000)->Arg(30000);

void BM_EpsilonGreedy(benchmark::State& state) {
  const auto pool = random_pool(30000, 2);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(epsilon_greedy_select(pool, 50, 0.2, ++seed));
}
BENCHMARK(BM_EpsilonGreedy);

void BM_Merge(benchmark::State& state) {
  const auto base = random_pool(30000, 3);
  std::vector<Candidate> fresh;
  for (int i = 0; i < 50; ++i) {
    auto c = Candidate::make("fresh caption " + std::to_string(i));
    c.score = ScoreValue::single("s", 0.5);
    fresh.push_back(std::move(c));
  }
  for (auto _ : state) {
    state.PauseTiming();
    auto pool = base;
    state.ResumeTiming();
    pool.merge(fresh);
    benchmark::DoNotOptimize(pool.size());
  }
}
BENCHMARK(BM_Merge);

void BM_FormatFeedback(benchmark::State& state) {
  const auto top = top_k_select(random_pool(1000, 4), 50);
  for (auto _ : state) benchmark::DoNotOptimize(format_feedback(top, FeedbackMode::single).to_string());
}
BENCHMARK(BM_FormatFeedback);

void BM_ParseNumberedList(benchmark::State& state) {
  std::string text;
  for (int i = 1; i <= 50; ++i) text += std::to_string(i) + ". a small red car parked on a quiet street\n";
  for (auto _ : state) benchmark::DoNotOptimize(parse_numbered_list(text));
}
BENCHMARK(BM_ParseNumberedList);

void BM_Gram(benchmark::State& state) {
  const int channels = static_cast<int>(state.range(0));
  const int spatial = static_cast<int>(state.range(1));
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  FeatureMap f{"l", channels, spatial, std::vector<double>(static_cast<std::size_t>(channels) * spatial)};
  for (auto& v : f.values) v = normal(rng);
  for (auto _ : state) benchmark::DoNotOptimize(gram_matrix(f));
}
BENCHMARK(BM_Gram)->Args({16, 64})->Args({64, 256});

void BM_Lexical(benchmark::State& state) {
  std::vector<std::string> texts;
  for (int i = 0; i < 50; ++i) texts.push_back("a red car number " + std::to_string(i) + " on the street");
  for (auto _ : state) benchmark::DoNotOptimize(lexical_score("a red car on the street", texts));
}
BENCHMARK(BM_Lexical);

}  // namespace

BENCHMARK_MAIN();
