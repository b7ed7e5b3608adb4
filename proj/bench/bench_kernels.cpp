// Serial reference vs OpenMP kernels. Set OMP_NUM_THREADS to compare.

#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "ffrr/kernels.hpp"
#include "ffrr/rng.hpp"

using namespace ffrr;

namespace {

constexpr std::uint32_t kE = 128;
constexpr std::uint32_t kF = 1u << 15;

std::vector<FeatureVector> documents(std::size_t n) {
  Rng rng(1);
  std::vector<FeatureVector> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string text;
    for (int w = 0; w < 30; ++w) text += "w" + std::to_string(rng.index(5000)) + " ";
    out.push_back(featurize(text, kF));
  }
  return out;
}

std::vector<double> gaussian(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

template <bool Parallel>
void BM_EmbedRows(benchmark::State& state) {
  const auto params = EncoderParams::random(kE, kF, 2);
  const auto docs = documents(static_cast<std::size_t>(state.range(0)));
  std::vector<double> out(docs.size() * kE);
  for (auto _ : state) {
    if constexpr (Parallel) kernels::embed_rows_parallel(params, docs, out);
    else kernels::embed_rows_serial(params, docs, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_ScoreRows(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto rows = gaussian(n * kE, 3);
  const auto query = gaussian(kE, 4);
  std::vector<double> out(n);
  for (auto _ : state) {
    if constexpr (Parallel) kernels::score_rows_parallel(rows, kE, query, out);
    else kernels::score_rows_serial(rows, kE, query, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_AdamStep(benchmark::State& state) {
  const std::size_t n = std::size_t{kE} * static_cast<std::size_t>(state.range(0));
  auto w = gaussian(n, 5);
  std::vector<double> m(n, 0.0), v(n, 0.0);
  const auto g = gaussian(n, 6);
  const kernels::AdamCoefficients c{1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001};
  for (auto _ : state) {
    if constexpr (Parallel) kernels::adam_step_parallel(w, m, v, g, c);
    else kernels::adam_step_serial(w, m, v, g, c);
    benchmark::DoNotOptimize(w.data());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(n * 4 * sizeof(double)));
}

}  // namespace

BENCHMARK(BM_EmbedRows<false>)->Arg(500)->Arg(5000);
BENCHMARK(BM_EmbedRows<true>)->Arg(500)->Arg(5000);
BENCHMARK(BM_ScoreRows<false>)->Arg(500)->Arg(20000);
BENCHMARK(BM_ScoreRows<true>)->Arg(500)->Arg(20000);
BENCHMARK(BM_AdamStep<false>)->Arg(1 << 12)->Arg(1 << 15);
BENCHMARK(BM_AdamStep<true>)->Arg(1 << 12)->Arg(1 << 15);

BENCHMARK_MAIN();
