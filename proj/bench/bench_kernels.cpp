#include <benchmark/benchmark.h>

#include <random>

#include "seqscope/corpus.hpp"
#include "seqscope/kernels.hpp"
#include "seqscope/model.hpp"

using namespace seqscope;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(0) == 0 ? Exec::serial : Exec::parallel; }

Matrix gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (double& v : m.row(i)) v = n(rng);
  return m;
}

void BM_TopKDot(benchmark::State& state) {
  const Matrix rows = gaussian(50000, 64, 1);
  const Matrix q = gaussian(1, 64, 2);
  kernels::DotScan scan{&rows, q.row(0), 20, {}, {}, {}};
  for (auto _ : state) benchmark::DoNotOptimize(kernels::top_k_dot(scan, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows.rows()));
}

void BM_PairwiseDistances(benchmark::State& state) {
  const Matrix pts = gaussian(1000, 64, 3);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::pairwise_sq_distances(pts, exec_of(state)));
}

void BM_TsneGradient(benchmark::State& state) {
  const std::size_t n = 1000;
  Matrix p(n, n, 1.0 / static_cast<double>(n * (n - 1)));
  for (std::size_t i = 0; i < n; ++i) p(i, i) = 0.0;
  const Matrix y = gaussian(n, 2, 4);
  Matrix grad(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::tsne_gradient(p, y, grad, exec_of(state)));
}

void BM_BatchGradient(benchmark::State& state) {
  DatasetSpec spec;
  spec.size = 32;
  spec.seed = 5;
  const auto raw = generate_date_pairs(spec);
  const auto sv = build_vocab(raw, Role::source, TokenizerMode::char_level);
  const auto tv = build_vocab(raw, Role::target, TokenizerMode::char_level);
  const auto pairs = make_pairs(raw, sv, tv, TokenizerMode::char_level);
  ModelConfig c;
  c.src_vocab_size = static_cast<std::uint32_t>(sv.size());
  c.tgt_vocab_size = static_cast<std::uint32_t>(tv.size());
  const auto params = init_params(c, 1);
  for (auto _ : state) benchmark::DoNotOptimize(compute_gradients(params, pairs, exec_of(state)));
}

}  // namespace

BENCHMARK(BM_TopKDot)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_PairwiseDistances)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_TsneGradient)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_BatchGradient)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
