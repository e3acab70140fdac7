#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "mirror_opt/mirror_map.hpp"

namespace mo = mirror_opt;

namespace {

mo::Vector random_vector(mo::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  mo::Vector v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

mo::MirrorMap make_map(int kind, mo::Index n) {
  if (kind == 0) return mo::MirrorMap::euclidean(n);
  if (kind == 1) return mo::MirrorMap::diagonal(random_vector(n, 1).array().exp().matrix());
  mo::MonotoneSpline::Params p{};
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd(std::log(0.05), 0.5);
  for (double& u : p) u = nd(rng);
  return mo::MirrorMap::spline(n, mo::MonotoneSpline::from_params(p));
}

void BM_Forward(benchmark::State& state) {
  const auto map = make_map(static_cast<int>(state.range(0)), state.range(1));
  const mo::Vector x = random_vector(state.range(1), 3);
  for (auto _ : state) benchmark::DoNotOptimize(map.forward(x));
  state.SetItemsProcessed(state.iterations() * state.range(1));
}

void BM_Inverse(benchmark::State& state) {
  const auto map = make_map(static_cast<int>(state.range(0)), state.range(1));
  const mo::Vector y = random_vector(state.range(1), 4);
  for (auto _ : state) benchmark::DoNotOptimize(map.inverse(y));
  state.SetItemsProcessed(state.iterations() * state.range(1));
}

void BM_Bregman(benchmark::State& state) {
  const auto map = make_map(static_cast<int>(state.range(0)), state.range(1));
  const mo::Vector x = random_vector(state.range(1), 5);
  const mo::Vector y = random_vector(state.range(1), 6);
  for (auto _ : state) benchmark::DoNotOptimize(map.bregman(x, y));
}

// kind: 0 euclidean, 1 diagonal, 2 spline
void map_args(benchmark::internal::Benchmark* b) {
  for (int kind : {0, 1, 2}) b->Args({kind, 43350});
}

}  // namespace

BENCHMARK(BM_Forward)->Apply(map_args);
BENCHMARK(BM_Inverse)->Apply(map_args);
BENCHMARK(BM_Bregman)->Apply(map_args);
