#include <benchmark/benchmark.h>

#include <cmath>

#include "mirror_opt/map_parameterization.hpp"
#include "mirror_opt/meta_training.hpp"
#include "mirror_opt/optimizers.hpp"

namespace mo = mirror_opt;

namespace {

void BM_MetaGradientSpline(benchmark::State& state) {
  const mo::Index n = state.range(0);
  const mo::QuadraticFamily family(mo::Vector::LinSpaced(n, 1.0, 10.0), 1);
  const auto samples = family.sample(4, 0);
  const mo::SplineParameterization param(n);
  mo::UnrollConfig cfg;
  cfg.steps = 10;
  const mo::MetaParameters meta{param.identity_params(), mo::Vector::Constant(10, std::log(0.05))};
  for (auto _ : state) benchmark::DoNotOptimize(mo::meta_gradient(cfg, param, meta, samples));
}

void BM_LamdIterations(benchmark::State& state) {
  const mo::Index n = 100;
  const mo::QuadraticProblem p(mo::Vector::LinSpaced(n, 0.03, 1.0));
  const auto map = mo::MirrorMap::euclidean(n);
  mo::RunOptions opts;
  opts.iterations = state.range(0);
  opts.record_grad_norm = false;
  opts.record_consistency = false;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        mo::run_lamd(map, p, nullptr, mo::StepSchedule::constant(0.05), mo::Vector::Ones(n), {}, opts));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_MetaGradientSpline)->Arg(10)->Arg(100);
BENCHMARK(BM_LamdIterations)->Arg(2000);
