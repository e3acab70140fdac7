#include <benchmark/benchmark.h>

#include <memory>
#include <random>

#include "mirror_opt/datasets.hpp"
#include "mirror_opt/networks.hpp"
#include "mirror_opt/problems.hpp"

namespace mo = mirror_opt;

namespace {

void BM_TvGradient(benchmark::State& state) {
  mo::EllipsePhantomSpec spec;
  spec.height = state.range(0);
  spec.width = state.range(0);
  const auto phantom = mo::generate_ellipse_phantom(spec);
  const mo::TvProblem tv(phantom.noisy);
  const mo::Vector x = phantom.noisy.reshaped();
  for (auto _ : state) benchmark::DoNotOptimize(tv.gradient(x));
  state.SetItemsProcessed(state.iterations() * x.size());
}

void BM_MoonsMlpGradient(benchmark::State& state) {
  const mo::DenseArchitecture arch{{2, 50, 1}};
  auto data = std::make_shared<const mo::ClassificationData>(mo::make_moons(state.range(0), 0.1, 1));
  const mo::DenseClassifier net(arch, data);
  std::mt19937_64 rng(2);
  const mo::Vector z = mo::init_dense_params(arch, rng);
  for (auto _ : state) benchmark::DoNotOptimize(net.gradient(z));
}

void BM_ConvGradient(benchmark::State& state) {
  const mo::ConvArchitecture arch;
  auto data = std::make_shared<mo::ClassificationData>();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  data->features.resize(arch.image_size * arch.image_size, state.range(0));
  for (mo::Index j = 0; j < data->features.cols(); ++j) {
    for (mo::Index i = 0; i < data->features.rows(); ++i) data->features(i, j) = u(rng);
    data->labels.push_back(static_cast<int>(j % 10));
  }
  data->num_classes = 10;
  const mo::ConvClassifier net(arch, data);
  const mo::Vector z = mo::init_conv_params(arch, rng);
  for (auto _ : state) benchmark::DoNotOptimize(net.gradient(z));
}

}  // namespace

BENCHMARK(BM_TvGradient)->Arg(64)->Arg(128);
BENCHMARK(BM_MoonsMlpGradient)->Arg(100);
BENCHMARK(BM_ConvGradient)->Arg(500);
