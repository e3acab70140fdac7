#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <set>

#include "generators.hpp"
#include "mirror_opt/error.hpp"
#include "mirror_opt/oracle.hpp"

namespace mo = mirror_opt;
using mo::Index;
using mo::Matrix;
using mo::Vector;

namespace {

std::shared_ptr<mo::SvmHingeProblem> svm(Index m) {
  gen::Source src(30);
  Matrix phi(m, 4);
  Vector y(m);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < 4; ++j) phi(i, j) = src.normal();
    y[i] = i % 2 == 0 ? 1.0 : -1.0;
  }
  return std::make_shared<mo::SvmHingeProblem>(phi, y);
}

}  // namespace

TEST(Oracle, ZeroSigmaIsExact) {
  auto p = std::make_shared<mo::QuadraticProblem>(Vector::Ones(3), Vector::Constant(3, 0.5));
  const auto o = mo::StochasticOracle::gaussian(p, 0.0, 1);
  const Vector x = (Vector(3) << 1.0, 2.0, 3.0).finished();
  EXPECT_EQ(o.gradient(x, 17), p->gradient(x));
}

TEST(Oracle, DrawsAreReproducible) {
  auto p = std::make_shared<mo::QuadraticProblem>(Vector::Ones(3));
  const auto a = mo::StochasticOracle::gaussian(p, 0.1, 42);
  const auto b = mo::StochasticOracle::gaussian(p, 0.1, 42);
  EXPECT_EQ(a.noise(5), b.noise(5));
  EXPECT_NE(a.noise(5), a.noise(6));
  EXPECT_NE(a.noise(5), mo::StochasticOracle::gaussian(p, 0.1, 43).noise(5));
}

TEST(Oracle, GaussianMeanConcentrates) {
  auto p = std::make_shared<mo::QuadraticProblem>((Vector(2) << 1.0, 3.0).finished());
  const double sigma = 0.05;
  const auto o = mo::StochasticOracle::gaussian(p, sigma, 3);
  const Vector x = (Vector(2) << 0.4, -0.2).finished();
  const int draws = 100000;
  Vector mean = Vector::Zero(2);
  for (int k = 0; k < draws; ++k) mean += o.gradient(x, static_cast<std::uint64_t>(k));
  mean /= draws;
  EXPECT_LE((mean - p->gradient(x)).cwiseAbs().maxCoeff(), 5.0 * sigma / std::sqrt(draws));
}

TEST(Oracle, FullBatchIsTheFullGradient) {
  auto p = svm(12);
  const auto o = mo::StochasticOracle::minibatch(p, 12, 4);
  gen::Source src(31);
  const Vector x = src.normal_vector(p->dim());
  EXPECT_LE((o.gradient(x, 3) - p->gradient(x)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Oracle, MinibatchesPartitionEachEpoch) {
  auto p = svm(20);
  const auto o = mo::StochasticOracle::minibatch(p, 6, 5);
  // 3 full batches per epoch; the 2 leftover samples are skipped.
  std::set<Index> seen;
  for (std::uint64_t d = 0; d < 3; ++d) {
    const auto idx = o.batch_indices(d);
    EXPECT_EQ(idx.size(), 6u);
    EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
    for (Index i : idx) EXPECT_TRUE(seen.insert(i).second);
  }
  EXPECT_EQ(seen.size(), 18u);
  EXPECT_NE(o.batch_indices(0), o.batch_indices(3));
}

TEST(Oracle, MinibatchIsUnbiased) {
  auto p = svm(10);
  const auto o = mo::StochasticOracle::minibatch(p, 2, 6);
  gen::Source src(32);
  const Vector x = src.normal_vector(p->dim(), 0.3);
  // Over one epoch every sample appears once, so the batch gradients average exactly.
  Vector mean = Vector::Zero(p->dim());
  for (std::uint64_t d = 0; d < 5; ++d) mean += o.gradient(x, d) / 5.0;
  EXPECT_LE((mean - p->gradient(x)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Oracle, DualErrorHook) {
  auto p = std::make_shared<mo::QuadraticProblem>(Vector::Ones(2));
  auto o = mo::StochasticOracle::gaussian(p, 0.0, 1);
  o.set_dual_error([](const Vector& x) { return Vector(0.1 * x); });
  const Vector x = Vector::Ones(2);
  EXPECT_EQ(o.gradient(x, 0), Vector::Constant(2, 1.1));
}

TEST(Oracle, InvalidConfigurations) {
  auto q = std::make_shared<mo::QuadraticProblem>(Vector::Ones(2));
  EXPECT_THROW(mo::StochasticOracle::gaussian(q, -1.0, 0), mo::ConfigError);
  EXPECT_THROW(mo::StochasticOracle::minibatch(q, 2, 0), mo::ConfigError);
  EXPECT_THROW(mo::StochasticOracle::minibatch(svm(4), 0, 0), mo::ConfigError);
  EXPECT_THROW(mo::StochasticOracle::minibatch(svm(4), 5, 0), mo::ConfigError);
}
