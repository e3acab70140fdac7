#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "generators.hpp"
#include "mirror_opt/datasets.hpp"
#include "mirror_opt/error.hpp"
#include "mirror_opt/networks.hpp"

namespace mo = mirror_opt;
using mo::Index;
using mo::Matrix;
using mo::Vector;

namespace {

std::shared_ptr<const mo::ClassificationData> images(Index side, int n, int classes, std::uint64_t seed) {
  gen::Source src(seed);
  auto d = std::make_shared<mo::ClassificationData>();
  d->features = src.uniform_vector(side * side * n, 0.0, 1.0).reshaped(side * side, n).cast<float>();
  for (int i = 0; i < n; ++i) d->labels.push_back(i % classes);
  d->num_classes = classes;
  return d;
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

TEST(Networks, ParameterCounts) {
  EXPECT_EQ((mo::DenseArchitecture{{2, 50, 1}}.num_params()), 201);
  EXPECT_EQ((mo::DenseArchitecture{{784, 50, 40, 30, 20, 10}}.num_params()), 43350);
  const mo::ConvArchitecture conv;
  EXPECT_EQ(conv.features(), 288);
  EXPECT_EQ(conv.num_params(), 8 * 9 + 8 + 10 * 288 + 10);
  EXPECT_THROW((mo::DenseArchitecture{{3}}.validate()), mo::ConfigError);
}

TEST(Networks, InitializationRanges) {
  std::mt19937_64 rng(90);
  const mo::DenseArchitecture arch{{4, 8, 2}};
  const Vector z = mo::init_dense_params(arch, rng);
  for (Index i = arch.weight_offset(1); i < arch.weight_offset(2); ++i) EXPECT_LE(std::abs(z[i]), 0.25);
  for (Index i = arch.weight_offset(2); i < z.size(); ++i) EXPECT_LE(std::abs(z[i]), 0.125);
}

// Oracle: a 1-hidden-unit net evaluated by hand.
TEST(Networks, BinaryCrossEntropyByHand) {
  const mo::DenseArchitecture arch{{2, 1, 1}};
  auto data = std::make_shared<mo::ClassificationData>();
  data->features.resize(2, 2);
  data->features << 1.0f, -1.0f, 2.0f, 0.5f;
  data->labels = {1, 0};
  data->num_classes = 2;
  const mo::DenseClassifier net(arch, data);
  // A1 = [0.5, -0.25], b1 = 0.1, A2 = 2, b2 = -0.3.
  const Vector z = (Vector(5) << 0.5, -0.25, 0.1, 2.0, -0.3).finished();
  const double h0 = std::max(0.0, 0.5 * 1.0 - 0.25 * 2.0 + 0.1);
  const double h1 = std::max(0.0, 0.5 * -1.0 - 0.25 * 0.5 + 0.1);
  const double l0 = 2.0 * h0 - 0.3;
  const double l1 = 2.0 * h1 - 0.3;
  EXPECT_NEAR(net.objective(z), 0.5 * (softplus(-l0) + softplus(l1)), 1e-15);
  EXPECT_DOUBLE_EQ(net.accuracy(z), 0.5);
}

TEST(Networks, DenseGradientMatchesFiniteDifferences) {
  const mo::DenseArchitecture arch{{9, 6, 5, 3}};
  const mo::DenseClassifier net(arch, images(3, 12, 3, 91));
  std::mt19937_64 rng(92);
  const Vector z = mo::init_dense_params(arch, rng);
  const Vector fd = gen::central_difference([&](const Vector& x) { return net.objective(x); }, z, 1e-6);
  EXPECT_LE((net.gradient(z) - fd).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Networks, ConvGradientMatchesFiniteDifferences) {
  const mo::ConvArchitecture arch{8, 3, 3, 2, 4};
  const mo::ConvClassifier net(arch, images(8, 6, 4, 93));
  std::mt19937_64 rng(94);
  const Vector z = mo::init_conv_params(arch, rng);
  const Vector fd = gen::central_difference([&](const Vector& x) { return net.objective(x); }, z, 1e-6);
  EXPECT_LE((net.gradient(z) - fd).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Networks, SubproblemsAverageToTheFullObjective) {
  const mo::DenseArchitecture arch{{4, 3, 2}};
  const mo::DenseClassifier net(arch, images(2, 10, 2, 95));
  std::mt19937_64 rng(96);
  const Vector z = mo::init_dense_params(arch, rng);
  const std::vector<Index> first{0, 1, 2, 3, 4};
  const std::vector<Index> second{5, 6, 7, 8, 9};
  EXPECT_NEAR(0.5 * (net.subproblem(first)->objective(z) + net.subproblem(second)->objective(z)), net.objective(z),
              1e-14);
}

TEST(Networks, DataMismatch) {
  EXPECT_THROW(mo::DenseClassifier(mo::DenseArchitecture{{5, 2, 2}}, images(2, 4, 2, 97)), mo::DimensionError);
  EXPECT_THROW(mo::DenseClassifier(mo::DenseArchitecture{{4, 2, 1}}, images(2, 4, 3, 97)), mo::ConfigError);
}
