#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "generators.hpp"
#include "mirror_opt/error.hpp"
#include "mirror_opt/networks.hpp"
#include "mirror_opt/problems.hpp"

namespace mo = mirror_opt;
namespace ad = mirror_opt::ad;
using mo::Index;
using mo::Matrix;
using mo::Vector;

namespace {

std::shared_ptr<mo::SvmHingeProblem> small_svm(gen::Source& src, Index m = 15, Index dim = 6) {
  Matrix phi(m, dim);
  Vector y(m);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < dim; ++j) phi(i, j) = src.normal();
    y[i] = src.uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0;
  }
  return std::make_shared<mo::SvmHingeProblem>(phi, y, 1.0);
}

std::vector<std::shared_ptr<const mo::Problem>> convex_problems(gen::Source& src) {
  std::vector<std::shared_ptr<const mo::Problem>> out;
  out.push_back(std::make_shared<mo::QuadraticProblem>(src.positive_vector(5), src.normal_vector(5)));
  Matrix y = Matrix::Random(5, 4).cwiseAbs();
  out.push_back(std::make_shared<mo::TvProblem>(y));
  Matrix mask = Matrix::Ones(5, 4);
  mask(1, 2) = 0.0;
  mask(4, 0) = 0.0;
  out.push_back(std::make_shared<mo::TvProblem>(y, mask));
  out.push_back(small_svm(src));
  return out;
}

}  // namespace

TEST(Problems, SpecExamples) {
  const mo::QuadraticProblem q((Vector(2) << 1.0, 4.0).finished());
  const Vector ones = Vector::Ones(2);
  EXPECT_DOUBLE_EQ(q.objective(ones), 2.5);
  EXPECT_EQ(q.gradient(ones), (Vector(2) << 1.0, 4.0).finished());

  const Matrix flat = Matrix::Constant(6, 5, 0.4);
  const mo::TvProblem tv(flat);
  const Vector x(Eigen::Map<const Vector>(flat.data(), flat.size()));
  EXPECT_NEAR(tv.objective(x), 0.0, 1e-4);
  EXPECT_LE(tv.gradient(x).cwiseAbs().maxCoeff(), 1e-4);

  gen::Source src(20);
  const auto svm = small_svm(src, 9, 50);
  EXPECT_DOUBLE_EQ(svm->objective(Vector::Zero(51)), 1.0);
}

TEST(Problems, DimensionMismatchThrows) {
  const mo::QuadraticProblem q(Vector::Ones(3));
  EXPECT_THROW(q.objective(Vector::Zero(2)), mo::DimensionError);
  EXPECT_THROW(q.gradient(Vector::Zero(4)), mo::DimensionError);
  EXPECT_THROW(mo::QuadraticProblem(Vector::Zero(2)), mo::ConfigError);
  EXPECT_THROW(mo::TvProblem(Matrix::Ones(1, 4)), mo::DimensionError);
}

TEST(Problems, QuadraticFamilyClosedForm) {
  const mo::QuadraticProblem q((Vector(2) << 1.0, 4.0).finished(), (Vector(2) << 1.0, 4.0).finished());
  EXPECT_EQ(*q.minimizer(), (Vector(2) << -1.0, -1.0).finished());
  const auto sampled = mo::sample_quadratic_family((Vector(3) << 1.0, 2.0, 3.0).finished(), 5);
  const Vector& b = sampled->linear_term();
  EXPECT_NEAR(*sampled->minimum_value(), -0.5 * b.dot(b.cwiseQuotient(sampled->curvature())), 1e-14);
  EXPECT_EQ(mo::sample_quadratic_family(Vector::Ones(3), 5)->linear_term(),
            mo::sample_quadratic_family(Vector::Ones(3), 5)->linear_term());
  const mo::QuadraticProblem zero_b(Vector::Ones(2));
  EXPECT_EQ(*zero_b.minimizer(), Vector::Zero(2));
  EXPECT_THROW(mo::sample_quadratic_family((Vector(2) << 1.0, -1.0).finished(), 0), mo::ConfigError);
}

TEST(Problems, TvAtZeroLambdaHasMinimizerY) {
  const Matrix y = Matrix::Random(4, 3);
  const mo::TvProblem tv(y, 0.0);
  EXPECT_EQ(*tv.minimum_value(), 0.0);
  EXPECT_EQ(*tv.minimizer(), Vector(y.reshaped()));
}

TEST(Problems, InpaintingWithFullMaskIsDenoising) {
  gen::Source src(21);
  const Matrix y = Matrix::Random(6, 5);
  const mo::TvProblem den(y);
  const mo::TvProblem inp(y, Matrix::Ones(6, 5));
  EXPECT_EQ(inp.kind(), mo::ProblemKind::kInpaintTv);
  EXPECT_DOUBLE_EQ(inp.missing_fraction(), 0.0);
  for (int i = 0; i < 10; ++i) {
    const Vector x = src.normal_vector(30);
    EXPECT_EQ(den.objective(x), inp.objective(x));
  }
  Matrix mask = Matrix::Ones(6, 5);
  mask(0, 0) = 0.0;
  mask(2, 3) = 0.0;
  mask(5, 4) = 0.0;
  EXPECT_DOUBLE_EQ(mo::TvProblem(y, mask).missing_fraction(), 0.1);
  mask(1, 1) = 0.5;
  EXPECT_THROW(mo::TvProblem(y, mask), mo::ConfigError);
}

TEST(Problems, ImageGradientAdjoint) {
  gen::Source src(22);
  const mo::ImageGradient d(5, 7);
  for (int i = 0; i < 10; ++i) {
    const Vector x = src.normal_vector(d.num_pixels());
    const Vector p = src.normal_vector(d.num_differences());
    EXPECT_NEAR(d.apply(x).dot(p), x.dot(d.adjoint(p)), 1e-12);
  }
  // Constant images have zero gradient.
  EXPECT_EQ(d.apply(Vector::Constant(35, 2.0)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Problems, SvmHingeKinkIsInactive) {
  // One sample with margin exactly 1: the hinge contributes nothing to the subgradient.
  Matrix phi(1, 2);
  phi << 1.0, 0.0;
  const mo::SvmHingeProblem svm(phi, Vector::Ones(1), 1.0);
  const Vector x = (Vector(3) << 1.0, 0.0, 0.0).finished();
  EXPECT_EQ(svm.gradient(x), (Vector(3) << 1.0, 0.0, 0.0).finished());
}

TEST(ProblemsProperty, GradientsMatchCentralDifferences) {
  gen::Source src(23);
  auto data = std::make_shared<mo::ClassificationData>();
  data->num_classes = 3;
  data->features = Eigen::MatrixXf::Random(4, 12);
  for (int i = 0; i < 12; ++i) data->labels.push_back(i % 3);
  auto problems = convex_problems(src);
  const mo::DenseArchitecture arch{{4, 5, 3}};
  problems.push_back(std::make_shared<mo::DenseClassifier>(arch, data));
  for (const auto& p : problems) {
    SCOPED_TRACE(std::string(mo::to_string(p->kind())));
    for (int trial = 0; trial < 20; ++trial) {
      const Vector x = src.normal_vector(p->dim(), 0.5);
      const Vector fd = gen::central_difference([&](const Vector& z) { return p->objective(z); }, x, 1e-6);
      EXPECT_LE((p->gradient(x) - fd).cwiseAbs().maxCoeff(), 1e-5);
    }
  }
}

TEST(ProblemsProperty, TapeAndPlainPathsAgree) {
  gen::Source src(24);
  for (const auto& p : convex_problems(src)) {
    const Vector x = src.normal_vector(p->dim());
    ad::Tape tape;
    const ad::Var xv = tape.variable(x);
    EXPECT_NEAR(p->objective(tape, xv).scalar(), p->objective(x), 1e-10);
    EXPECT_LE((p->gradient(tape, xv).vector() - p->gradient(x)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(ProblemsProperty, MidpointConvexity) {
  gen::Source src(25);
  for (const auto& p : convex_problems(src)) {
    SCOPED_TRACE(std::string(mo::to_string(p->kind())));
    for (int trial = 0; trial < 100; ++trial) {
      const Vector x = src.normal_vector(p->dim());
      const Vector y = src.normal_vector(p->dim());
      EXPECT_LE(p->objective(Vector(0.5 * (x + y))), 0.5 * (p->objective(x) + p->objective(y)) + 1e-9);
    }
  }
}

TEST(ProblemsProperty, SubproblemOverAllSamplesIsTheProblem) {
  gen::Source src(26);
  const auto svm = small_svm(src);
  std::vector<Index> all(static_cast<std::size_t>(svm->num_samples()));
  for (Index i = 0; i < svm->num_samples(); ++i) all[static_cast<std::size_t>(i)] = i;
  const auto sub = svm->subproblem(all);
  const Vector x = src.normal_vector(svm->dim());
  EXPECT_NEAR(sub->objective(x), svm->objective(x), 1e-12);
  EXPECT_LE((sub->gradient(x) - svm->gradient(x)).cwiseAbs().maxCoeff(), 1e-12);
  const mo::QuadraticProblem q(Vector::Ones(2));
  EXPECT_THROW(q.subproblem(all), mo::ConfigError);
}
