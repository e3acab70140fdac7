#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <sstream>

#include "generators.hpp"
#include "mirror_opt/datasets.hpp"
#include "mirror_opt/equivariance.hpp"
#include "mirror_opt/error.hpp"
#include "mirror_opt/map_parameterization.hpp"
#include "mirror_opt/meta_training.hpp"
#include "mirror_opt/networks.hpp"

namespace mo = mirror_opt;
using mo::Index;
using mo::Vector;

namespace {

mo::ProblemSample sample_of(std::shared_ptr<const mo::Problem> p, Vector x0) {
  mo::ProblemSample s;
  s.problem = std::move(p);
  s.x0 = std::move(x0);
  return s;
}

mo::MetaParameters meta_of(const mo::MapParameterization& param, int steps, double t) {
  return {param.identity_params(), Vector::Constant(steps, std::log(t))};
}

double rel_error(const mo::MetaGradient& a, const mo::MetaGradient& b) {
  const double num = std::sqrt((a.map - b.map).squaredNorm() + (a.log_steps - b.log_steps).squaredNorm());
  const double den = std::sqrt(b.map.squaredNorm() + b.log_steps.squaredNorm());
  return num / std::max(den, 1e-300);
}

}  // namespace

TEST(UnrolledLoss, SingleEuclideanStep) {
  const mo::EuclideanParameterization param(1);
  mo::UnrollConfig cfg;
  cfg.steps = 1;
  const std::vector samples{sample_of(std::make_shared<mo::QuadraticProblem>(Vector::Ones(1)), Vector::Ones(1))};
  EXPECT_NEAR(mo::unrolled_loss(cfg, param, meta_of(param, 1, 0.1), samples), 0.405, 1e-15);
}

TEST(UnrolledLoss, IdentitySplineMatchesEuclidean) {
  gen::Source src(50);
  const auto fam = mo::QuadraticFamily(src.positive_vector(4), 3);
  const auto samples = fam.sample(3, 0);
  mo::UnrollConfig cfg;
  cfg.steps = 6;
  const mo::EuclideanParameterization e(4);
  const mo::SplineParameterization s(4);
  const double le = mo::unrolled_loss(cfg, e, meta_of(e, 6, 0.05), samples);
  const double ls = mo::unrolled_loss(cfg, s, meta_of(s, 6, 0.05), samples);
  EXPECT_NEAR(ls, le, 1e-12 * std::abs(le));
}

// Property: exact maps make the consistency penalty vanish for every algorithm.
TEST(UnrolledLossProperty, PenaltyFreeForExactMaps) {
  gen::Source src(51);
  const mo::QuadraticFamily fam(src.positive_vector(3), 4, 1.0, 0.05, 5);
  const auto samples = fam.sample(2, 1);
  const std::vector<std::shared_ptr<mo::MapParameterization>> params{
      std::make_shared<mo::EuclideanParameterization>(3), std::make_shared<mo::DiagonalParameterization>(3),
      std::make_shared<mo::SplineParameterization>(3)};
  for (auto alg : {mo::InLoopAlgorithm::kLmdDual, mo::InLoopAlgorithm::kLamd, mo::InLoopAlgorithm::kLsmd}) {
    for (const auto& p : params) {
      mo::MetaParameters meta = meta_of(*p, 5, 0.1);
      meta.map = meta.map + src.normal_vector(p->num_params(), 0.2);
      mo::UnrollConfig cfg;
      cfg.algorithm = alg;
      cfg.steps = 5;
      const double plain = mo::unrolled_loss(cfg, *p, meta, samples);
      cfg.penalty.assign(5, 100.0);
      EXPECT_NEAR(mo::unrolled_loss(cfg, *p, meta, samples), plain, 1e-9 * std::abs(plain));
    }
  }
}

TEST(MetaGradient, MatchesFiniteDifferencesOnEveryMapAndAlgorithm) {
  gen::Source src(52);
  const mo::QuadraticFamily fam(src.positive_vector(3), 5, 1.0, 0.05, 4);
  const auto samples = fam.sample(2, 0);
  const std::vector<std::shared_ptr<mo::MapParameterization>> params{
      std::make_shared<mo::EuclideanParameterization>(3), std::make_shared<mo::DiagonalParameterization>(3),
      std::make_shared<mo::SplineParameterization>(3)};
  for (auto alg : {mo::InLoopAlgorithm::kLmdDual, mo::InLoopAlgorithm::kLamd, mo::InLoopAlgorithm::kLsmd}) {
    for (const auto& p : params) {
      SCOPED_TRACE(std::string(mo::to_string(alg)) + " " + std::string(mo::to_string(p->kind())));
      mo::MetaParameters meta = meta_of(*p, 4, 0.1);
      meta.map = meta.map + src.normal_vector(p->num_params(), 0.1);
      mo::UnrollConfig cfg;
      cfg.algorithm = alg;
      cfg.steps = 4;
      cfg.penalty.assign(4, 0.1);
      const auto rev = mo::meta_gradient(cfg, *p, meta, samples);
      const auto fd = mo::finite_difference_oracle(cfg, *p, meta, samples, 1e-5);
      EXPECT_LE(rel_error(rev, fd), 1e-3);
      EXPECT_NEAR(rev.loss, mo::unrolled_loss(cfg, *p, meta, samples), 1e-12 * std::abs(rev.loss));
    }
  }
}

TEST(MetaGradient, FiniteDifferenceErrorIsSecondOrder) {
  const mo::QuadraticFamily fam((Vector(2) << 1.0, 4.0).finished(), 6);
  const auto samples = fam.sample(1, 0);
  const mo::DiagonalParameterization p(2);
  mo::UnrollConfig cfg;
  cfg.steps = 3;
  const mo::MetaParameters meta = meta_of(p, 3, 0.1);
  const auto rev = mo::meta_gradient(cfg, p, meta, samples);
  const double e1 = rel_error(mo::finite_difference_oracle(cfg, p, meta, samples, 4e-2), rev);
  const double e2 = rel_error(mo::finite_difference_oracle(cfg, p, meta, samples, 2e-2), rev);
  EXPECT_NEAR(e1 / e2, 4.0, 0.5);
  EXPECT_THROW(mo::finite_difference_oracle(cfg, p, meta, samples, 0.0), mo::ConfigError);
}

TEST(MetaGradient, ZeroUnrollHasZeroGradient) {
  const mo::DiagonalParameterization p(2);
  mo::UnrollConfig cfg;
  cfg.steps = 0;
  const auto samples = mo::QuadraticFamily(Vector::Ones(2), 1).sample(2, 0);
  const auto g = mo::meta_gradient(cfg, p, meta_of(p, 0, 0.1), samples);
  EXPECT_EQ(g.map, Vector::Zero(2));
  EXPECT_EQ(g.log_steps.size(), 0);
}

// With D = A and t = 1 the first step lands on the minimizer, so no step size can improve the loss.
TEST(MetaGradient, NewtonFixedPoint) {
  const Vector a = (Vector(3) << 1.0, 10.0, 100.0).finished();
  const auto samples = mo::QuadraticFamily(a, 7).sample(4, 0);
  const mo::DiagonalParameterization p(3);
  mo::UnrollConfig cfg;
  cfg.steps = 5;
  const mo::MetaParameters meta{a.array().log().matrix(), Vector::Zero(5)};
  const auto g = mo::meta_gradient(cfg, p, meta, samples);
  EXPECT_LE(g.log_steps.cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE(g.map.cwiseAbs().maxCoeff(), 1e-10);
}

TEST(TrainMap, ZeroMetaIterationsReturnTheInitialization) {
  const mo::QuadraticFamily fam(Vector::Ones(2), 1);
  const mo::DiagonalParameterization p(2);
  mo::TrainConfig cfg;
  cfg.unroll.steps = 3;
  cfg.meta_iterations = 0;
  mo::MetaParameters init{(Vector(2) << 0.3, -0.2).finished(), Vector::Constant(3, -2.0)};
  const auto out = mo::train_map(cfg, p, init, fam);
  EXPECT_EQ(out.params.map, init.map);
  EXPECT_EQ(out.params.log_steps, init.log_steps);
  EXPECT_TRUE(out.log.empty());
}

TEST(TrainMap, ReproducibleAcrossRunsAndThreadCounts) {
  const mo::QuadraticFamily fam((Vector(3) << 1.0, 3.0, 9.0).finished(), 2, 1.0, 0.05, 4);
  const mo::SplineParameterization p(3);
  mo::TrainConfig cfg;
  cfg.unroll.steps = 4;
  cfg.unroll.algorithm = mo::InLoopAlgorithm::kLsmd;
  cfg.meta_iterations = 5;
  cfg.batch_size = 4;
  cfg.meta_step = 1e-3;
  const mo::MetaParameters init = meta_of(p, 4, 0.05);
  const auto a = mo::train_map(cfg, p, init, fam);
  const auto b = mo::train_map(cfg, p, init, fam);
  cfg.threads = 3;
  const auto c = mo::train_map(cfg, p, init, fam);
  EXPECT_EQ(a.params.map, b.params.map);
  EXPECT_EQ(a.params.log_steps, b.params.log_steps);
  EXPECT_EQ(a.params.map, c.params.map);
  EXPECT_EQ(a.params.log_steps, c.params.log_steps);
  ASSERT_EQ(a.log.size(), 5u);
  for (const auto& row : a.log) EXPECT_GT(row.min_t, 0.0);
  std::ostringstream ss;
  mo::write_train_log(ss, a.log);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), "meta_iter,meta_loss,grad_norm,min_t,max_t");
}

TEST(TrainMap, ConfigErrors) {
  const mo::QuadraticFamily fam(Vector::Ones(2), 1);
  const mo::DiagonalParameterization p(2);
  mo::TrainConfig cfg;
  cfg.unroll.steps = 2;
  const auto init = meta_of(p, 2, 0.1);
  cfg.meta_step = 0.0;
  EXPECT_THROW(mo::train_map(cfg, p, init, fam), mo::ConfigError);
  cfg.meta_step = 0.1;
  cfg.unroll.penalty = {1.0, -1.0};
  EXPECT_THROW(mo::train_map(cfg, p, init, fam), mo::ConfigError);
  cfg.unroll.penalty.clear();
  EXPECT_THROW(mo::train_map(cfg, mo::DiagonalParameterization(3), meta_of(mo::DiagonalParameterization(3), 2, 0.1), fam),
               mo::DimensionError);
  EXPECT_THROW(mo::in_loop_algorithm_from_string("adam"), mo::ConfigError);
}

TEST(TrainMap, MetaDivergenceIsReported) {
  const mo::QuadraticFamily fam(Vector::Constant(2, 1.0), 1);
  const mo::EuclideanParameterization p(2);
  mo::TrainConfig cfg;
  cfg.unroll.steps = 3;
  cfg.meta_iterations = 50;
  cfg.meta_step = 1e3;
  // The first update throws the step sizes far past the stability limit t < 2.
  EXPECT_THROW(mo::train_map(cfg, p, meta_of(p, 3, 0.1), fam), mo::DivergenceError);
}

// Property: on a group-closed sample set, an orbit-constant map stays orbit-constant under
// meta-gradient descent even when every entry is trained separately.
TEST(MetaGradientProperty, GroupClosedBatchesKeepOrbitsTied) {
  const mo::DenseArchitecture arch{{2, 3, 1}};
  const auto data = std::make_shared<const mo::ClassificationData>(mo::make_moons(20, 0.1, 3));
  auto problem = std::make_shared<const mo::DenseClassifier>(arch, data);
  const auto schema = mo::build_tying_schema(arch);
  std::mt19937_64 rng(53);
  std::vector<mo::ProblemSample> samples;
  for (int i = 0; i < 2; ++i) {
    const Vector z = mo::init_dense_params(arch, rng);
    std::vector<Index> perm{0, 1, 2};
    do {
      samples.push_back(sample_of(problem, mo::make_group_element(arch, {perm}).apply(z)));
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  const mo::DiagonalParameterization untied(arch.num_params());
  mo::UnrollConfig cfg;
  cfg.steps = 4;
  mo::MetaParameters meta = meta_of(untied, 4, 0.5);
  for (int it = 0; it < 3; ++it) {
    const auto g = mo::meta_gradient(cfg, untied, meta, samples);
    const double scale = g.map.cwiseAbs().maxCoeff();
    ASSERT_GT(scale, 0.0);
    for (const auto& orbit : schema.orbits) {
      for (Index i : orbit) EXPECT_NEAR(g.map[i], g.map[orbit.front()], 1e-6 * scale) << "iteration " << it;
    }
    meta.map -= 0.1 * g.map;
    meta.log_steps -= 0.1 * g.log_steps;
  }
}
