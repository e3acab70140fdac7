#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <sstream>

#include "generators.hpp"
#include "mirror_opt/diagnostics.hpp"
#include "mirror_opt/error.hpp"
#include "mirror_opt/optimizers.hpp"

namespace mo = mirror_opt;
using mo::Index;
using mo::Vector;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

mo::RunOptions with_states(long iterations) {
  mo::RunOptions o;
  o.iterations = iterations;
  o.record_states = true;
  return o;
}

}  // namespace

TEST(MdStep, WorkedExamples) {
  const auto e = mo::MirrorMap::euclidean(1);
  EXPECT_NEAR(mo::md_step_primal(e, vec({1.0}), vec({1.0}), 0.1)[0], 0.9, 1e-15);
  EXPECT_EQ(mo::md_step_primal(e, vec({1.0}), vec({1.0}), 0.0)[0], 1.0);
  const auto d = mo::MirrorMap::diagonal(vec({2.0}));
  EXPECT_NEAR(mo::md_step_primal(d, vec({1.0}), vec({2.0}), 0.5)[0], 0.5, 1e-15);
  EXPECT_EQ(mo::md_step_dual(d, vec({3.0}), 0.0, vec({5.0}))[0], 3.0);
  EXPECT_THROW(mo::md_step_primal(e, vec({1.0}), vec({NAN}), 0.1), mo::NonFiniteError);
}

TEST(Baselines, GdFirstStep) {
  const mo::QuadraticProblem p(vec({1.0}));
  const mo::Trace tr = mo::run_baseline({mo::BaselineKind::kGd, 0.1}, p, nullptr, vec({1.0}), with_states(1));
  ASSERT_EQ(tr.states.x.size(), 2u);
  EXPECT_NEAR(tr.states.x[1][0], 0.9, 1e-15);
}

TEST(Baselines, AdamFirstStepIsBoundedByTheStep) {
  gen::Source src(40);
  for (int trial = 0; trial < 50; ++trial) {
    const mo::QuadraticProblem p(src.positive_vector(3));
    const Vector x0 = src.normal_vector(3, 2.0);
    mo::BaselineConfig cfg{mo::BaselineKind::kAdam, src.uniform(1e-3, 1.0)};
    const mo::Trace tr = mo::run_baseline(cfg, p, nullptr, x0, with_states(1));
    const Vector dx = tr.states.x[1] - x0;
    EXPECT_LE(dx.cwiseAbs().maxCoeff(), cfg.step * (1.0 + 1e-12));
  }
}

TEST(Baselines, NesterovBeatsGdAtTunedSteps) {
  Vector a(50);
  for (Index i = 0; i < 50; ++i) a[i] = std::pow(10.0, -2.0 + 2.0 * i / 49.0);
  const mo::QuadraticProblem p(a);
  const Vector x0 = Vector::Ones(50);
  const auto grid = mo::step_grid(1e-3, 1.0);
  mo::RunOptions run;
  run.iterations = 100;
  double best[2];
  int i = 0;
  for (auto kind : {mo::BaselineKind::kGd, mo::BaselineKind::kNesterov}) {
    const auto tuned = mo::grid_search_baseline({kind, 0.0}, p, nullptr, x0, grid);
    best[i++] = mo::run_baseline(tuned.best, p, nullptr, x0, run).final_value();
  }
  EXPECT_LT(best[1], best[0]);
}

TEST(Baselines, Names) {
  for (auto k : {mo::BaselineKind::kGd, mo::BaselineKind::kNesterov, mo::BaselineKind::kAdam, mo::BaselineKind::kSgd}) {
    EXPECT_EQ(mo::baseline_kind_from_string(mo::to_string(k)), k);
  }
  EXPECT_THROW(mo::baseline_kind_from_string("rmsprop"), mo::ConfigError);
}

TEST(Asmd, Coefficients) {
  EXPECT_DOUBLE_EQ(mo::asmd_coefficients(0).a_k, 0.5);
  EXPECT_DOUBLE_EQ(mo::asmd_coefficients(1).a_k, 1.0);
  EXPECT_DOUBLE_EQ(mo::asmd_coefficients(2).a_k, 3.0);
  EXPECT_DOUBLE_EQ(mo::asmd_coefficients(0).tau, 1.0);
  EXPECT_DOUBLE_EQ(mo::asmd_coefficients(1).s, std::pow(2.0, 1.5));
  EXPECT_THROW(mo::asmd_coefficients(-1), mo::ConfigError);
}

TEST(Lamd, FirstCouplingReturnsTheStart) {
  gen::Source src(41);
  for (auto kind : gen::kAllKinds) {
    const auto map = src.map(kind, 4);
    const mo::QuadraticProblem p(src.positive_vector(4));
    const Vector x0 = src.normal_vector(4, 0.3);
    const auto tr = mo::run_lamd(map, p, nullptr, mo::StepSchedule::constant(0.1), x0, {}, with_states(2));
    // lambda_0 = 1 and z is untouched at k = 0.
    EXPECT_LE((tr.states.x[1] - x0).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((tr.states.dual[1] - tr.states.dual[0]).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Lamd, ParameterChecks) {
  const mo::QuadraticProblem p(vec({1.0}));
  const auto e = mo::MirrorMap::euclidean(1);
  const auto s = mo::StepSchedule::constant(0.1);
  EXPECT_THROW(mo::run_lamd(e, p, nullptr, s, vec({1.0}), {2.0, 1.0}, {}), mo::ConfigError);
  EXPECT_THROW(mo::run_lamd(e, p, nullptr, s, vec({1.0}), {3.0, 0.0}, {}), mo::ConfigError);
  EXPECT_THROW(mo::run_lamd(mo::MirrorMap::euclidean(2), p, nullptr, s, vec({1.0}), {}, {}), mo::DimensionError);
}

TEST(Runs, ZeroIterationsRecordOnlyTheStart) {
  const mo::QuadraticProblem p(vec({1.0, 2.0}));
  const auto e = mo::MirrorMap::euclidean(2);
  const auto s = mo::StepSchedule::constant(0.1);
  const Vector x0 = vec({1.0, 1.0});
  mo::RunOptions o;
  o.iterations = 0;
  for (const mo::Trace& tr : {mo::run_md(e, p, nullptr, s, x0, mo::MdForm::kPrimal, o),
                              mo::run_lamd(e, p, nullptr, s, x0, {}, o), mo::run_lsmd(e, p, nullptr, s, x0, o).trace,
                              mo::run_lasmd(e, p, nullptr, s, x0, o), mo::run_baseline({}, p, nullptr, x0, o)}) {
    ASSERT_EQ(tr.rows.size(), 1u);
    EXPECT_EQ(tr.rows[0].k, 0);
    EXPECT_DOUBLE_EQ(tr.rows[0].f, 1.5);
  }
}

TEST(Runs, DivergenceIsDetected) {
  const mo::QuadraticProblem p(vec({1.0}));
  mo::RunOptions o;
  o.iterations = 1000;
  const mo::Trace tr = mo::run_baseline({mo::BaselineKind::kGd, 3.0}, p, nullptr, vec({1.0}), o);
  ASSERT_TRUE(tr.diverged());
  // f_k = 4^k f_0, so the 1e6 threshold is crossed at k = 10.
  EXPECT_EQ(*tr.diverged_at, 10);
  EXPECT_LT(tr.rows.size(), 20u);
}

TEST(Runs, RecordEveryKeepsTheLastIterate) {
  const mo::QuadraticProblem p(vec({1.0}));
  mo::RunOptions o;
  o.iterations = 25;
  o.record_every = 10;
  const mo::Trace tr = mo::run_baseline({}, p, nullptr, vec({1.0}), o);
  std::vector<long> ks;
  for (const auto& r : tr.rows) ks.push_back(r.k);
  EXPECT_EQ(ks, (std::vector<long>{0, 10, 20, 25}));
}

TEST(Runs, TraceCsvRoundTrip) {
  gen::Source src(42);
  const mo::QuadraticProblem p(src.positive_vector(3));
  const auto map = src.map(mo::MapKind::kSplineElementwise, 3);
  mo::RunOptions o;
  o.iterations = 30;
  const mo::Trace tr = mo::run_md(map, p, nullptr, mo::StepSchedule::constant(0.05), src.normal_vector(3),
                                  mo::MdForm::kDual, o);
  std::stringstream ss;
  tr.write_csv(ss);
  const mo::Trace back = mo::Trace::read_csv(ss);
  ASSERT_EQ(back.rows.size(), tr.rows.size());
  for (std::size_t i = 0; i < tr.rows.size(); ++i) {
    EXPECT_EQ(back.rows[i].k, tr.rows[i].k);
    EXPECT_EQ(back.rows[i].t, tr.rows[i].t);
    EXPECT_EQ(back.rows[i].f, tr.rows[i].f);
    EXPECT_EQ(back.rows[i].grad_norm, tr.rows[i].grad_norm);
    EXPECT_EQ(back.rows[i].consistency_error, tr.rows[i].consistency_error);
  }
}

TEST(Runs, StochasticRunsAreDeterministic) {
  auto p = std::make_shared<mo::QuadraticProblem>(vec({1.0, 2.0}));
  const auto o1 = mo::StochasticOracle::gaussian(p, 0.1, 7);
  const auto map = mo::MirrorMap::diagonal(vec({1.0, 3.0}));
  const auto s = mo::StepSchedule::constant(0.1);
  mo::RunOptions o;
  o.iterations = 50;
  EXPECT_EQ(mo::run_lasmd(map, *p, &o1, s, vec({1.0, 1.0}), o).values(),
            mo::run_lasmd(map, *p, &o1, s, vec({1.0, 1.0}), o).values());
  const auto o2 = mo::StochasticOracle::gaussian(p, 0.1, 8);
  EXPECT_NE(mo::run_lasmd(map, *p, &o1, s, vec({1.0, 1.0}), o).values(),
            mo::run_lasmd(map, *p, &o2, s, vec({1.0, 1.0}), o).values());
}

// Property: for every map kind the primal and dual forms agree over 200 steps.
TEST(MdProperty, PrimalAndDualFormsAgree) {
  gen::Source src(43);
  for (int trial = 0; trial < 12; ++trial) {
    const auto kind = gen::kAllKinds[trial % 3];
    const Index n = src.index(1, 6);
    const auto map = src.map(kind, n);
    const Vector a = src.uniform_vector(n, 0.1, 1.0);
    const mo::QuadraticProblem p(a, src.normal_vector(n, 0.3));
    const Vector x0 = src.normal_vector(n, 0.5);
    // Keep t below alpha / L so both forms stay in the contracting regime.
    const auto s = mo::StepSchedule::constant(0.5 * map.alpha() / a.maxCoeff());
    const auto primal = mo::run_md(map, p, nullptr, s, x0, mo::MdForm::kPrimal, with_states(200));
    const auto dual = mo::run_md(map, p, nullptr, s, x0, mo::MdForm::kDual, with_states(200));
    for (std::size_t k = 0; k < primal.states.x.size(); ++k) {
      ASSERT_LE((primal.states.x[k] - dual.states.x[k]).cwiseAbs().maxCoeff(), 1e-9)
          << mo::to_string(kind) << " k=" << k;
    }
  }
}

// Property: with sigma = 0 the LSMD iterates coincide with dual MD.
TEST(MdProperty, ExactLsmdIsDualMd) {
  gen::Source src(44);
  for (auto kind : gen::kAllKinds) {
    const auto map = src.map(kind, 5);
    auto p = std::make_shared<mo::QuadraticProblem>(src.uniform_vector(5, 0.1, 1.0));
    const auto oracle = mo::StochasticOracle::gaussian(p, 0.0, 1);
    const Vector x0 = src.normal_vector(5, 0.5);
    const auto s = mo::StepSchedule::constant(0.2 * map.alpha());
    const auto md = mo::run_md(map, *p, nullptr, s, x0, mo::MdForm::kDual, with_states(100));
    const auto ls = mo::run_lsmd(map, *p, &oracle, s, x0, with_states(100));
    ASSERT_EQ(md.states.x.size(), ls.trace.states.x.size());
    for (std::size_t k = 0; k < md.states.x.size(); ++k) EXPECT_EQ(md.states.x[k], ls.trace.states.x[k]);
  }
}

// Property: the LSMD ergodic trace is the step-weighted average of the iterates.
TEST(MdProperty, ErgodicAverageOracle) {
  gen::Source src(45);
  const auto map = src.map(mo::MapKind::kDiagonalQuadratic, 3);
  const mo::QuadraticProblem p(src.uniform_vector(3, 0.2, 1.0));
  const Vector x0 = src.normal_vector(3);
  const mo::StepSchedule s({0.3, 0.2, 0.1}, mo::ExtensionRule::kReciprocal);
  const auto out = mo::run_lsmd(map, p, nullptr, s, x0, with_states(20));
  Vector acc = Vector::Zero(3);
  double w = 0.0;
  for (long k = 0; k <= 20; ++k) {
    acc += s.step(k) * out.trace.states.x[static_cast<std::size_t>(k)];
    w += s.step(k);
    EXPECT_NEAR(out.ergodic.rows[static_cast<std::size_t>(k)].f, p.objective(acc / w), 1e-12);
  }
}
