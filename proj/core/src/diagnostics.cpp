#include "mirror_opt/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>

#include "mirror_opt/error.hpp"

namespace mirror_opt {

namespace {

constexpr double kGapFloor = 1e-15;

void require_states(const Trace& trace, bool need_tilde, const char* what) {
  if (trace.states.x.empty() || trace.states.dual.size() != trace.states.x.size() ||
      (need_tilde && trace.states.x_tilde.size() != trace.states.x.size())) {
    throw ConfigError(fmt::format("{}: trace was run without record_states", what));
  }
}

double f_at(const Trace& trace, long k) {
  for (const TraceRow& row : trace.rows) {
    if (row.k == k) return row.f;
  }
  return std::numeric_limits<double>::infinity();
}

}  // namespace

std::vector<EnergyRecord> amd_energy(const MirrorMap& map, const Problem& problem, const Trace& trace,
                                     const StepSchedule& schedule, const Vector& x_star, double f_star, double r) {
  require_states(trace, true, "amd_energy");
  if (!(r > 0.0)) throw ConfigError("amd_energy: r must be > 0");
  std::vector<EnergyRecord> out;
  out.reserve(trace.states.x.size());
  for (std::size_t i = 0; i < trace.states.x.size(); ++i) {
    const auto k = static_cast<long>(i);
    EnergyRecord e;
    e.k = k;
    const double t_prev = k == 0 ? 0.0 : schedule.step(k - 1);
    const double kd = static_cast<double>(k);
    if (k > 0) e.objective_term = kd * kd * t_prev / r * (problem.objective(trace.states.x_tilde[i]) - f_star);
    e.bregman_term = r * map.bregman(x_star, map.inverse(trace.states.dual[i]));
    e.energy = e.objective_term + e.bregman_term;
    out.push_back(e);
  }
  return out;
}

std::vector<EnergyRecord> asmd_energy(const MirrorMap& map, const Problem& problem, const Trace& trace,
                                      const Vector& x_star, double f_star) {
  require_states(trace, false, "asmd_energy");
  std::vector<EnergyRecord> out;
  out.reserve(trace.states.x.size());
  for (std::size_t i = 0; i < trace.states.x.size(); ++i) {
    const auto k = static_cast<long>(i);
    const AsmdCoefficients c = asmd_coefficients(k);
    EnergyRecord e;
    e.k = k;
    e.objective_term = c.a_k * (problem.objective(trace.states.x[i]) - f_star);
    e.bregman_term = c.s * map.bregman(x_star, map.inverse(trace.states.dual[i]));
    e.energy = e.objective_term + e.bregman_term;
    out.push_back(e);
  }
  return out;
}

void write_energy_csv(std::ostream& out, std::span<const EnergyRecord> records) {
  out << "k,E,obj_term,bregman_term\n";
  for (const EnergyRecord& e : records) {
    out << e.k << ',' << format_real(e.energy) << ',' << format_real(e.objective_term) << ','
        << format_real(e.bregman_term) << '\n';
  }
}

double smd_bound_rhs(double alpha, const StepSchedule& schedule, double sigma, double b0, long k, double c) {
  if (k < 1) throw ConfigError("smd_bound_rhs: k must be >= 1");
  if (!(alpha > 0.0)) throw ConfigError("smd_bound_rhs: alpha must be > 0");
  double sum_t = 0.0;
  double sum_t2 = 0.0;
  for (long i = 0; i <= k; ++i) {
    const double t = schedule.step(i);
    sum_t += t;
    sum_t2 += t * t;
  }
  return (b0 + sigma * sigma / (2.0 * alpha) * sum_t2) / sum_t + c;
}

void write_bound_csv(std::ostream& out, std::span<const BoundCheckRow> rows) {
  out << "k,measured,bound_rhs,pass\n";
  for (const BoundCheckRow& r : rows) {
    out << r.k << ',' << format_real(r.measured) << ',' << format_real(r.bound_rhs) << ',' << (r.pass ? 1 : 0)
        << '\n';
  }
}

double fit_rate(std::span<const long> ks, std::span<const double> values, double f_star) {
  if (ks.size() != values.size()) throw DimensionError("fit_rate: ks and values differ in length");
  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] <= 0) continue;
    if (!std::isfinite(values[i])) throw NonFiniteError("fit_rate: non-finite objective in window");
    lx.push_back(std::log10(static_cast<double>(ks[i])));
    ly.push_back(std::log10(std::max(values[i] - f_star, kGapFloor)));
  }
  if (lx.size() < 10) throw ConfigError(fmt::format("fit_rate: window has {} points, need >= 10", lx.size()));
  const auto n = static_cast<double>(lx.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  if (!(sxx > 0.0)) throw ConfigError("fit_rate: window needs at least two distinct k");
  return sxy / sxx;
}

double fit_rate(const Trace& trace, double f_star, long k_lo, long k_hi) {
  std::vector<long> ks;
  std::vector<double> vs;
  for (const TraceRow& row : trace.rows) {
    if (row.k >= k_lo && row.k <= k_hi) {
      ks.push_back(row.k);
      vs.push_back(row.f);
    }
  }
  return fit_rate(ks, vs, f_star);
}

ReferenceMinimum reference_minimum(const Problem& problem, const Vector& x0, const ReferenceBudget& budget) {
  ReferenceMinimum out;
  if (auto f = problem.minimum_value()) {
    out.f_star = *f;
    if (auto x = problem.minimizer()) out.x_star = std::move(*x);
    out.closed_form = true;
    return out;
  }
  if (!(budget.factor > 0.0)) throw ConfigError("reference_minimum: budget factor must be > 0");
  if (x0.size() != problem.dim()) throw DimensionError("reference_minimum: start has the wrong dimension");
  const double f0 = problem.objective(x0);
  const double limit = 1e6 * (f0 != 0.0 ? std::abs(f0) : 1.0);
  Vector x = x0;
  auto run = [&](long steps, double t) {
    const auto n = static_cast<long>(std::llround(static_cast<double>(steps) * budget.factor));
    for (long i = 0; i < n; ++i) {
      x -= t * problem.gradient(x);
      if (!x.allFinite()) throw DivergenceError("reference_minimum: iterate is not finite");
    }
    const double f = problem.objective(x);
    if (!std::isfinite(f) || f > limit) throw DivergenceError("reference_minimum: gradient descent diverged");
  };
  run(budget.first_steps, budget.first_step);
  run(budget.second_steps, budget.second_step);
  out.f_star = problem.objective(x);
  out.x_star = std::move(x);
  return out;
}

std::vector<double> step_grid(double lo, double hi) {
  if (!(lo > 0.0) || !(hi >= lo)) throw ConfigError(fmt::format("step grid: invalid range [{}, {}]", lo, hi));
  std::vector<double> grid;
  const int e_lo = static_cast<int>(std::floor(std::log10(lo))) - 1;
  const int e_hi = static_cast<int>(std::ceil(std::log10(hi))) + 1;
  for (int e = e_lo; e <= e_hi; ++e) {
    for (double m : {1.0, 2.0, 5.0}) {
      // Parse from text so 2e-4 is the same double a user would type.
      const double v = std::stod(fmt::format("{}e{}", m, e));
      if (v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12)) grid.push_back(v);
    }
  }
  return grid;
}

std::vector<double> default_grid(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kGd:
    case BaselineKind::kSgd:
      return step_grid(2e-4, 1e-1);
    case BaselineKind::kAdam:
      return step_grid(1e-3, 1e-1);
    case BaselineKind::kNesterov:
      return step_grid(1e-4, 5e-3);
  }
  throw ConfigError("default_grid: unknown baseline");
}

GridSearchResult grid_search_baseline(const BaselineConfig& config, const Problem& problem,
                                      const StochasticOracle* oracle, const Vector& x0, std::span<const double> grid,
                                      const GridSearchOptions& options) {
  if (grid.empty()) throw ConfigError("grid search: grid is empty");
  if (options.eval_iteration < 1 || options.late_factor < 1) throw ConfigError("grid search: bad horizon");
  RunOptions run;
  run.iterations = options.eval_iteration * options.late_factor;
  run.record_grad_norm = false;
  run.record_consistency = false;
  GridSearchResult result;
  result.best = config;
  const double inf = std::numeric_limits<double>::infinity();
  for (double step : grid) {
    BaselineConfig c = config;
    c.step = step;
    const Trace trace = run_baseline(c, problem, oracle, x0, run);
    GridPoint p;
    p.step = step;
    p.f_eval = f_at(trace, options.eval_iteration);
    p.f_late = f_at(trace, run.iterations);
    p.diverged = !std::isfinite(p.f_eval) || (trace.diverged() && *trace.diverged_at <= options.eval_iteration);
    if (p.diverged) p.f_eval = inf;
    if (!std::isfinite(p.f_late)) p.f_late = inf;
    result.table.push_back(p);
  }
  const GridPoint* best = nullptr;
  for (const GridPoint& p : result.table) {
    if (p.diverged) continue;
    if (best == nullptr) {
      best = &p;
      continue;
    }
    const double scale = std::max({std::abs(p.f_eval), std::abs(best->f_eval), 1e-300});
    const bool tied = std::abs(p.f_eval - best->f_eval) <= options.tie_tolerance * scale;
    if (tied ? p.f_late < best->f_late : p.f_eval < best->f_eval) best = &p;
  }
  if (best == nullptr) throw DivergenceError("grid search: every grid point diverged");
  result.best.step = best->step;
  return result;
}

void write_grid_csv(std::ostream& out, const GridSearchResult& result) {
  out << "step,f_eval,f_late,diverged,selected\n";
  for (const GridPoint& p : result.table) {
    out << format_real(p.step) << ',' << format_real(p.f_eval) << ',' << format_real(p.f_late) << ','
        << (p.diverged ? 1 : 0) << ',' << (p.step == result.best.step ? 1 : 0) << '\n';
  }
}

bool lamd_steps_admissible(const MirrorMap& map, double smoothness, double gamma, const StepSchedule& schedule,
                           long horizon) {
  if (!(smoothness > 0.0)) throw ConfigError("admissibility: smoothness must be > 0");
  if (!(gamma * map.alpha() >= 1.0)) return false;
  const double t_max = 1.0 / (smoothness * gamma);
  double prev = std::numeric_limits<double>::infinity();
  for (long k = 0; k < horizon; ++k) {
    const double t = schedule.step(k);
    if (!(t > 0.0) || t > t_max || t > prev) return false;
    prev = t;
  }
  return true;
}

}  // namespace mirror_opt
