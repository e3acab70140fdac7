#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "mirror_opt/mirror_map.hpp"
#include "mirror_opt/optimizers.hpp"
#include "mirror_opt/problems.hpp"
#include "mirror_opt/schedule.hpp"
#include "mirror_opt/trace.hpp"

namespace mirror_opt {

struct EnergyRecord {
  long k = 0;
  double energy = 0.0;
  double objective_term = 0.0;
  double bregman_term = 0.0;
};

/// E~(k) = (k^2 t_{k-1} / r)(f(x~(k)) - f*) + r B_psi(x*, grad psi*(z(k))), with t_{-1} = 0.
///
/// Needs a LAMD trace run with record_states; t_k is read from the schedule the run used.
std::vector<EnergyRecord> amd_energy(const MirrorMap& map, const Problem& problem, const Trace& trace,
                                     const StepSchedule& schedule, const Vector& x_star, double f_star, double r);

/// A_k (f(x(k)) - f*) + s_k B_psi(x*, grad psi*(y(k))) with the coefficients of run_lasmd.
std::vector<EnergyRecord> asmd_energy(const MirrorMap& map, const Problem& problem, const Trace& trace,
                                      const Vector& x_star, double f_star);

void write_energy_csv(std::ostream& out, std::span<const EnergyRecord> records);

/// Right-hand side of the ergodic SMD bound at iteration k:
/// (B0 + sigma^2/(2 alpha) sum_{i<=k} t_i^2) / sum_{i<=k} t_i + C, where sigma^2 bounds
/// E||G||^2 and t_i is schedule.step(i).
double smd_bound_rhs(double alpha, const StepSchedule& schedule, double sigma, double b0, long k, double c = 0.0);

struct BoundCheckRow {
  long k = 0;
  double measured = 0.0;
  double bound_rhs = 0.0;
  bool pass = false;
};

void write_bound_csv(std::ostream& out, std::span<const BoundCheckRow> rows);

/// Least-squares slope of log10(f - f*) against log10(k) over rows with k in [k_lo, k_hi].
/// Gaps are clamped below at 1e-15; rows with k = 0 are skipped.
double fit_rate(const Trace& trace, double f_star, long k_lo, long k_hi);
double fit_rate(std::span<const long> ks, std::span<const double> values, double f_star);

/// GD schedule used when no closed form exists: 15000 steps at 5e-4 then 5000 at 1e-4,
/// each count multiplied by the budget factor.
struct ReferenceBudget {
  double factor = 1.0;
  long first_steps = 15000;
  double first_step = 5e-4;
  long second_steps = 5000;
  double second_step = 1e-4;
};

struct ReferenceMinimum {
  double f_star = 0.0;
  Vector x_star;
  bool closed_form = false;
};

/// Closed form when the problem has one, otherwise the GD recipe started from x0.
/// Throws DivergenceError when the recipe blows up.
ReferenceMinimum reference_minimum(const Problem& problem, const Vector& x0, const ReferenceBudget& budget = {});

/// {1, 2, 5} x 10^k values inside [lo, hi], ascending.
std::vector<double> step_grid(double lo, double hi);
/// Default endpoints per baseline: GD/SGD [2e-4, 1e-1], Adam [1e-3, 1e-1], Nesterov [1e-4, 5e-3].
std::vector<double> default_grid(BaselineKind kind);

struct GridPoint {
  double step = 0.0;
  double f_eval = 0.0;
  double f_late = 0.0;
  bool diverged = false;
};

struct GridSearchResult {
  BaselineConfig best;
  std::vector<GridPoint> table;
};

struct GridSearchOptions {
  long eval_iteration = 100;
  /// Runs whose f at eval_iteration agree to this relative tolerance count as tied; the tie
  /// goes to the smaller f at late_factor * eval_iteration.
  double tie_tolerance = 1e-6;
  long late_factor = 5;
};

/// Picks the step minimizing f at the evaluation iteration. Throws DivergenceError if every
/// grid point diverges.
GridSearchResult grid_search_baseline(const BaselineConfig& config, const Problem& problem,
                                      const StochasticOracle* oracle, const Vector& x0, std::span<const double> grid,
                                      const GridSearchOptions& options = {});

void write_grid_csv(std::ostream& out, const GridSearchResult& result);

/// Step conditions under which the LAMD energy cannot increase with an exact map and the
/// Euclidean x~ step: gamma >= 1/alpha, t_k <= 1/(L_f gamma) and t_k non-increasing for
/// k < horizon.
bool lamd_steps_admissible(const MirrorMap& map, double smoothness, double gamma, const StepSchedule& schedule,
                           long horizon);

}  // namespace mirror_opt
