#pragma once

#include <string_view>

#include "mirror_opt/mirror_map.hpp"
#include "mirror_opt/oracle.hpp"
#include "mirror_opt/problems.hpp"
#include "mirror_opt/schedule.hpp"
#include "mirror_opt/trace.hpp"

namespace mirror_opt {

struct RunOptions {
  long iterations = 100;
  /// Rows are written for k = 0, record_every, 2 record_every, ... and the last iterate.
  long record_every = 1;
  bool record_grad_norm = true;
  bool record_consistency = true;
  bool record_states = false;
  bool record_wall_time = false;
  /// Stop once f exceeds this multiple of |f(x0)|.
  double divergence_factor = 1e6;
  std::uint64_t seed = 0;
};

struct LamdParams {
  double r = 3.0;
  double gamma = 1.0;
};

enum class MdForm { kPrimal, kDual };

/// inverse(forward(x) - t grad).
PrimalVector md_step_primal(const MirrorMap& map, const PrimalVector& x, const DualVector& grad, double t);
/// y - t grad, where grad was evaluated at inverse(y).
DualVector md_step_dual(const MirrorMap& map, const DualVector& y, double t, const DualVector& grad_at_inverse);

/// Mirror descent. With an oracle the updates use G(x_k, xi_k); the trace always records the
/// exact objective. The dual form keeps y_k and evaluates the gradient at inverse(y_k).
Trace run_md(const MirrorMap& map, const Problem& problem, const StochasticOracle* oracle, const StepSchedule& schedule,
             const PrimalVector& x0, MdForm form, const RunOptions& options);

/// Learned accelerated mirror descent; the minibatched variant is obtained by passing a
/// minibatch oracle.
Trace run_lamd(const MirrorMap& map, const Problem& problem, const StochasticOracle* oracle,
               const StepSchedule& schedule, const PrimalVector& x0, const LamdParams& params,
               const RunOptions& options);

struct LsmdResult {
  Trace trace;
  /// Objective at the step-size weighted average of x^(0..k).
  Trace ergodic;
};

/// Learned stochastic mirror descent in dual form.
LsmdResult run_lsmd(const MirrorMap& map, const Problem& problem, const StochasticOracle* oracle,
                    const StepSchedule& schedule, const PrimalVector& x0, const RunOptions& options);

/// Coefficients of accelerated stochastic MD at iteration k.
struct AsmdCoefficients {
  double a_k;
  double a_next;
  double tau;
  double s;
};
AsmdCoefficients asmd_coefficients(long k);

/// Learned accelerated stochastic mirror descent.
Trace run_lasmd(const MirrorMap& map, const Problem& problem, const StochasticOracle* oracle,
                const StepSchedule& schedule, const PrimalVector& x0, const RunOptions& options);

enum class BaselineKind { kGd, kNesterov, kAdam, kSgd };

std::string_view to_string(BaselineKind kind);
BaselineKind baseline_kind_from_string(std::string_view name);

struct BaselineConfig {
  BaselineKind kind = BaselineKind::kGd;
  double step = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// GD, Nesterov (momentum k/(k+3)), Adam or SGD. SGD is the GD update; every kind uses the
/// oracle when one is given.
Trace run_baseline(const BaselineConfig& config, const Problem& problem, const StochasticOracle* oracle,
                   const PrimalVector& x0, const RunOptions& options);

}  // namespace mirror_opt
