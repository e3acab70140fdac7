#include "mirror_opt/optimizers.hpp"

#include <chrono>
#include <cmath>

#include <fmt/format.h>

#include "mirror_opt/error.hpp"

namespace mirror_opt {

namespace {

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw NonFiniteError(fmt::format("{}: non-finite entry", what));
}

void check_options(const RunOptions& o) {
  if (o.iterations < 0) throw ConfigError("run: iteration count must be >= 0");
  if (o.record_every < 1) throw ConfigError("run: record_every must be >= 1");
  if (!(o.divergence_factor > 0.0)) throw ConfigError("run: divergence factor must be positive");
}

void check_start(const Problem& problem, const MirrorMap* map, const Vector& x0) {
  if (x0.size() != problem.dim()) {
    throw DimensionError(fmt::format("run: x0 has dimension {}, problem {}", x0.size(), problem.dim()));
  }
  if (map != nullptr && map->dimension() != problem.dim()) {
    throw DimensionError(fmt::format("run: map dimension {} != problem dimension {}", map->dimension(), problem.dim()));
  }
  require_finite(x0, "run: x0");
}

// Gradient used by the update at draw index `draw`.
Vector update_gradient(const Problem& problem, const StochasticOracle* oracle, const Vector& x, std::uint64_t draw) {
  return oracle != nullptr ? oracle->gradient(x, draw) : problem.gradient(x);
}

// Writes trace rows and applies the divergence detector.
class Recorder {
 public:
  Recorder(std::string algorithm, const MirrorMap* map, const Problem& problem, const RunOptions& options,
           Trace& trace)
      : map_(map), problem_(problem), options_(options), trace_(trace), start_(std::chrono::steady_clock::now()) {
    trace_.meta.algorithm = std::move(algorithm);
    trace_.meta.map_kind = map != nullptr ? std::string(to_string(map->kind())) : "none";
    trace_.meta.problem_kind = std::string(to_string(problem.kind()));
    trace_.meta.seed = options.seed;
  }

  bool due(long k) const { return k % options_.record_every == 0 || k == options_.iterations; }

  /// Returns false when the run has to stop.
  bool record(long k, double t, const Vector& x) {
    if (!due(k)) return true;
    TraceRow row;
    row.k = k;
    row.t = t;
    row.f = problem_.objective(x);
    if (options_.record_grad_norm) row.grad_norm = problem_.gradient(x).norm();
    if (options_.record_consistency && map_ != nullptr) row.consistency_error = map_->consistency_error(x);
    if (options_.record_wall_time) {
      row.wall_ns =
          std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start_).count();
    }
    if (trace_.rows.empty()) threshold_ = options_.divergence_factor * (row.f != 0.0 ? std::abs(row.f) : 1.0);
    trace_.rows.push_back(row);
    if (!std::isfinite(row.f) || row.f > threshold_) {
      trace_.diverged_at = k;
      return false;
    }
    return true;
  }

  bool keep_states() const { return options_.record_states; }

 private:
  const MirrorMap* map_;
  const Problem& problem_;
  const RunOptions& options_;
  Trace& trace_;
  std::chrono::steady_clock::time_point start_;
  double threshold_ = 0.0;
};

bool finite_or_flag(const Vector& v, long k, Trace& trace) {
  if (v.allFinite()) return true;
  trace.diverged_at = k;
  return false;
}

}  // namespace

PrimalVector md_step_primal(const MirrorMap& map, const PrimalVector& x, const DualVector& grad, double t) {
  if (!(t >= 0.0)) throw ConfigError("md step: step size must be >= 0");
  require_finite(grad, "md step: gradient");
  return map.inverse(map.forward(x) - t * grad);
}

DualVector md_step_dual(const MirrorMap& map, const DualVector& y, double t, const DualVector& grad_at_inverse) {
  if (!(t >= 0.0)) throw ConfigError("md step: step size must be >= 0");
  if (y.size() != map.dimension() || grad_at_inverse.size() != map.dimension()) {
    throw DimensionError("md step: dimension mismatch");
  }
  require_finite(y, "md step: dual iterate");
  require_finite(grad_at_inverse, "md step: gradient");
  return y - t * grad_at_inverse;
}

Trace run_md(const MirrorMap& map, const Problem& problem, const StochasticOracle* oracle,
             const StepSchedule& schedule, const PrimalVector& x0, MdForm form, const RunOptions& options) {
  check_options(options);
  check_start(problem, &map, x0);
  Trace trace;
  Recorder rec(form == MdForm::kPrimal ? "md_primal" : "md_dual", &map, problem, options, trace);
  Vector x = x0;
  Vector y = map.forward(x0);
  for (long k = 0;; ++k) {
    const double t = schedule.step(k);
    if (rec.keep_states()) {
      trace.states.x.push_back(x);
      trace.states.dual.push_back(y);
    }
    if (!rec.record(k, t, x) || k == options.iterations) break;
    const Vector g = update_gradient(problem, oracle, x, static_cast<std::uint64_t>(k));
    if (!finite_or_flag(g, k, trace)) break;
    if (form == MdForm::kPrimal) {
      x = md_step_primal(map, x, g, t);
      y = map.forward(x);
    } else {
      y = md_step_dual(map, y, t, g);
      x = map.inverse(y);
    }
  }
  return trace;
}

Trace run_lamd(const MirrorMap& map, const Problem& problem, const StochasticOracle* oracle,
               const StepSchedule& schedule, const PrimalVector& x0, const LamdParams& params,
               const RunOptions& options) {
  check_options(options);
  check_start(problem, &map, x0);
  if (!(params.r >= 3.0)) throw ConfigError("lamd: r must be >= 3");
  if (!(params.gamma > 0.0)) throw ConfigError("lamd: gamma must be > 0");
  Trace trace;
  Recorder rec(oracle != nullptr ? "lamd_stochastic" : "lamd", &map, problem, options, trace);
  Vector x = x0;
  Vector x_tilde = x0;
  Vector z = map.forward(x0);
  for (long k = 0;; ++k) {
    const double t = schedule.step(k);
    if (rec.keep_states()) {
      trace.states.x.push_back(x);
      trace.states.x_tilde.push_back(x_tilde);
      trace.states.dual.push_back(z);
    }
    if (!rec.record(k, t, x) || k == options.iterations) break;
    const double lambda = params.r / (params.r + static_cast<double>(k));
    x = lambda * map.inverse(z) + (1.0 - lambda) * x_tilde;
    const Vector g = update_gradient(problem, oracle, x, static_cast<std::uint64_t>(k));
    if (!finite_or_flag(g, k + 1, trace)) break;
    z -= (static_cast<double>(k) * t / params.r) * g;
    x_tilde = x - params.gamma * t * g;
  }
  return trace;
}

LsmdResult run_lsmd(const MirrorMap& map, const Problem& problem, const StochasticOracle* oracle,
                    const StepSchedule& schedule, const PrimalVector& x0, const RunOptions& options) {
  check_options(options);
  check_start(problem, &map, x0);
  LsmdResult out;
  Recorder rec(oracle != nullptr ? "lsmd" : "lsmd_exact", &map, problem, options, out.trace);
  RunOptions ergodic_options = options;
  ergodic_options.record_states = false;
  Recorder erg(out.trace.meta.algorithm + "_ergodic", &map, problem, ergodic_options, out.ergodic);
  Vector y = map.forward(x0);
  Vector x = x0;
  Vector weighted = Vector::Zero(x0.size());
  double weight = 0.0;
  bool ergodic_live = true;
  for (long k = 0;; ++k) {
    const double t = schedule.step(k);
    if (rec.keep_states()) {
      out.trace.states.x.push_back(x);
      out.trace.states.dual.push_back(y);
    }
    weighted += t * x;
    weight += t;
    if (ergodic_live) ergodic_live = erg.record(k, t, weighted / weight);
    if (!rec.record(k, t, x) || k == options.iterations) break;
    const Vector g = update_gradient(problem, oracle, x, static_cast<std::uint64_t>(k));
    if (!finite_or_flag(g, k, out.trace)) break;
    y = md_step_dual(map, y, t, g);
    x = map.inverse(y);
  }
  return out;
}

AsmdCoefficients asmd_coefficients(long k) {
  if (k < 0) throw ConfigError("asmd: iteration must be >= 0");
  const auto kd = static_cast<double>(k);
  AsmdCoefficients c{};
  c.a_k = k == 0 ? 0.5 : kd * (kd + 1.0) / 2.0;
  c.a_next = (kd + 1.0) * (kd + 2.0) / 2.0;
  c.tau = (c.a_next - c.a_k) / c.a_k;
  c.s = std::pow(kd + 1.0, 1.5);
  return c;
}

Trace run_lasmd(const MirrorMap& map, const Problem& problem, const StochasticOracle* oracle,
                const StepSchedule& schedule, const PrimalVector& x0, const RunOptions& options) {
  check_options(options);
  check_start(problem, &map, x0);
  Trace trace;
  Recorder rec(oracle != nullptr ? "lasmd" : "lasmd_exact", &map, problem, options, trace);
  Vector x = x0;
  Vector y = map.forward(x0);
  for (long k = 0;; ++k) {
    const double t = schedule.step(k);
    if (rec.keep_states()) {
      trace.states.x.push_back(x);
      trace.states.dual.push_back(y);
    }
    if (!rec.record(k, t, x) || k == options.iterations) break;
    const AsmdCoefficients c = asmd_coefficients(k);
    x = (c.tau / (c.tau + 1.0)) * map.inverse(y) + (1.0 / (c.tau + 1.0)) * x;
    const Vector g = update_gradient(problem, oracle, x, static_cast<std::uint64_t>(k + 1));
    if (!finite_or_flag(g, k + 1, trace)) break;
    y -= (t * (c.a_next - c.a_k) / c.s) * g;
  }
  return trace;
}

std::string_view to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kGd:
      return "gd";
    case BaselineKind::kNesterov:
      return "nesterov";
    case BaselineKind::kAdam:
      return "adam";
    case BaselineKind::kSgd:
      return "sgd";
  }
  return "unknown";
}

BaselineKind baseline_kind_from_string(std::string_view name) {
  for (BaselineKind k : {BaselineKind::kGd, BaselineKind::kNesterov, BaselineKind::kAdam, BaselineKind::kSgd}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError(fmt::format("unknown baseline '{}'", name));
}

Trace run_baseline(const BaselineConfig& config, const Problem& problem, const StochasticOracle* oracle,
                   const PrimalVector& x0, const RunOptions& options) {
  check_options(options);
  check_start(problem, nullptr, x0);
  if (!(config.step > 0.0)) throw ConfigError("baseline: step must be > 0");
  Trace trace;
  Recorder rec(std::string(to_string(config.kind)), nullptr, problem, options, trace);
  Vector x = x0;
  Vector previous = x0;
  Vector m = Vector::Zero(x0.size());
  Vector v = Vector::Zero(x0.size());
  for (long k = 0;; ++k) {
    if (rec.keep_states()) trace.states.x.push_back(x);
    if (!rec.record(k, config.step, x) || k == options.iterations) break;
    const auto draw = static_cast<std::uint64_t>(k);
    switch (config.kind) {
      case BaselineKind::kGd:
      case BaselineKind::kSgd: {
        const Vector g = update_gradient(problem, oracle, x, draw);
        if (!finite_or_flag(g, k, trace)) return trace;
        x -= config.step * g;
        break;
      }
      case BaselineKind::kNesterov: {
        const double momentum = static_cast<double>(k) / (static_cast<double>(k) + 3.0);
        const Vector look = x + momentum * (x - previous);
        const Vector g = update_gradient(problem, oracle, look, draw);
        if (!finite_or_flag(g, k, trace)) return trace;
        previous = x;
        x = look - config.step * g;
        break;
      }
      case BaselineKind::kAdam: {
        const Vector g = update_gradient(problem, oracle, x, draw);
        if (!finite_or_flag(g, k, trace)) return trace;
        m = config.beta1 * m + (1.0 - config.beta1) * g;
        v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseAbs2();
        const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(k + 1));
        const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(k + 1));
        x -= config.step * ((m / c1).array() / ((v / c2).array().sqrt() + config.eps)).matrix();
        break;
      }
    }
  }
  return trace;
}

}  // namespace mirror_opt
