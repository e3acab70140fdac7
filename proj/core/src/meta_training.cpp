#include "mirror_opt/meta_training.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

#include <fmt/format.h>

#include "mirror_opt/error.hpp"
#include "mirror_opt/oracle.hpp"
#include "mirror_opt/parallel.hpp"
#include "mirror_opt/trace.hpp"

namespace mirror_opt {

std::string_view to_string(InLoopAlgorithm a) {
  switch (a) {
    case InLoopAlgorithm::kLmdDual:
      return "lmd_dual";
    case InLoopAlgorithm::kLamd:
      return "lamd";
    case InLoopAlgorithm::kLsmd:
      return "lsmd";
  }
  return "unknown";
}

InLoopAlgorithm in_loop_algorithm_from_string(std::string_view name) {
  for (InLoopAlgorithm a : {InLoopAlgorithm::kLmdDual, InLoopAlgorithm::kLamd, InLoopAlgorithm::kLsmd}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError(fmt::format("unknown in-loop algorithm '{}'", name));
}

double MetaGradient::norm() const { return std::sqrt(map.squaredNorm() + log_steps.squaredNorm()); }

namespace {

using State = std::vector<Vector>;

struct StepGraph {
  std::vector<ad::Var> next;
  ad::Var loss;  // invalid when the step carries no loss weight
};

void validate(const UnrollConfig& config, const MapParameterization& param, const MetaParameters& meta,
              const std::vector<ProblemSample>& samples) {
  if (config.steps < 0) throw ConfigError("unroll: steps must be >= 0");
  if (!config.penalty.empty() && static_cast<int>(config.penalty.size()) != config.steps) {
    throw ConfigError("unroll: need one penalty weight per step");
  }
  for (double s : config.penalty) {
    if (!(s >= 0.0)) throw ConfigError("unroll: penalty weights must be >= 0");
  }
  if (config.algorithm == InLoopAlgorithm::kLamd && !(config.r >= 3.0 && config.gamma > 0.0)) {
    throw ConfigError("unroll: lamd needs r >= 3 and gamma > 0");
  }
  if (meta.map.size() != param.num_params()) {
    throw DimensionError(fmt::format("unroll: {} map parameters, expected {}", meta.map.size(), param.num_params()));
  }
  if (meta.log_steps.size() != config.steps) {
    throw DimensionError(fmt::format("unroll: {} log step sizes for {} steps", meta.log_steps.size(), config.steps));
  }
  if (samples.empty()) throw ConfigError("unroll: no problem samples");
  for (const auto& s : samples) {
    if (!s.problem || s.problem->dim() != param.dimension() || s.x0.size() != param.dimension()) {
      throw DimensionError("unroll: sample dimension does not match the map");
    }
    if (!s.step_problems.empty() && static_cast<int>(s.step_problems.size()) < config.steps) {
      throw ConfigError("unroll: fewer step problems than steps");
    }
    if (!s.step_noise.empty() && static_cast<int>(s.step_noise.size()) < config.steps) {
      throw ConfigError("unroll: fewer noise vectors than steps");
    }
  }
}

const Problem& step_problem(const ProblemSample& s, int k) {
  return s.step_problems.empty() ? *s.problem : *s.step_problems[static_cast<std::size_t>(k)];
}

double loss_weight(const UnrollConfig& c, int k) {
  return c.final_iterate_only && k + 1 != c.steps ? 0.0 : 1.0;
}

double penalty_weight(const UnrollConfig& c, int k) {
  return c.penalty.empty() ? 0.0 : c.penalty[static_cast<std::size_t>(k)];
}

std::vector<ad::Var> record_init(ad::Tape& tape, const BoundMap& map, const UnrollConfig& c, const Vector& x0) {
  ad::Var x = tape.constant(Matrix(x0));
  if (c.algorithm == InLoopAlgorithm::kLamd) return {map.forward(x), x};
  return {map.forward(x)};
}

// Loss term at a primal point: w (f(p) + s ||inverse(forward(p)) - p||).
ad::Var record_loss(ad::Tape& tape, const BoundMap& map, const UnrollConfig& c, const Problem& f, ad::Var p, int k) {
  const double w = loss_weight(c, k);
  if (w == 0.0) return ad::Var();
  ad::Var term = f.objective(tape, p);
  const double s = penalty_weight(c, k);
  if (s > 0.0) {
    ad::Var r = map.inverse(map.forward(p)) - p;
    // The floor keeps the derivative of the norm finite at an exact round trip.
    term = term + ad::scale(ad::sqrt(ad::shift(ad::dot(r, r), 1e-300)), s);
  }
  return w == 1.0 ? term : ad::scale(term, w);
}

StepGraph record_step(ad::Tape& tape, const BoundMap& map, const UnrollConfig& c, const ProblemSample& sample,
                      const std::vector<ad::Var>& state, ad::Var log_t, int k) {
  const Problem& f = step_problem(sample, k);
  ad::Var t = ad::exp(log_t);
  StepGraph out;
  if (c.algorithm == InLoopAlgorithm::kLamd) {
    const double lambda = c.r / (c.r + k);
    ad::Var z = state[0];
    ad::Var x_tilde = state[1];
    ad::Var x = ad::scale(map.inverse(z), lambda) + ad::scale(x_tilde, 1.0 - lambda);
    ad::Var g = f.gradient(tape, x);
    if (!sample.step_noise.empty()) g = g + tape.constant(Matrix(sample.step_noise[static_cast<std::size_t>(k)]));
    ad::Var z_next = z - ad::scalar_mul(ad::scale(t, static_cast<double>(k) / c.r), g);
    ad::Var x_tilde_next = x - ad::scalar_mul(ad::scale(t, c.gamma), g);
    out.next = {z_next, x_tilde_next};
    out.loss = record_loss(tape, map, c, f, x_tilde_next, k);
    return out;
  }
  ad::Var y = state[0];
  ad::Var g = f.gradient(tape, map.inverse(y));
  if (c.algorithm == InLoopAlgorithm::kLsmd && !sample.step_noise.empty()) {
    g = g + tape.constant(Matrix(sample.step_noise[static_cast<std::size_t>(k)]));
  }
  ad::Var y_next = y - ad::scalar_mul(t, g);
  out.next = {y_next};
  out.loss = record_loss(tape, map, c, f, map.inverse(y_next), k);
  return out;
}

bool all_finite(const State& s) {
  for (const auto& v : s) {
    if (!v.allFinite()) return false;
  }
  return true;
}

// Forward sweep of one sample. Returns the loss and fills `states` with s_0..s_N when given.
double forward_sample(const UnrollConfig& c, const MapParameterization& param, const MetaParameters& meta,
                      const ProblemSample& sample, std::vector<State>* states) {
  State current;
  {
    ad::Tape tape;
    const BoundMap map = param.bind(tape, tape.constant(Matrix(meta.map)));
    for (const auto& v : record_init(tape, map, c, sample.x0)) current.push_back(v.vector());
  }
  if (states != nullptr) states->push_back(current);
  double loss = 0.0;
  for (int k = 0; k < c.steps; ++k) {
    ad::Tape tape;
    const BoundMap map = param.bind(tape, tape.constant(Matrix(meta.map)));
    std::vector<ad::Var> vars;
    for (const auto& v : current) vars.push_back(tape.constant(Matrix(v)));
    const StepGraph g = record_step(tape, map, c, sample, vars, tape.constant(meta.log_steps[k]), k);
    State next;
    for (const auto& v : g.next) next.push_back(v.vector());
    const double term = g.loss.valid() ? g.loss.scalar() : 0.0;
    if (!all_finite(next) || !std::isfinite(term)) {
      throw DivergenceError(fmt::format("unrolled trajectory became non-finite at step {}", k + 1));
    }
    loss += term;
    current = std::move(next);
    if (states != nullptr) states->push_back(current);
  }
  return loss;
}

MetaGradient reverse_sample(const UnrollConfig& c, const MapParameterization& param, const MetaParameters& meta,
                            const ProblemSample& sample) {
  std::vector<State> states;
  MetaGradient out;
  out.loss = forward_sample(c, param, meta, sample, &states);
  out.map = Vector::Zero(param.num_params());
  out.log_steps = Vector::Zero(c.steps);
  State adjoint;
  for (const auto& v : states.back()) adjoint.push_back(Vector::Zero(v.size()));
  for (int k = c.steps - 1; k >= 0; --k) {
    ad::Tape tape;
    ad::Var theta = tape.variable(Matrix(meta.map));
    ad::Var log_t = tape.variable(Matrix::Constant(1, 1, meta.log_steps[k]));
    const BoundMap map = param.bind(tape, theta);
    std::vector<ad::Var> vars;
    for (const auto& v : states[static_cast<std::size_t>(k)]) vars.push_back(tape.variable(Matrix(v)));
    const StepGraph g = record_step(tape, map, c, sample, vars, log_t, k);
    std::vector<ad::Seed> seeds;
    if (g.loss.valid()) seeds.push_back({g.loss, Matrix::Ones(1, 1)});
    for (std::size_t i = 0; i < g.next.size(); ++i) seeds.push_back({g.next[i], Matrix(adjoint[i])});
    tape.backward(seeds);
    for (std::size_t i = 0; i < vars.size(); ++i) adjoint[i] = tape.gradient(vars[i]).reshaped();
    out.map += tape.gradient(theta).reshaped();
    out.log_steps[k] = tape.gradient(log_t)(0, 0);
    if (!all_finite(adjoint) || !out.map.allFinite() || !std::isfinite(out.log_steps[k])) {
      throw DivergenceError(fmt::format("meta-gradient became non-finite at step {}", k + 1));
    }
  }
  ad::Tape tape;
  ad::Var theta = tape.variable(Matrix(meta.map));
  const BoundMap map = param.bind(tape, theta);
  const std::vector<ad::Var> init = record_init(tape, map, c, sample.x0);
  std::vector<ad::Seed> seeds;
  for (std::size_t i = 0; i < init.size(); ++i) seeds.push_back({init[i], Matrix(adjoint[i])});
  tape.backward(seeds);
  out.map += tape.gradient(theta).reshaped();
  return out;
}

}  // namespace

double unrolled_loss(const UnrollConfig& config, const MapParameterization& param, const MetaParameters& meta,
                     const std::vector<ProblemSample>& samples, int threads) {
  validate(config, param, meta, samples);
  std::vector<double> losses(samples.size());
  parallel_for(samples.size(), threads,
               [&](std::size_t i) { losses[i] = forward_sample(config, param, meta, samples[i], nullptr); });
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(samples.size());
}

MetaGradient meta_gradient(const UnrollConfig& config, const MapParameterization& param, const MetaParameters& meta,
                           const std::vector<ProblemSample>& samples, int threads) {
  validate(config, param, meta, samples);
  std::vector<MetaGradient> parts(samples.size());
  parallel_for(samples.size(), threads,
               [&](std::size_t i) { parts[i] = reverse_sample(config, param, meta, samples[i]); });
  MetaGradient out;
  out.map = Vector::Zero(param.num_params());
  out.log_steps = Vector::Zero(config.steps);
  for (const auto& p : parts) {
    out.loss += p.loss;
    out.map += p.map;
    out.log_steps += p.log_steps;
  }
  const double inv = 1.0 / static_cast<double>(samples.size());
  out.loss *= inv;
  out.map *= inv;
  out.log_steps *= inv;
  return out;
}

MetaGradient finite_difference_oracle(const UnrollConfig& config, const MapParameterization& param,
                                      const MetaParameters& meta, const std::vector<ProblemSample>& samples,
                                      double h) {
  if (!(h > 0.0)) throw ConfigError("finite differences: h must be > 0");
  const Index n_map = meta.map.size();
  const Index n = n_map + meta.log_steps.size();
  if (n > 500) throw ConfigError(fmt::format("finite differences: {} parameters exceed the limit of 500", n));
  MetaGradient out;
  out.loss = unrolled_loss(config, param, meta, samples);
  out.map = Vector::Zero(n_map);
  out.log_steps = Vector::Zero(meta.log_steps.size());
  for (Index i = 0; i < n; ++i) {
    MetaParameters plus = meta;
    MetaParameters minus = meta;
    double& p = i < n_map ? plus.map[i] : plus.log_steps[i - n_map];
    double& m = i < n_map ? minus.map[i] : minus.log_steps[i - n_map];
    p += h;
    m -= h;
    const double d = (unrolled_loss(config, param, plus, samples) - unrolled_loss(config, param, minus, samples)) /
                     (2.0 * h);
    (i < n_map ? out.map[i] : out.log_steps[i - n_map]) = d;
  }
  return out;
}

StepSchedule TrainResult::schedule(ExtensionRule rule) const {
  std::vector<double> t(static_cast<std::size_t>(params.log_steps.size()));
  for (Index k = 0; k < params.log_steps.size(); ++k) t[static_cast<std::size_t>(k)] = std::exp(params.log_steps[k]);
  return StepSchedule(std::move(t), rule);
}

TrainResult train_map(const TrainConfig& config, const MapParameterization& param, MetaParameters init,
                      const ProblemFamily& family) {
  if (config.meta_iterations < 0) throw ConfigError("train: meta_iterations must be >= 0");
  if (!(config.meta_step > 0.0)) throw ConfigError("train: meta_step must be > 0");
  if (config.batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  if (family.dim() != param.dimension()) throw DimensionError("train: family and map dimensions differ");
  TrainResult result;
  result.params = std::move(init);
  double reference = 0.0;
  for (int it = 0; it < config.meta_iterations; ++it) {
    const auto samples = family.sample(config.batch_size, static_cast<std::uint64_t>(it));
    const MetaGradient g = meta_gradient(config.unroll, param, result.params, samples, config.threads);
    if (it == 0) reference = std::abs(g.loss);
    if (!std::isfinite(g.loss) || g.loss > config.divergence_factor * std::max(reference, 1e-300)) {
      throw DivergenceError(fmt::format("meta-loss {} diverged at meta-iteration {}", g.loss, it));
    }
    TrainLogRow row;
    row.meta_iter = it;
    row.meta_loss = g.loss;
    row.grad_norm = g.norm();
    if (result.params.log_steps.size() > 0) {
      row.min_t = std::exp(result.params.log_steps.minCoeff());
      row.max_t = std::exp(result.params.log_steps.maxCoeff());
    }
    result.log.push_back(row);
    result.params.map -= config.meta_step * g.map;
    result.params.log_steps -= config.meta_step * g.log_steps;
  }
  return result;
}

void write_train_log(std::ostream& out, const std::vector<TrainLogRow>& log) {
  out << "meta_iter,meta_loss,grad_norm,min_t,max_t\n";
  for (const auto& r : log) {
    out << r.meta_iter << ',' << format_real(r.meta_loss) << ',' << format_real(r.grad_norm) << ','
        << format_real(r.min_t) << ',' << format_real(r.max_t) << '\n';
  }
}

void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  write_train_log(out, log);
}

// ---------------------------------------------------------------------------------------
// Families

QuadraticFamily::QuadraticFamily(Vector shared_diag, std::uint64_t seed, double x0_scale, double noise_sigma,
                                 int steps)
    : diag_(std::move(shared_diag)), seed_(seed), x0_scale_(x0_scale), noise_sigma_(noise_sigma), steps_(steps) {
  if (diag_.size() == 0 || (diag_.array() <= 0.0).any()) throw ConfigError("quadratic family: diagonal must be > 0");
  if (noise_sigma_ > 0.0 && steps_ <= 0) throw ConfigError("quadratic family: noise needs the step count");
}

std::vector<ProblemSample> QuadraticFamily::sample(std::size_t count, std::uint64_t draw) const {
  std::mt19937_64 rng = make_rng(seed_, draw);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<ProblemSample> out;
  for (std::size_t i = 0; i < count; ++i) {
    Vector b(diag_.size());
    for (Index j = 0; j < b.size(); ++j) b[j] = normal(rng);
    ProblemSample s;
    s.problem = std::make_shared<QuadraticProblem>(diag_, std::move(b));
    s.x0 = Vector(diag_.size());
    for (Index j = 0; j < s.x0.size(); ++j) s.x0[j] = x0_scale_ * normal(rng);
    if (noise_sigma_ > 0.0) {
      for (int k = 0; k < steps_; ++k) {
        Vector d(diag_.size());
        for (Index j = 0; j < d.size(); ++j) d[j] = noise_sigma_ * normal(rng);
        s.step_noise.push_back(std::move(d));
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

ClassifierFamily::ClassifierFamily(std::shared_ptr<const Problem> problem,
                                   std::function<Vector(std::mt19937_64&)> init, std::uint64_t seed,
                                   Index batch_size, int steps)
    : problem_(std::move(problem)), init_(std::move(init)), seed_(seed), batch_size_(batch_size), steps_(steps) {
  if (!problem_) throw ConfigError("classifier family: missing problem");
  if (batch_size_ > 0 && steps_ <= 0) throw ConfigError("classifier family: minibatches need the step count");
}

std::vector<ProblemSample> ClassifierFamily::sample(std::size_t count, std::uint64_t draw) const {
  std::mt19937_64 rng = make_rng(seed_, draw);
  std::vector<ProblemSample> out;
  for (std::size_t i = 0; i < count; ++i) {
    ProblemSample s;
    s.problem = problem_;
    s.x0 = init_(rng);
    if (batch_size_ > 0) {
      const StochasticOracle oracle = StochasticOracle::minibatch(problem_, batch_size_, rng());
      for (int k = 0; k < steps_; ++k) s.step_problems.push_back(oracle.draw_problem(static_cast<std::uint64_t>(k)));
    }
    out.push_back(std::move(s));
  }
  return out;
}

ListFamily::ListFamily(std::vector<ProblemSample> items) : items_(std::move(items)) {
  if (items_.empty()) throw ConfigError("list family: no items");
}

Index ListFamily::dim() const { return items_.front().problem->dim(); }

std::vector<ProblemSample> ListFamily::sample(std::size_t count, std::uint64_t draw) const {
  std::vector<ProblemSample> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(items_[(draw * count + i) % items_.size()]);
  return out;
}

}  // namespace mirror_opt
