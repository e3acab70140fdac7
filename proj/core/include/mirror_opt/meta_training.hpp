#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string_view>
#include <vector>

#include "mirror_opt/map_parameterization.hpp"
#include "mirror_opt/networks.hpp"
#include "mirror_opt/problems.hpp"
#include "mirror_opt/schedule.hpp"

namespace mirror_opt {

/// Optimizer unrolled inside the meta-loss.
enum class InLoopAlgorithm { kLmdDual, kLamd, kLsmd };

std::string_view to_string(InLoopAlgorithm a);
InLoopAlgorithm in_loop_algorithm_from_string(std::string_view name);

struct UnrollConfig {
  InLoopAlgorithm algorithm = InLoopAlgorithm::kLmdDual;
  int steps = 10;
  /// Consistency penalty weights s_1..s_N; empty means all zero.
  std::vector<double> penalty;
  /// Only the last iterate enters the loss.
  bool final_iterate_only = false;
  double r = 3.0;
  double gamma = 1.0;
};

/// One problem instance of a family with its initialization.
struct ProblemSample {
  std::shared_ptr<const Problem> problem;
  Vector x0;
  /// Optional per-step objectives (minibatches); step k uses step_problems[k] for both its
  /// gradient and its loss term. Empty means `problem` throughout.
  std::vector<std::shared_ptr<const Problem>> step_problems;
  /// Optional additive gradient noise per step (stochastic in-loop algorithm).
  std::vector<Vector> step_noise;
};

/// Deterministic sampler of problem instances.
class ProblemFamily {
 public:
  virtual ~ProblemFamily() = default;
  virtual Index dim() const = 0;
  /// `count` samples for meta-iteration `draw`; identical arguments give identical samples.
  virtual std::vector<ProblemSample> sample(std::size_t count, std::uint64_t draw) const = 0;
};

/// Learnable quantities: map parameters theta and u_k = log t_k.
struct MetaParameters {
  Vector map;
  Vector log_steps;
};

struct MetaGradient {
  double loss = 0.0;
  Vector map;
  Vector log_steps;
  double norm() const;
};

/// Mean over samples of sum_k w_k [f(x~_k) + s_k ||inverse(forward(x~_k)) - x~_k||].
double unrolled_loss(const UnrollConfig& config, const MapParameterization& param, const MetaParameters& meta,
                     const std::vector<ProblemSample>& samples, int threads = 1);

/// Reverse-mode gradient of unrolled_loss. Each step is re-recorded from stored states
/// during the backward sweep, so tape memory stays at one step.
MetaGradient meta_gradient(const UnrollConfig& config, const MapParameterization& param, const MetaParameters& meta,
                           const std::vector<ProblemSample>& samples, int threads = 1);

/// Central differences over every parameter; at most 500 parameters.
MetaGradient finite_difference_oracle(const UnrollConfig& config, const MapParameterization& param,
                                      const MetaParameters& meta, const std::vector<ProblemSample>& samples,
                                      double h);

struct TrainConfig {
  UnrollConfig unroll;
  int meta_iterations = 100;
  double meta_step = 1e-2;
  std::size_t batch_size = 8;
  int threads = 1;
  /// Stop with DivergenceError once the meta-loss exceeds this multiple of the first one.
  double divergence_factor = 1e3;
  ExtensionRule extension = ExtensionRule::kConstantMean;
};

struct TrainLogRow {
  int meta_iter = 0;
  double meta_loss = 0.0;
  double grad_norm = 0.0;
  double min_t = 0.0;
  double max_t = 0.0;
};

struct TrainResult {
  MetaParameters params;
  std::vector<TrainLogRow> log;
  MirrorMap map(const MapParameterization& param) const { return param.to_map(params.map); }
  StepSchedule schedule(ExtensionRule rule) const;
};

/// Plain gradient descent on (theta, u) with a fixed meta-step. Sample batches are drawn
/// with the meta-iteration as draw index.
TrainResult train_map(const TrainConfig& config, const MapParameterization& param, MetaParameters init,
                      const ProblemFamily& family);

void write_train_log(std::ostream& out, const std::vector<TrainLogRow>& log);
void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& log);

/// Quadratics 0.5 x^T diag(a) x + b^T x with b ~ N(0, I); x0 ~ N(0, I) scaled by x0_scale.
class QuadraticFamily final : public ProblemFamily {
 public:
  QuadraticFamily(Vector shared_diag, std::uint64_t seed, double x0_scale = 1.0, double noise_sigma = 0.0,
                  int steps = 0);
  Index dim() const override { return diag_.size(); }
  std::vector<ProblemSample> sample(std::size_t count, std::uint64_t draw) const override;

 private:
  Vector diag_;
  std::uint64_t seed_;
  double x0_scale_;
  double noise_sigma_;
  int steps_;
};

/// Fresh network initializations on a fixed classification problem. With a batch size the
/// unrolled steps see consecutive minibatches; otherwise the full data.
class ClassifierFamily final : public ProblemFamily {
 public:
  ClassifierFamily(std::shared_ptr<const Problem> problem, std::function<Vector(std::mt19937_64&)> init,
                   std::uint64_t seed, Index batch_size = 0, int steps = 0);
  Index dim() const override { return problem_->dim(); }
  std::vector<ProblemSample> sample(std::size_t count, std::uint64_t draw) const override;

 private:
  std::shared_ptr<const Problem> problem_;
  std::function<Vector(std::mt19937_64&)> init_;
  std::uint64_t seed_;
  Index batch_size_;
  int steps_;
};

/// Fixed list of problems cycled in order, started from a per-problem initialization.
class ListFamily final : public ProblemFamily {
 public:
  explicit ListFamily(std::vector<ProblemSample> items);
  Index dim() const override;
  std::vector<ProblemSample> sample(std::size_t count, std::uint64_t draw) const override;

 private:
  std::vector<ProblemSample> items_;
};

}  // namespace mirror_opt
