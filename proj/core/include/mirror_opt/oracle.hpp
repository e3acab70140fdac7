#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "mirror_opt/problems.hpp"

namespace mirror_opt {

enum class NoiseKind { kGaussianAdditive, kMinibatch };

/// Seeds a generator from a 64-bit seed and a stream index.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream);

/// Unbiased gradient estimates G(x, xi_k) = grad f(x) + Delta(x, xi_k) + U(x).
///
/// A draw is identified by its index, so G is a pure function of (seed, draw index) and runs
/// can be replayed. U is zero unless a dual-error hook is installed.
class StochasticOracle {
 public:
  /// Delta ~ N(0, sigma^2 I); sigma = 0 gives the exact gradient.
  static StochasticOracle gaussian(std::shared_ptr<const Problem> problem, double sigma, std::uint64_t seed);
  /// Gradient of a batch of summands drawn without replacement. Each epoch walks a fresh
  /// permutation; a trailing partial batch is dropped.
  static StochasticOracle minibatch(std::shared_ptr<const Problem> problem, Index batch_size, std::uint64_t seed);

  const Problem& problem() const { return *problem_; }
  const std::shared_ptr<const Problem>& problem_ptr() const { return problem_; }
  NoiseKind kind() const { return kind_; }
  double sigma() const { return sigma_; }
  Index batch_size() const { return batch_size_; }
  std::uint64_t seed() const { return seed_; }

  Vector gradient(const Vector& x, std::uint64_t draw) const;
  /// Additive noise of a draw (zero vector for minibatch oracles).
  Vector noise(std::uint64_t draw) const;
  /// Sorted sample indices of a minibatch draw.
  std::vector<Index> batch_indices(std::uint64_t draw) const;
  /// The objective whose exact gradient a draw returns, before additive noise.
  std::shared_ptr<const Problem> draw_problem(std::uint64_t draw) const;

  /// Test hook for a deterministic dual error U(x).
  void set_dual_error(std::function<Vector(const Vector&)> u) { dual_error_ = std::move(u); }

 private:
  StochasticOracle() = default;

  std::shared_ptr<const Problem> problem_;
  NoiseKind kind_ = NoiseKind::kGaussianAdditive;
  double sigma_ = 0.0;
  Index batch_size_ = 0;
  std::uint64_t seed_ = 0;
  std::function<Vector(const Vector&)> dual_error_;
};

}  // namespace mirror_opt
