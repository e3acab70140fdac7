#include "mirror_opt/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "mirror_opt/error.hpp"

namespace mirror_opt {

namespace {
// Separates the noise stream from the permutation stream of the same seed.
constexpr std::uint64_t kNoiseTag = 0x6e6f697365ULL;
constexpr std::uint64_t kPermutationTag = 0x7065726dULL;
}  // namespace

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

StochasticOracle StochasticOracle::gaussian(std::shared_ptr<const Problem> problem, double sigma,
                                            std::uint64_t seed) {
  if (!problem) throw ConfigError("oracle: missing problem");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("oracle: sigma must be finite and >= 0");
  StochasticOracle o;
  o.problem_ = std::move(problem);
  o.kind_ = NoiseKind::kGaussianAdditive;
  o.sigma_ = sigma;
  o.seed_ = seed;
  return o;
}

StochasticOracle StochasticOracle::minibatch(std::shared_ptr<const Problem> problem, Index batch_size,
                                             std::uint64_t seed) {
  if (!problem) throw ConfigError("oracle: missing problem");
  if (batch_size <= 0) throw ConfigError("oracle: empty batch");
  if (problem->num_samples() == 0) throw ConfigError("oracle: minibatching needs a finite-sum problem");
  if (batch_size > problem->num_samples()) {
    throw ConfigError(fmt::format("oracle: batch {} exceeds {} samples", batch_size, problem->num_samples()));
  }
  StochasticOracle o;
  o.problem_ = std::move(problem);
  o.kind_ = NoiseKind::kMinibatch;
  o.batch_size_ = batch_size;
  o.seed_ = seed;
  return o;
}

Vector StochasticOracle::noise(std::uint64_t draw) const {
  const Index n = problem_->dim();
  if (kind_ != NoiseKind::kGaussianAdditive || sigma_ == 0.0) return Vector::Zero(n);
  std::mt19937_64 rng = make_rng(seed_ ^ kNoiseTag, draw);
  std::normal_distribution<double> normal(0.0, sigma_);
  Vector d(n);
  for (Index i = 0; i < n; ++i) d[i] = normal(rng);
  return d;
}

std::vector<Index> StochasticOracle::batch_indices(std::uint64_t draw) const {
  if (kind_ != NoiseKind::kMinibatch) throw ConfigError("oracle: not a minibatch oracle");
  const Index m = problem_->num_samples();
  const auto per_epoch = static_cast<std::uint64_t>(m / batch_size_);
  const std::uint64_t epoch = draw / per_epoch;
  const auto slot = static_cast<Index>(draw % per_epoch);
  std::vector<Index> perm(static_cast<std::size_t>(m));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng = make_rng(seed_ ^ kPermutationTag, epoch);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Index> out(perm.begin() + slot * batch_size_, perm.begin() + (slot + 1) * batch_size_);
  std::sort(out.begin(), out.end());
  return out;
}

std::shared_ptr<const Problem> StochasticOracle::draw_problem(std::uint64_t draw) const {
  if (kind_ == NoiseKind::kGaussianAdditive) return problem_;
  if (batch_size_ == problem_->num_samples()) return problem_;
  const std::vector<Index> idx = batch_indices(draw);
  return problem_->subproblem(idx);
}

Vector StochasticOracle::gradient(const Vector& x, std::uint64_t draw) const {
  Vector g = draw_problem(draw)->gradient(x);
  if (kind_ == NoiseKind::kGaussianAdditive && sigma_ > 0.0) g += noise(draw);
  if (dual_error_) g += dual_error_(x);
  return g;
}

}  // namespace mirror_opt
