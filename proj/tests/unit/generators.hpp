#pragma once

// Seeded random inputs for property tests.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "mirror_opt/mirror_map.hpp"
#include "mirror_opt/spline.hpp"
#include "mirror_opt/types.hpp"

namespace gen {

using mirror_opt::Index;
using mirror_opt::Vector;

class Source {
 public:
  explicit Source(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng_); }
  Index index(Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(rng_); }

  Vector normal_vector(Index n, double sd = 1.0) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = normal(sd);
    return v;
  }
  Vector uniform_vector(Index n, double lo, double hi) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = uniform(lo, hi);
    return v;
  }
  /// Entries exp(N(0, sd^2)).
  Vector positive_vector(Index n, double sd = 1.0) { return normal_vector(n, sd).array().exp(); }

  mirror_opt::MonotoneSpline spline(double spread = 1.0) {
    mirror_opt::MonotoneSpline::Params p{};
    for (double& u : p) u = std::log(0.05) + normal(spread);
    return mirror_opt::MonotoneSpline::from_params(p);
  }

  mirror_opt::MirrorMap map(mirror_opt::MapKind kind, Index dim) {
    switch (kind) {
      case mirror_opt::MapKind::kEuclidean:
        return mirror_opt::MirrorMap::euclidean(dim);
      case mirror_opt::MapKind::kDiagonalQuadratic:
        return mirror_opt::MirrorMap::diagonal(positive_vector(dim));
      case mirror_opt::MapKind::kSplineElementwise:
        break;
    }
    // Two splines split at a random point.
    const Index cut = dim > 1 ? index(1, dim - 1) : dim;
    std::vector<mirror_opt::MonotoneSpline> splines{spline(0.5)};
    std::vector<mirror_opt::SplineBlock> blocks{{0, cut, 0}};
    if (cut < dim) {
      splines.push_back(spline(0.5));
      blocks.push_back({cut, dim - cut, 1});
    }
    return mirror_opt::MirrorMap::spline(dim, splines, blocks);
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

inline constexpr mirror_opt::MapKind kAllKinds[] = {mirror_opt::MapKind::kEuclidean,
                                                    mirror_opt::MapKind::kDiagonalQuadratic,
                                                    mirror_opt::MapKind::kSplineElementwise};

/// Central differences of a scalar function.
inline Vector central_difference(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Vector xp = x;
    Vector xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

}  // namespace gen
