#include "mirror_opt/map_parameterization.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "mirror_opt/error.hpp"

namespace mirror_opt {

namespace {

constexpr int kHalf = MonotoneSpline::kHalfKnots;
constexpr int kKnots = MonotoneSpline::kKnotCount;
constexpr int kSegs = MonotoneSpline::kParamCount;
constexpr double kGap = MonotoneSpline::kKnotGap;

void check_theta(const Vector& theta, Index expected) {
  if (theta.size() != expected) {
    throw DimensionError(fmt::format("map parameters: expected {}, got {}", expected, theta.size()));
  }
}

// Segment index in [0, 40) (array indexing) whose value range contains y.
int value_segment(const double* c, double y) {
  const double* it = std::upper_bound(c + 1, c + kKnots - 1, y);
  return static_cast<int>(it - c) - 1;
}

int knot_segment(double x) { return MonotoneSpline::segment_of_x(x) + kHalf; }

}  // namespace

EuclideanParameterization::EuclideanParameterization(Index dim) : dim_(dim) {
  if (dim <= 0) throw DimensionError("parameterization dimension must be positive");
}

MirrorMap EuclideanParameterization::to_map(const Vector& theta) const {
  check_theta(theta, 0);
  return MirrorMap::euclidean(dim_);
}

Vector EuclideanParameterization::params_from_map(const MirrorMap& map) const {
  if (map.kind() != MapKind::kEuclidean || map.dimension() != dim_) throw ConfigError("map does not fit parameterization");
  return Vector();
}

BoundMap EuclideanParameterization::bind(ad::Tape&, ad::Var) const {
  return BoundMap{[](ad::Var x) { return x; }, [](ad::Var y) { return y; }};
}

DiagonalParameterization::DiagonalParameterization(Index dim) : dim_(dim), num_params_(dim) {
  if (dim <= 0) throw DimensionError("parameterization dimension must be positive");
  std::vector<Index> id(static_cast<std::size_t>(dim));
  std::iota(id.begin(), id.end(), Index{0});
  orbit_of_ = std::make_shared<const std::vector<Index>>(std::move(id));
}

DiagonalParameterization::DiagonalParameterization(Index dim, std::vector<Index> orbit_of) : dim_(dim) {
  if (static_cast<Index>(orbit_of.size()) != dim) throw DimensionError("orbit assignment length != dimension");
  num_params_ = orbit_of.empty() ? 0 : *std::max_element(orbit_of.begin(), orbit_of.end()) + 1;
  if (*std::min_element(orbit_of.begin(), orbit_of.end()) < 0) throw ConfigError("negative orbit index");
  orbit_of_ = std::make_shared<const std::vector<Index>>(std::move(orbit_of));
}

MirrorMap DiagonalParameterization::to_map(const Vector& theta) const {
  check_theta(theta, num_params_);
  Vector d(dim_);
  for (Index i = 0; i < dim_; ++i) d[i] = std::exp(theta[(*orbit_of_)[static_cast<std::size_t>(i)]]);
  return MirrorMap::diagonal(std::move(d));
}

Vector DiagonalParameterization::params_from_map(const MirrorMap& map) const {
  if (map.kind() != MapKind::kDiagonalQuadratic || map.dimension() != dim_) {
    throw ConfigError("map does not fit parameterization");
  }
  Vector theta = Vector::Zero(num_params_);
  Vector count = Vector::Zero(num_params_);
  for (Index i = 0; i < dim_; ++i) {
    const Index o = (*orbit_of_)[static_cast<std::size_t>(i)];
    theta[o] += std::log(map.diagonal_entries()[i]);
    count[o] += 1.0;
  }
  return theta.cwiseQuotient(count.cwiseMax(1.0));
}

BoundMap DiagonalParameterization::bind(ad::Tape&, ad::Var theta) const {
  ad::Var d = ad::exp(ad::gather(theta, orbit_of_, dim_, 1));
  return BoundMap{[d](ad::Var x) { return ad::mul(d, x); }, [d](ad::Var y) { return ad::div(y, d); }};
}

SplineParameterization::SplineParameterization(Index dim)
    : SplineParameterization(dim, {SplineBlock{0, dim, 0}}, 1) {}

SplineParameterization::SplineParameterization(Index dim, std::vector<SplineBlock> blocks, int num_splines)
    : dim_(dim), blocks_(std::move(blocks)), num_splines_(num_splines) {
  // Validates the tiling.
  const MirrorMap probe =
      MirrorMap::spline(dim_, std::vector<MonotoneSpline>(static_cast<std::size_t>(num_splines_), MonotoneSpline::identity()),
                        blocks_);
  blocks_ = probe.blocks();
  std::vector<int> of(static_cast<std::size_t>(dim_));
  for (const auto& b : blocks_) {
    std::fill(of.begin() + b.start, of.begin() + b.start + b.length, b.spline);
  }
  spline_of_ = std::make_shared<const std::vector<int>>(std::move(of));
}

Vector SplineParameterization::identity_params() const {
  return Vector::Constant(num_params(), MonotoneSpline::param_from_increment(kGap));
}

MirrorMap SplineParameterization::to_map(const Vector& theta) const {
  check_theta(theta, num_params());
  std::vector<MonotoneSpline> splines;
  splines.reserve(static_cast<std::size_t>(num_splines_));
  for (int s = 0; s < num_splines_; ++s) {
    splines.push_back(MonotoneSpline::from_params(std::span<const double>(theta.data() + s * kSegs, kSegs)));
  }
  return MirrorMap::spline(dim_, std::move(splines), blocks_);
}

Vector SplineParameterization::params_from_map(const MirrorMap& map) const {
  if (map.kind() != MapKind::kSplineElementwise || map.dimension() != dim_ ||
      static_cast<int>(map.splines().size()) != num_splines_) {
    throw ConfigError("map does not fit parameterization");
  }
  return map.params();
}

BoundMap SplineParameterization::bind(ad::Tape&, ad::Var theta) const {
  ad::Var c = ad::spline_knot_values(theta, num_splines_);
  auto of = spline_of_;
  return BoundMap{[c, of](ad::Var x) { return ad::spline_eval(x, c, of); },
                  [c, of](ad::Var y) { return ad::spline_inverse(y, c, of); }};
}

namespace ad {

Var spline_knot_values(Var theta, int num_splines) {
  if (theta.size() != static_cast<Index>(num_splines) * kSegs) throw DimensionError("spline parameters: wrong length");
  Var delta = shift(exp(theta), MonotoneSpline::kMinIncrement);
  auto fwd = [num_splines](const Matrix& d) {
    Matrix c(kKnots, num_splines);
    for (int s = 0; s < num_splines; ++s) {
      const double* ds = d.data() + s * kSegs;
      c(kHalf, s) = 0.0;
      for (int i = 1; i <= kHalf; ++i) {
        c(kHalf + i, s) = c(kHalf + i - 1, s) + ds[kHalf + i - 1];
        c(kHalf - i, s) = c(kHalf - i + 1, s) - ds[kHalf - i];
      }
    }
    return c;
  };
  auto adj = [num_splines](const Matrix& gc) {
    Matrix gd(static_cast<Index>(num_splines) * kSegs, 1);
    for (int s = 0; s < num_splines; ++s) {
      double* out = gd.data() + s * kSegs;
      double acc = 0.0;
      for (int j = kSegs - 1; j >= kHalf; --j) {
        acc += gc(j + 1, s);
        out[j] = acc;
      }
      acc = 0.0;
      for (int j = 0; j < kHalf; ++j) {
        acc += gc(j, s);
        out[j] = -acc;
      }
    }
    return gd;
  };
  return linear(delta, fwd, adj);
}

Var spline_eval(Var x, Var knot_values, std::shared_ptr<const std::vector<int>> spline_of) {
  if (static_cast<Index>(spline_of->size()) != x.size()) throw DimensionError("spline_eval: assignment length");
  MatrixPtr xv = x.value_ptr();
  MatrixPtr cv = knot_values.value_ptr();
  Matrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.size(); ++i) {
    const double* c = cv->data() + (*spline_of)[static_cast<std::size_t>(i)] * kKnots;
    const double xi = xv->data()[i];
    const int j = knot_segment(xi);
    const double w = (xi - kGap * (j - kHalf)) / kGap;
    out.data()[i] = c[j] + w * (c[j + 1] - c[j]);
  }
  return x.tape().record(std::move(out), {x, knot_values},
                         [x, knot_values, xv, cv, spline_of](Tape& t, const Matrix& g) {
                           const bool gx = t.requires_grad(x);
                           const bool gc = t.requires_grad(knot_values);
                           Matrix ax = gx ? Matrix(Matrix::Zero(xv->rows(), xv->cols())) : Matrix();
                           Matrix ac = gc ? Matrix(Matrix::Zero(cv->rows(), cv->cols())) : Matrix();
                           for (Index i = 0; i < xv->size(); ++i) {
                             const int s = (*spline_of)[static_cast<std::size_t>(i)];
                             const double* c = cv->data() + s * kKnots;
                             const double xi = xv->data()[i];
                             const int j = knot_segment(xi);
                             const double w = (xi - kGap * (j - kHalf)) / kGap;
                             const double gi = g.data()[i];
                             if (gx) ax.data()[i] = gi * (c[j + 1] - c[j]) / kGap;
                             if (gc) {
                               ac(j, s) += gi * (1.0 - w);
                               ac(j + 1, s) += gi * w;
                             }
                           }
                           if (gx) t.accumulate(x, ax);
                           if (gc) t.accumulate(knot_values, ac);
                         });
}

Var spline_inverse(Var y, Var knot_values, std::shared_ptr<const std::vector<int>> spline_of) {
  if (static_cast<Index>(spline_of->size()) != y.size()) throw DimensionError("spline_inverse: assignment length");
  MatrixPtr yv = y.value_ptr();
  MatrixPtr cv = knot_values.value_ptr();
  Matrix out(y.rows(), y.cols());
  for (Index i = 0; i < y.size(); ++i) {
    const double* c = cv->data() + (*spline_of)[static_cast<std::size_t>(i)] * kKnots;
    const double yi = yv->data()[i];
    const int j = value_segment(c, yi);
    out.data()[i] = kGap * (j - kHalf) + kGap * (yi - c[j]) / (c[j + 1] - c[j]);
  }
  return y.tape().record(std::move(out), {y, knot_values},
                         [y, knot_values, yv, cv, spline_of](Tape& t, const Matrix& g) {
                           const bool gy = t.requires_grad(y);
                           const bool gc = t.requires_grad(knot_values);
                           Matrix ay = gy ? Matrix(Matrix::Zero(yv->rows(), yv->cols())) : Matrix();
                           Matrix ac = gc ? Matrix(Matrix::Zero(cv->rows(), cv->cols())) : Matrix();
                           for (Index i = 0; i < yv->size(); ++i) {
                             const int s = (*spline_of)[static_cast<std::size_t>(i)];
                             const double* c = cv->data() + s * kKnots;
                             const double yi = yv->data()[i];
                             const int j = value_segment(c, yi);
                             const double delta = c[j + 1] - c[j];
                             const double gi = g.data()[i];
                             if (gy) ay.data()[i] = gi * kGap / delta;
                             if (gc) {
                               ac(j, s) += gi * kGap * (yi - c[j + 1]) / (delta * delta);
                               ac(j + 1, s) -= gi * kGap * (yi - c[j]) / (delta * delta);
                             }
                           }
                           if (gy) t.accumulate(y, ay);
                           if (gc) t.accumulate(knot_values, ac);
                         });
}

}  // namespace ad

}  // namespace mirror_opt
