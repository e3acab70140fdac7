#include "mirror_opt/spline.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "mirror_opt/error.hpp"

namespace mirror_opt {

namespace {
constexpr int kFirstSegment = -MonotoneSpline::kHalfKnots;
constexpr int kLastSegment = MonotoneSpline::kHalfKnots - 1;
}  // namespace

double MonotoneSpline::increment_from_param(double u) { return std::exp(u) + kMinIncrement; }

double MonotoneSpline::param_from_increment(double delta) {
  if (!(delta > kMinIncrement)) {
    throw ConfigError(fmt::format("spline increment {} must exceed the floor {}", delta, kMinIncrement));
  }
  return std::log(delta - kMinIncrement);
}

MonotoneSpline MonotoneSpline::identity() {
  MonotoneSpline s;
  s.params_.fill(param_from_increment(kKnotGap));
  s.rebuild_from_params();
  return s;
}

MonotoneSpline MonotoneSpline::from_params(std::span<const double> params) {
  if (params.size() != kParamCount) {
    throw DimensionError(fmt::format("spline expects {} parameters, got {}", kParamCount, params.size()));
  }
  MonotoneSpline s;
  for (std::size_t j = 0; j < params.size(); ++j) {
    if (!std::isfinite(params[j])) throw NonFiniteError("spline parameter is not finite");
    s.params_[j] = params[j];
  }
  s.rebuild_from_params();
  return s;
}

MonotoneSpline MonotoneSpline::from_values(const Values& values) {
  if (values[kHalfKnots] != 0.0) throw ConfigError("spline value at the origin must be 0");
  Params params{};
  for (int j = 0; j < kParamCount; ++j) {
    params[static_cast<std::size_t>(j)] =
        param_from_increment(values[static_cast<std::size_t>(j + 1)] - values[static_cast<std::size_t>(j)]);
  }
  MonotoneSpline s = from_params(params);
  // Keep the caller's values bit-exact rather than the exp/log round trip.
  s.values_ = values;
  s.rebuild_potential();
  return s;
}

void MonotoneSpline::rebuild_from_params() {
  // Parameter j controls the increment on segment [t_{j-20}, t_{j-19}].
  values_[kHalfKnots] = 0.0;
  for (int i = 1; i <= kHalfKnots; ++i) {
    const std::size_t up = static_cast<std::size_t>(kHalfKnots + i);
    values_[up] = values_[up - 1] + increment_from_param(params_[up - 1]);
    const std::size_t down = static_cast<std::size_t>(kHalfKnots - i);
    values_[down] = values_[down + 1] - increment_from_param(params_[down]);
  }
  rebuild_potential();
}

void MonotoneSpline::rebuild_potential() {
  knot_potential_[kHalfKnots] = 0.0;
  for (int i = 0; i < kHalfKnots; ++i) {
    const std::size_t a = static_cast<std::size_t>(kHalfKnots + i);
    knot_potential_[a + 1] = knot_potential_[a] + 0.5 * kKnotGap * (values_[a] + values_[a + 1]);
    const std::size_t b = static_cast<std::size_t>(kHalfKnots - i);
    knot_potential_[b - 1] = knot_potential_[b] - 0.5 * kKnotGap * (values_[b - 1] + values_[b]);
  }
}

int MonotoneSpline::segment_of_x(double x) {
  const double s = std::floor(x / kKnotGap);
  if (s <= kFirstSegment) return kFirstSegment;
  if (s >= kLastSegment) return kLastSegment;
  return static_cast<int>(s);
}

int MonotoneSpline::segment_of_y(double y) const {
  // First knot value strictly greater than y, restricted to the interior knots.
  const auto begin = values_.begin() + 1;
  const auto end = values_.end() - 1;
  const auto it = std::upper_bound(begin, end, y);
  return static_cast<int>(it - values_.begin()) - 1 - kHalfKnots;
}

double MonotoneSpline::segment_slope(int j) const { return (value(j + 1) - value(j)) / kKnotGap; }

double MonotoneSpline::eval(double x) const {
  const int j = segment_of_x(x);
  return value(j) + (x - knot(j)) * segment_slope(j);
}

double MonotoneSpline::inverse(double y) const {
  const int j = segment_of_y(y);
  return knot(j) + kKnotGap * (y - value(j)) / (value(j + 1) - value(j));
}

double MonotoneSpline::potential(double x) const {
  const int j = segment_of_x(x);
  const double dx = x - knot(j);
  return knot_potential_[static_cast<std::size_t>(j + kHalfKnots)] + value(j) * dx +
         0.5 * segment_slope(j) * dx * dx;
}

double MonotoneSpline::bregman(double x, double y) const {
  if (x == y) return 0.0;
  const double sy = eval(y);
  const double lo = std::min(x, y);
  const double hi = std::max(x, y);
  double total = 0.0;
  double a = lo;
  while (a < hi) {
    const int j = segment_of_x(a);
    double b = hi;
    if (j < kLastSegment) b = std::min(hi, knot(j + 1));
    if (!(b > a)) {
      // a sits on (or rounds past) a knot; step into the next segment.
      b = std::min(hi, knot(j + 2));
      if (!(b > a)) break;
    }
    const double slope = segment_slope(segment_of_x(0.5 * (a + b)));
    const double w = b - a;
    if (x > y) {
      total += (eval(a) - sy) * w + 0.5 * slope * w * w;
    } else {
      total += (sy - eval(b)) * w + 0.5 * slope * w * w;
    }
    a = b;
  }
  return std::max(total, 0.0);
}

double MonotoneSpline::min_slope() const {
  double m = segment_slope(kFirstSegment);
  for (int j = kFirstSegment + 1; j <= kLastSegment; ++j) m = std::min(m, segment_slope(j));
  return m;
}

double MonotoneSpline::max_slope() const {
  double m = segment_slope(kFirstSegment);
  for (int j = kFirstSegment + 1; j <= kLastSegment; ++j) m = std::max(m, segment_slope(j));
  return m;
}

}  // namespace mirror_opt
