#pragma once

#include <array>
#include <span>

namespace mirror_opt {

/// Strictly increasing piecewise-linear function sigma: R -> R with sigma(0) = 0.
///
/// Knots sit on the fixed grid t_i = 0.05 i, i = -20..20. The spline is the gradient of the
/// C^1 piecewise-quadratic potential psi(x) = int_0^x sigma(s) ds, so it serves directly as
/// an element-wise mirror map with an exact inverse. Outside [-1, 1] the first and last
/// linear pieces are continued.
///
/// Monotonicity holds by construction: the 40 free parameters u_j are mapped to
/// segment increments delta_j = exp(u_j) + 1e-6, and the knot values are their
/// cumulative sums anchored at c_0 = 0.
class MonotoneSpline {
 public:
  static constexpr int kHalfKnots = 20;
  static constexpr int kKnotCount = 2 * kHalfKnots + 1;
  static constexpr int kParamCount = 2 * kHalfKnots;
  static constexpr double kKnotGap = 0.05;
  static constexpr double kMinIncrement = 1e-6;

  using Values = std::array<double, kKnotCount>;
  using Params = std::array<double, kParamCount>;

  /// sigma(t) = t.
  static MonotoneSpline identity();
  static MonotoneSpline from_params(std::span<const double> params);
  /// Builds the spline through the given knot values; they must satisfy c_0 = 0 and
  /// increase by more than the minimum increment.
  static MonotoneSpline from_values(const Values& values);

  static double increment_from_param(double u);
  static double param_from_increment(double delta);

  /// Knot location t_i for i in [-20, 20].
  static double knot(int i) { return kKnotGap * i; }

  /// Segment j in [-20, 19] whose linear piece defines sigma at x.
  static int segment_of_x(double x);
  /// Segment whose value range contains y (clamped at the ends).
  int segment_of_y(double y) const;

  double eval(double x) const;
  double inverse(double y) const;
  /// Slope of linear piece j.
  double segment_slope(int j) const;
  double potential(double x) const;
  /// B(x, y) = psi(x) - psi(y) - sigma(y)(x - y), integrated piece by piece so every
  /// contribution is nonnegative.
  double bregman(double x, double y) const;
  double min_slope() const;
  double max_slope() const;

  /// c_i for i in [-20, 20].
  double value(int i) const { return values_[static_cast<std::size_t>(i + kHalfKnots)]; }
  const Values& values() const { return values_; }
  const Params& params() const { return params_; }

 private:
  MonotoneSpline() = default;
  void rebuild_from_params();
  void rebuild_potential();

  Params params_{};
  Values values_{};
  // int_0^{t_i} sigma, same indexing as values_.
  Values knot_potential_{};
};

}  // namespace mirror_opt
