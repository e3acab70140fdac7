#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "mirror_opt/autodiff.hpp"
#include "mirror_opt/mirror_map.hpp"

namespace mirror_opt {

/// Forward and inverse maps expressed as tape operations of a bound parameter vector.
struct BoundMap {
  std::function<ad::Var(ad::Var)> forward;
  std::function<ad::Var(ad::Var)> inverse;
};

/// Differentiable family theta -> MirrorMap used by meta-training.
class MapParameterization {
 public:
  virtual ~MapParameterization() = default;

  virtual MapKind kind() const = 0;
  virtual Index dimension() const = 0;
  virtual Index num_params() const = 0;
  /// Parameters of the identity map.
  virtual Vector identity_params() const = 0;
  virtual MirrorMap to_map(const Vector& theta) const = 0;
  virtual Vector params_from_map(const MirrorMap& map) const = 0;
  /// theta must be an (num_params x 1) node on the tape.
  virtual BoundMap bind(ad::Tape& tape, ad::Var theta) const = 0;
};

class EuclideanParameterization final : public MapParameterization {
 public:
  explicit EuclideanParameterization(Index dim);
  MapKind kind() const override { return MapKind::kEuclidean; }
  Index dimension() const override { return dim_; }
  Index num_params() const override { return 0; }
  Vector identity_params() const override { return Vector(); }
  MirrorMap to_map(const Vector& theta) const override;
  Vector params_from_map(const MirrorMap& map) const override;
  BoundMap bind(ad::Tape& tape, ad::Var theta) const override;

 private:
  Index dim_;
};

/// theta = log d, optionally tied: coordinate i uses theta[orbit_of[i]].
class DiagonalParameterization final : public MapParameterization {
 public:
  explicit DiagonalParameterization(Index dim);
  DiagonalParameterization(Index dim, std::vector<Index> orbit_of);
  MapKind kind() const override { return MapKind::kDiagonalQuadratic; }
  Index dimension() const override { return dim_; }
  Index num_params() const override { return num_params_; }
  Vector identity_params() const override { return Vector::Zero(num_params_); }
  MirrorMap to_map(const Vector& theta) const override;
  Vector params_from_map(const MirrorMap& map) const override;
  BoundMap bind(ad::Tape& tape, ad::Var theta) const override;

 private:
  Index dim_;
  Index num_params_;
  std::shared_ptr<const std::vector<Index>> orbit_of_;
};

/// theta = concatenated increment parameters of the splines, 40 per spline.
class SplineParameterization final : public MapParameterization {
 public:
  explicit SplineParameterization(Index dim);
  SplineParameterization(Index dim, std::vector<SplineBlock> blocks, int num_splines);
  MapKind kind() const override { return MapKind::kSplineElementwise; }
  Index dimension() const override { return dim_; }
  Index num_params() const override { return static_cast<Index>(num_splines_) * MonotoneSpline::kParamCount; }
  Vector identity_params() const override;
  MirrorMap to_map(const Vector& theta) const override;
  Vector params_from_map(const MirrorMap& map) const override;
  BoundMap bind(ad::Tape& tape, ad::Var theta) const override;

  const std::vector<SplineBlock>& blocks() const { return blocks_; }

 private:
  Index dim_;
  std::vector<SplineBlock> blocks_;
  int num_splines_;
  std::shared_ptr<const std::vector<int>> spline_of_;
};

namespace ad {
/// Knot values (41 x S) from increment parameters (40 S x 1).
Var spline_knot_values(Var theta, int num_splines);
/// Element-wise sigma_{s(i)}(x_i), differentiable in x and in the knot values.
Var spline_eval(Var x, Var knot_values, std::shared_ptr<const std::vector<int>> spline_of);
/// Element-wise inverse of spline_eval.
Var spline_inverse(Var y, Var knot_values, std::shared_ptr<const std::vector<int>> spline_of);
}  // namespace ad

}  // namespace mirror_opt
