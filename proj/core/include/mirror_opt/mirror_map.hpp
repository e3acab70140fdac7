#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mirror_opt/spline.hpp"
#include "mirror_opt/types.hpp"

namespace mirror_opt {

enum class MapKind { kEuclidean, kDiagonalQuadratic, kSplineElementwise };

std::string_view to_string(MapKind kind);
MapKind map_kind_from_string(std::string_view name);

/// Contiguous coordinate range [start, start + length) handled by one spline.
struct SplineBlock {
  Index start = 0;
  Index length = 0;
  int spline = 0;
};

/// A strongly convex potential psi together with its exact conjugate gradient.
///
/// forward is grad psi (primal to dual), inverse is grad psi* (dual to primal). All three
/// kinds act coordinate-wise, so the inverse is exact up to rounding.
class MirrorMap {
 public:
  static MirrorMap euclidean(Index dim);
  /// psi(x) = 0.5 x^T diag(d) x with every d_i > 0.
  static MirrorMap diagonal(Vector d);
  /// One spline shared by every coordinate.
  static MirrorMap spline(Index dim, MonotoneSpline s);
  /// Several splines; every coordinate must be covered by exactly one block.
  static MirrorMap spline(Index dim, std::vector<MonotoneSpline> splines, std::vector<SplineBlock> blocks);

  MapKind kind() const { return kind_; }
  Index dimension() const { return dim_; }
  /// Strong convexity modulus of psi.
  double alpha() const;

  DualVector forward(const PrimalVector& x) const;
  PrimalVector inverse(const DualVector& y) const;
  double potential(const PrimalVector& x) const;
  /// B_psi(x, y) = psi(x) - psi(y) - <grad psi(y), x - y>.
  double bregman(const PrimalVector& x, const PrimalVector& y) const;
  /// argmin_u <y, u> + B_psi(u, x).
  PrimalVector prox_mapping(const PrimalVector& x, const DualVector& y) const;
  /// || inverse(forward(x)) - x ||_2.
  double consistency_error(const PrimalVector& x) const;

  /// Learnable parameters: empty, the diagonal d, or the concatenated spline parameters.
  Vector params() const;
  const Vector& diagonal_entries() const { return diag_; }
  const std::vector<MonotoneSpline>& splines() const { return splines_; }
  const std::vector<SplineBlock>& blocks() const { return blocks_; }

  nlohmann::json to_json() const;
  static MirrorMap from_json(const nlohmann::json& doc);

 private:
  MirrorMap(MapKind kind, Index dim) : kind_(kind), dim_(dim) {}
  void check_dim(const Vector& v, const char* what) const;

  MapKind kind_;
  Index dim_;
  Vector diag_;
  std::vector<MonotoneSpline> splines_;
  std::vector<SplineBlock> blocks_;
};

}  // namespace mirror_opt
