#include "mirror_opt/mirror_map.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "mirror_opt/error.hpp"

namespace mirror_opt {

namespace {

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw NonFiniteError(fmt::format("{}: non-finite entry", what));
}

}  // namespace

std::string_view to_string(MapKind kind) {
  switch (kind) {
    case MapKind::kEuclidean:
      return "euclidean";
    case MapKind::kDiagonalQuadratic:
      return "diagonal_quadratic";
    case MapKind::kSplineElementwise:
      return "spline_elementwise";
  }
  return "unknown";
}

MapKind map_kind_from_string(std::string_view name) {
  if (name == "euclidean") return MapKind::kEuclidean;
  if (name == "diagonal_quadratic") return MapKind::kDiagonalQuadratic;
  if (name == "spline_elementwise") return MapKind::kSplineElementwise;
  throw ConfigError(fmt::format("unknown mirror map kind '{}'", name));
}

MirrorMap MirrorMap::euclidean(Index dim) {
  if (dim <= 0) throw DimensionError("mirror map dimension must be positive");
  return MirrorMap(MapKind::kEuclidean, dim);
}

MirrorMap MirrorMap::diagonal(Vector d) {
  if (d.size() == 0) throw DimensionError("diagonal map needs at least one entry");
  require_finite(d, "diagonal map weights");
  if ((d.array() <= 0.0).any()) throw ConfigError("diagonal map weights must be positive");
  MirrorMap m(MapKind::kDiagonalQuadratic, d.size());
  m.diag_ = std::move(d);
  return m;
}

MirrorMap MirrorMap::spline(Index dim, MonotoneSpline s) {
  return spline(dim, {std::move(s)}, {SplineBlock{0, dim, 0}});
}

MirrorMap MirrorMap::spline(Index dim, std::vector<MonotoneSpline> splines, std::vector<SplineBlock> blocks) {
  if (dim <= 0) throw DimensionError("mirror map dimension must be positive");
  if (splines.empty()) throw ConfigError("spline map needs at least one spline");
  std::sort(blocks.begin(), blocks.end(), [](const SplineBlock& a, const SplineBlock& b) { return a.start < b.start; });
  Index next = 0;
  std::vector<bool> used(splines.size(), false);
  for (const auto& b : blocks) {
    if (b.start != next || b.length <= 0) {
      throw ConfigError(fmt::format("spline blocks must tile [0, {}) without gaps or overlap", dim));
    }
    if (b.spline < 0 || static_cast<std::size_t>(b.spline) >= splines.size()) {
      throw ConfigError(fmt::format("spline block refers to missing spline {}", b.spline));
    }
    used[static_cast<std::size_t>(b.spline)] = true;
    next += b.length;
  }
  if (next != dim) throw ConfigError(fmt::format("spline blocks cover {} of {} coordinates", next, dim));
  if (std::find(used.begin(), used.end(), false) != used.end()) throw ConfigError("spline map has an unused spline");
  MirrorMap m(MapKind::kSplineElementwise, dim);
  m.splines_ = std::move(splines);
  m.blocks_ = std::move(blocks);
  return m;
}

double MirrorMap::alpha() const {
  switch (kind_) {
    case MapKind::kEuclidean:
      return 1.0;
    case MapKind::kDiagonalQuadratic:
      return diag_.minCoeff();
    case MapKind::kSplineElementwise: {
      double a = splines_.front().min_slope();
      for (const auto& s : splines_) a = std::min(a, s.min_slope());
      return a;
    }
  }
  return 1.0;
}

void MirrorMap::check_dim(const Vector& v, const char* what) const {
  if (v.size() != dim_) {
    throw DimensionError(fmt::format("{}: expected dimension {}, got {}", what, dim_, v.size()));
  }
}

DualVector MirrorMap::forward(const PrimalVector& x) const {
  check_dim(x, "forward");
  require_finite(x, "forward");
  switch (kind_) {
    case MapKind::kEuclidean:
      return x;
    case MapKind::kDiagonalQuadratic:
      return diag_.cwiseProduct(x);
    case MapKind::kSplineElementwise: {
      DualVector y(dim_);
      for (const auto& b : blocks_) {
        const auto& s = splines_[static_cast<std::size_t>(b.spline)];
        for (Index i = b.start; i < b.start + b.length; ++i) y[i] = s.eval(x[i]);
      }
      return y;
    }
  }
  return x;
}

PrimalVector MirrorMap::inverse(const DualVector& y) const {
  check_dim(y, "inverse");
  require_finite(y, "inverse");
  switch (kind_) {
    case MapKind::kEuclidean:
      return y;
    case MapKind::kDiagonalQuadratic:
      return y.cwiseQuotient(diag_);
    case MapKind::kSplineElementwise: {
      PrimalVector x(dim_);
      for (const auto& b : blocks_) {
        const auto& s = splines_[static_cast<std::size_t>(b.spline)];
        for (Index i = b.start; i < b.start + b.length; ++i) x[i] = s.inverse(y[i]);
      }
      return x;
    }
  }
  return y;
}

double MirrorMap::potential(const PrimalVector& x) const {
  check_dim(x, "potential");
  switch (kind_) {
    case MapKind::kEuclidean:
      return 0.5 * x.squaredNorm();
    case MapKind::kDiagonalQuadratic:
      return 0.5 * x.dot(diag_.cwiseProduct(x));
    case MapKind::kSplineElementwise: {
      double total = 0.0;
      for (const auto& b : blocks_) {
        const auto& s = splines_[static_cast<std::size_t>(b.spline)];
        for (Index i = b.start; i < b.start + b.length; ++i) total += s.potential(x[i]);
      }
      return total;
    }
  }
  return 0.0;
}

double MirrorMap::bregman(const PrimalVector& x, const PrimalVector& y) const {
  check_dim(x, "bregman");
  check_dim(y, "bregman");
  switch (kind_) {
    case MapKind::kEuclidean:
      return 0.5 * (x - y).squaredNorm();
    case MapKind::kDiagonalQuadratic: {
      const Vector d = x - y;
      return 0.5 * d.dot(diag_.cwiseProduct(d));
    }
    case MapKind::kSplineElementwise: {
      double total = 0.0;
      for (const auto& b : blocks_) {
        const auto& s = splines_[static_cast<std::size_t>(b.spline)];
        for (Index i = b.start; i < b.start + b.length; ++i) total += s.bregman(x[i], y[i]);
      }
      return total;
    }
  }
  return 0.0;
}

PrimalVector MirrorMap::prox_mapping(const PrimalVector& x, const DualVector& y) const {
  check_dim(x, "prox_mapping");
  check_dim(y, "prox_mapping");
  return inverse(forward(x) - y);
}

double MirrorMap::consistency_error(const PrimalVector& x) const { return (inverse(forward(x)) - x).norm(); }

Vector MirrorMap::params() const {
  switch (kind_) {
    case MapKind::kEuclidean:
      return Vector();
    case MapKind::kDiagonalQuadratic:
      return diag_;
    case MapKind::kSplineElementwise: {
      Vector p(static_cast<Index>(splines_.size()) * MonotoneSpline::kParamCount);
      Index at = 0;
      for (const auto& s : splines_) {
        for (double u : s.params()) p[at++] = u;
      }
      return p;
    }
  }
  return Vector();
}

nlohmann::json MirrorMap::to_json() const {
  nlohmann::json doc;
  doc["kind"] = to_string(kind_);
  doc["dimension"] = dim_;
  const Vector p = params();
  doc["params"] = std::vector<double>(p.data(), p.data() + p.size());
  doc["alpha"] = alpha();
  if (kind_ == MapKind::kSplineElementwise && splines_.size() > 1) {
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& b : blocks_) blocks.push_back({b.start, b.length, b.spline});
    doc["blocks"] = std::move(blocks);
  }
  return doc;
}

MirrorMap MirrorMap::from_json(const nlohmann::json& doc) {
  try {
    const MapKind kind = map_kind_from_string(doc.at("kind").get<std::string>());
    const Index dim = doc.at("dimension").get<Index>();
    const auto p = doc.at("params").get<std::vector<double>>();
    switch (kind) {
      case MapKind::kEuclidean:
        if (!p.empty()) throw ConfigError("euclidean map takes no parameters");
        return euclidean(dim);
      case MapKind::kDiagonalQuadratic: {
        if (static_cast<Index>(p.size()) != dim) throw DimensionError("diagonal map parameter count != dimension");
        return diagonal(Eigen::Map<const Vector>(p.data(), dim));
      }
      case MapKind::kSplineElementwise: {
        if (p.empty() || p.size() % MonotoneSpline::kParamCount != 0) {
          throw DimensionError(fmt::format("spline map needs a multiple of {} parameters", MonotoneSpline::kParamCount));
        }
        std::vector<MonotoneSpline> splines;
        for (std::size_t at = 0; at < p.size(); at += MonotoneSpline::kParamCount) {
          splines.push_back(MonotoneSpline::from_params(std::span(p).subspan(at, MonotoneSpline::kParamCount)));
        }
        std::vector<SplineBlock> blocks;
        if (doc.contains("blocks")) {
          for (const auto& b : doc.at("blocks")) {
            blocks.push_back(SplineBlock{b.at(0).get<Index>(), b.at(1).get<Index>(), b.at(2).get<int>()});
          }
        } else {
          blocks.push_back(SplineBlock{0, dim, 0});
        }
        return spline(dim, std::move(splines), std::move(blocks));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed mirror map document: {}", e.what()));
  }
  throw ConfigError("malformed mirror map document");
}

}  // namespace mirror_opt
