#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mirror_opt/mirror_map.hpp"
#include "mirror_opt/networks.hpp"

namespace mirror_opt {

/// Partition of parameter indices into orbits whose optimizer parameters are tied.
struct TyingSchema {
  Index total_dim = 0;
  std::vector<std::vector<Index>> orbits;
  std::vector<std::string> labels;

  Index num_orbits() const { return static_cast<Index>(orbits.size()); }
  /// Throws unless the orbits are nonempty, disjoint and cover [0, total_dim).
  void validate() const;
  /// orbit_of()[i] is the orbit containing index i.
  std::vector<Index> orbit_of() const;
  /// Contiguous runs of each orbit, with the orbit number as spline index.
  std::vector<SplineBlock> spline_blocks() const;

  nlohmann::json to_json() const;
  static TyingSchema from_json(const nlohmann::json& doc);
};

enum class TyingGranularity {
  /// Orbits of the hidden-unit permutation group.
  kOrbit,
  /// One group per weight matrix and per bias vector.
  kLayer,
};

/// Orbits of {0..dim-1} under the group generated by the given index permutations.
std::vector<std::vector<Index>> orbits_from_generators(Index dim, const std::vector<std::vector<Index>>& generators);

TyingSchema build_tying_schema(const DenseArchitecture& arch, TyingGranularity granularity = TyingGranularity::kOrbit);
/// Kernel entries tied across channels, conv bias tied, and each dense output row tied
/// across all pooled features.
TyingSchema build_tying_schema(const ConvArchitecture& arch);

Vector expand_tied(const TyingSchema& schema, const Vector& tied);

enum class ContractMode { kMean, kFirst };
Vector contract_tied(const TyingSchema& schema, const Vector& full, ContractMode mode = ContractMode::kMean);

/// Permutation symmetry of a network, acting on flat parameter vectors by
/// (g.z)[i] = z[index_perm[i]].
struct GroupElement {
  std::vector<std::vector<Index>> layer_perms;
  std::vector<Index> index_perm;

  Vector apply(const Vector& z) const;
};

/// Hidden-unit permutations, one per hidden layer.
GroupElement make_group_element(const DenseArchitecture& arch, std::vector<std::vector<Index>> hidden_perms);
GroupElement sample_group_element(const DenseArchitecture& arch, std::mt19937_64& rng);
/// Channel permutation of the convolutional layer.
GroupElement make_group_element(const ConvArchitecture& arch, std::vector<Index> channel_perm);
GroupElement sample_group_element(const ConvArchitecture& arch, std::mt19937_64& rng);

/// Index permutations of the transpositions (0 j) in every hidden layer.
std::vector<std::vector<Index>> group_generators(const DenseArchitecture& arch);
std::vector<std::vector<Index>> group_generators(const ConvArchitecture& arch);

/// || step(g.z) - g.step(z) ||_inf.
double check_equivariance(const std::function<Vector(const Vector&)>& step, const GroupElement& g, const Vector& z);

struct OrbitStats {
  double mean = 0.0;
  double std = 0.0;
};

struct GroupingStatistic {
  std::vector<OrbitStats> orbits;
  double max_within_std = 0.0;
  double between_std = 0.0;
  /// max_within_std / between_std.
  double ratio = 0.0;
};

GroupingStatistic grouping_statistic(const TyingSchema& schema, const Vector& full);

}  // namespace mirror_opt
