#include "mirror_opt/equivariance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "mirror_opt/error.hpp"

namespace mirror_opt {

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(Index n) : parent_(static_cast<std::size_t>(n)) {
    std::iota(parent_.begin(), parent_.end(), Index{0});
  }
  Index find(Index i) {
    while (parent_[static_cast<std::size_t>(i)] != i) {
      auto& p = parent_[static_cast<std::size_t>(i)];
      p = parent_[static_cast<std::size_t>(p)];
      i = p;
    }
    return i;
  }
  void unite(Index a, Index b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }

 private:
  std::vector<Index> parent_;
};

std::vector<Index> identity_perm(Index n) {
  std::vector<Index> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), Index{0});
  return p;
}

void check_perm(const std::vector<Index>& p, Index n, const char* what) {
  if (static_cast<Index>(p.size()) != n) throw DimensionError(fmt::format("{}: permutation of length {} expected", what, n));
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  for (Index v : p) {
    if (v < 0 || v >= n || seen[static_cast<std::size_t>(v)]) throw ConfigError(fmt::format("{}: not a permutation", what));
    seen[static_cast<std::size_t>(v)] = true;
  }
}

struct DenseCoord {
  Index layer;
  bool bias;
  Index p;
  Index q;
};

DenseCoord decode(const DenseArchitecture& arch, Index i) {
  for (Index l = 1; l <= arch.num_layers(); ++l) {
    const Index rows = arch.layer_sizes[static_cast<std::size_t>(l)];
    const Index w = arch.weight_offset(l);
    const Index b = arch.bias_offset(l);
    if (i < b) return DenseCoord{l, false, (i - w) % rows, (i - w) / rows};
    if (i < b + rows) return DenseCoord{l, true, i - b, 0};
  }
  throw DimensionError("parameter index outside the network");
}

std::string dense_label(const DenseArchitecture& arch, const std::vector<Index>& orbit) {
  const DenseCoord first = decode(arch, orbit.front());
  std::set<Index> ps, qs;
  for (Index i : orbit) {
    const DenseCoord c = decode(arch, i);
    ps.insert(c.p);
    qs.insert(c.q);
  }
  if (first.bias) {
    if (ps.size() == 1) return fmt::format("b{} entry {}", first.layer, first.p);
    return fmt::format("b{} block", first.layer);
  }
  if (ps.size() > 1 && qs.size() == 1) return fmt::format("A{} row-block input-dim {}", first.layer, first.q);
  if (ps.size() == 1 && qs.size() > 1) return fmt::format("A{} output-row {}", first.layer, first.p);
  if (ps.size() == 1) return fmt::format("A{} entry ({}, {})", first.layer, first.p, first.q);
  return fmt::format("A{} block", first.layer);
}

}  // namespace

void TyingSchema::validate() const {
  if (labels.size() != orbits.size()) throw ConfigError("schema: one label per orbit required");
  std::vector<bool> seen(static_cast<std::size_t>(total_dim), false);
  Index covered = 0;
  for (const auto& o : orbits) {
    if (o.empty()) throw ConfigError("schema: empty orbit");
    for (Index i : o) {
      if (i < 0 || i >= total_dim) throw ConfigError(fmt::format("schema: index {} out of range", i));
      if (seen[static_cast<std::size_t>(i)]) throw ConfigError(fmt::format("schema: index {} in two orbits", i));
      seen[static_cast<std::size_t>(i)] = true;
      ++covered;
    }
  }
  if (covered != total_dim) throw ConfigError("schema: orbits do not cover every index");
}

std::vector<Index> TyingSchema::orbit_of() const {
  std::vector<Index> of(static_cast<std::size_t>(total_dim), -1);
  for (std::size_t o = 0; o < orbits.size(); ++o) {
    for (Index i : orbits[o]) of[static_cast<std::size_t>(i)] = static_cast<Index>(o);
  }
  return of;
}

std::vector<SplineBlock> TyingSchema::spline_blocks() const {
  std::vector<SplineBlock> blocks;
  const std::vector<Index> of = orbit_of();
  Index start = 0;
  for (Index i = 1; i <= total_dim; ++i) {
    if (i == total_dim || of[static_cast<std::size_t>(i)] != of[static_cast<std::size_t>(start)]) {
      blocks.push_back(SplineBlock{start, i - start, static_cast<int>(of[static_cast<std::size_t>(start)])});
      start = i;
    }
  }
  return blocks;
}

nlohmann::json TyingSchema::to_json() const {
  nlohmann::json doc;
  doc["total_dim"] = total_dim;
  doc["orbits"] = orbits;
  doc["labels"] = labels;
  return doc;
}

TyingSchema TyingSchema::from_json(const nlohmann::json& doc) {
  TyingSchema s;
  try {
    s.total_dim = doc.at("total_dim").get<Index>();
    s.orbits = doc.at("orbits").get<std::vector<std::vector<Index>>>();
    s.labels = doc.at("labels").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed schema document: {}", e.what()));
  }
  s.validate();
  return s;
}

std::vector<std::vector<Index>> orbits_from_generators(Index dim, const std::vector<std::vector<Index>>& generators) {
  DisjointSets sets(dim);
  for (const auto& g : generators) {
    check_perm(g, dim, "generator");
    for (Index i = 0; i < dim; ++i) sets.unite(i, g[static_cast<std::size_t>(i)]);
  }
  // Orbits ordered by smallest member, members ascending.
  std::vector<std::vector<Index>> orbits;
  std::vector<Index> slot(static_cast<std::size_t>(dim), -1);
  for (Index i = 0; i < dim; ++i) {
    const Index root = sets.find(i);
    auto& s = slot[static_cast<std::size_t>(root)];
    if (s < 0) {
      s = static_cast<Index>(orbits.size());
      orbits.emplace_back();
    }
    orbits[static_cast<std::size_t>(s)].push_back(i);
  }
  return orbits;
}

GroupElement make_group_element(const DenseArchitecture& arch, std::vector<std::vector<Index>> hidden_perms) {
  arch.validate();
  const Index layers = arch.num_layers();
  if (static_cast<Index>(hidden_perms.size()) != layers - 1) {
    throw DimensionError(fmt::format("group element: {} hidden permutations expected", layers - 1));
  }
  // rho_0 and rho_L are identities.
  std::vector<std::vector<Index>> rho;
  rho.push_back(identity_perm(arch.layer_sizes.front()));
  for (Index l = 1; l < layers; ++l) {
    check_perm(hidden_perms[static_cast<std::size_t>(l - 1)], arch.layer_sizes[static_cast<std::size_t>(l)],
               "hidden permutation");
    rho.push_back(hidden_perms[static_cast<std::size_t>(l - 1)]);
  }
  rho.push_back(identity_perm(arch.layer_sizes.back()));
  GroupElement g;
  g.layer_perms = std::move(hidden_perms);
  g.index_perm.resize(static_cast<std::size_t>(arch.num_params()));
  for (Index l = 1; l <= layers; ++l) {
    const auto& out = rho[static_cast<std::size_t>(l)];
    const auto& in = rho[static_cast<std::size_t>(l - 1)];
    for (Index q = 0; q < static_cast<Index>(in.size()); ++q) {
      for (Index p = 0; p < static_cast<Index>(out.size()); ++p) {
        g.index_perm[static_cast<std::size_t>(arch.weight_index(l, p, q))] =
            arch.weight_index(l, out[static_cast<std::size_t>(p)], in[static_cast<std::size_t>(q)]);
      }
    }
    for (Index p = 0; p < static_cast<Index>(out.size()); ++p) {
      g.index_perm[static_cast<std::size_t>(arch.bias_index(l, p))] = arch.bias_index(l, out[static_cast<std::size_t>(p)]);
    }
  }
  return g;
}

GroupElement sample_group_element(const DenseArchitecture& arch, std::mt19937_64& rng) {
  std::vector<std::vector<Index>> perms;
  for (Index l = 1; l < arch.num_layers(); ++l) {
    auto p = identity_perm(arch.layer_sizes[static_cast<std::size_t>(l)]);
    std::shuffle(p.begin(), p.end(), rng);
    perms.push_back(std::move(p));
  }
  return make_group_element(arch, std::move(perms));
}

GroupElement make_group_element(const ConvArchitecture& arch, std::vector<Index> channel_perm) {
  arch.validate();
  check_perm(channel_perm, arch.channels, "channel permutation");
  const Index ch = arch.channels;
  const Index kk = arch.kernel * arch.kernel;
  const Index per_channel = arch.pooled_size() * arch.pooled_size();
  GroupElement g;
  g.index_perm = identity_perm(arch.num_params());
  auto& perm = g.index_perm;
  for (Index c = 0; c < ch; ++c) {
    const Index pc = channel_perm[static_cast<std::size_t>(c)];
    for (Index e = 0; e < kk; ++e) perm[static_cast<std::size_t>(c + ch * e)] = pc + ch * e;
    perm[static_cast<std::size_t>(arch.conv_bias_offset() + c)] = arch.conv_bias_offset() + pc;
    for (Index pos = 0; pos < per_channel; ++pos) {
      for (Index o = 0; o < arch.classes; ++o) {
        const Index f = c * per_channel + pos;
        const Index pf = pc * per_channel + pos;
        perm[static_cast<std::size_t>(arch.dense_offset() + o + arch.classes * f)] =
            arch.dense_offset() + o + arch.classes * pf;
      }
    }
  }
  g.layer_perms.push_back(std::move(channel_perm));
  return g;
}

GroupElement sample_group_element(const ConvArchitecture& arch, std::mt19937_64& rng) {
  auto p = identity_perm(arch.channels);
  std::shuffle(p.begin(), p.end(), rng);
  return make_group_element(arch, std::move(p));
}

std::vector<std::vector<Index>> group_generators(const DenseArchitecture& arch) {
  std::vector<std::vector<Index>> gens;
  for (Index l = 1; l < arch.num_layers(); ++l) {
    const Index d = arch.layer_sizes[static_cast<std::size_t>(l)];
    for (Index j = 1; j < d; ++j) {
      std::vector<std::vector<Index>> perms;
      for (Index m = 1; m < arch.num_layers(); ++m) {
        perms.push_back(identity_perm(arch.layer_sizes[static_cast<std::size_t>(m)]));
      }
      std::swap(perms[static_cast<std::size_t>(l - 1)][0], perms[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(j)]);
      gens.push_back(make_group_element(arch, std::move(perms)).index_perm);
    }
  }
  return gens;
}

std::vector<std::vector<Index>> group_generators(const ConvArchitecture& arch) {
  std::vector<std::vector<Index>> gens;
  for (Index j = 1; j < arch.channels; ++j) {
    auto p = identity_perm(arch.channels);
    std::swap(p[0], p[static_cast<std::size_t>(j)]);
    gens.push_back(make_group_element(arch, std::move(p)).index_perm);
  }
  return gens;
}

TyingSchema build_tying_schema(const DenseArchitecture& arch, TyingGranularity granularity) {
  arch.validate();
  TyingSchema s;
  s.total_dim = arch.num_params();
  if (granularity == TyingGranularity::kLayer) {
    for (Index l = 1; l <= arch.num_layers(); ++l) {
      std::vector<Index> w(static_cast<std::size_t>(arch.bias_offset(l) - arch.weight_offset(l)));
      std::iota(w.begin(), w.end(), arch.weight_offset(l));
      std::vector<Index> b(static_cast<std::size_t>(arch.layer_sizes[static_cast<std::size_t>(l)]));
      std::iota(b.begin(), b.end(), arch.bias_offset(l));
      s.orbits.push_back(std::move(w));
      s.labels.push_back(fmt::format("A{}", l));
      s.orbits.push_back(std::move(b));
      s.labels.push_back(fmt::format("b{}", l));
    }
  } else {
    s.orbits = orbits_from_generators(s.total_dim, group_generators(arch));
    for (const auto& o : s.orbits) s.labels.push_back(dense_label(arch, o));
  }
  s.validate();
  return s;
}

TyingSchema build_tying_schema(const ConvArchitecture& arch) {
  arch.validate();
  TyingSchema s;
  s.total_dim = arch.num_params();
  const Index ch = arch.channels;
  for (Index e = 0; e < arch.kernel * arch.kernel; ++e) {
    std::vector<Index> o;
    for (Index c = 0; c < ch; ++c) o.push_back(c + ch * e);
    s.orbits.push_back(std::move(o));
    s.labels.push_back(fmt::format("K entry ({}, {}) across channels", e / arch.kernel, e % arch.kernel));
  }
  std::vector<Index> bias(static_cast<std::size_t>(ch));
  std::iota(bias.begin(), bias.end(), arch.conv_bias_offset());
  s.orbits.push_back(std::move(bias));
  s.labels.push_back("conv bias across channels");
  for (Index o = 0; o < arch.classes; ++o) {
    std::vector<Index> row;
    for (Index f = 0; f < arch.features(); ++f) row.push_back(arch.dense_offset() + o + arch.classes * f);
    s.orbits.push_back(std::move(row));
    s.labels.push_back(fmt::format("W output-row {} across all {} pooled features (imposed, not induced)", o,
                                   arch.features()));
  }
  for (Index o = 0; o < arch.classes; ++o) {
    s.orbits.push_back({arch.dense_bias_offset() + o});
    s.labels.push_back(fmt::format("dense bias entry {}", o));
  }
  // Orbits ordered by smallest member so documents diff cleanly.
  std::vector<std::size_t> order(s.orbits.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.orbits[a][0] < s.orbits[b][0]; });
  TyingSchema sorted;
  sorted.total_dim = s.total_dim;
  for (std::size_t i : order) {
    sorted.orbits.push_back(std::move(s.orbits[i]));
    sorted.labels.push_back(std::move(s.labels[i]));
  }
  sorted.validate();
  return sorted;
}

Vector expand_tied(const TyingSchema& schema, const Vector& tied) {
  if (tied.size() != schema.num_orbits()) {
    throw DimensionError(fmt::format("expand_tied: {} values for {} orbits", tied.size(), schema.num_orbits()));
  }
  Vector full(schema.total_dim);
  for (std::size_t o = 0; o < schema.orbits.size(); ++o) {
    for (Index i : schema.orbits[o]) full[i] = tied[static_cast<Index>(o)];
  }
  return full;
}

Vector contract_tied(const TyingSchema& schema, const Vector& full, ContractMode mode) {
  if (full.size() != schema.total_dim) {
    throw DimensionError(fmt::format("contract_tied: vector of {} for dimension {}", full.size(), schema.total_dim));
  }
  Vector tied(schema.num_orbits());
  for (std::size_t o = 0; o < schema.orbits.size(); ++o) {
    const auto& orbit = schema.orbits[o];
    if (mode == ContractMode::kFirst) {
      tied[static_cast<Index>(o)] = full[orbit.front()];
    } else {
      double sum = 0.0;
      for (Index i : orbit) sum += full[i];
      tied[static_cast<Index>(o)] = sum / static_cast<double>(orbit.size());
    }
  }
  return tied;
}

Vector GroupElement::apply(const Vector& z) const {
  if (z.size() != static_cast<Index>(index_perm.size())) throw DimensionError("group element: dimension mismatch");
  Vector out(z.size());
  for (std::size_t i = 0; i < index_perm.size(); ++i) out[static_cast<Index>(i)] = z[index_perm[i]];
  return out;
}

double check_equivariance(const std::function<Vector(const Vector&)>& step, const GroupElement& g, const Vector& z) {
  const Vector a = step(g.apply(z));
  const Vector b = g.apply(step(z));
  if (a.size() != b.size()) throw DimensionError("check_equivariance: step changed the dimension");
  return (a - b).cwiseAbs().maxCoeff();
}

GroupingStatistic grouping_statistic(const TyingSchema& schema, const Vector& full) {
  if (full.size() != schema.total_dim) throw DimensionError("grouping_statistic: length mismatch");
  GroupingStatistic out;
  Vector means(schema.num_orbits());
  for (std::size_t o = 0; o < schema.orbits.size(); ++o) {
    const auto& orbit = schema.orbits[o];
    if (orbit.empty()) throw ConfigError("grouping_statistic: empty orbit");
    OrbitStats st;
    for (Index i : orbit) st.mean += full[i];
    st.mean /= static_cast<double>(orbit.size());
    double var = 0.0;
    for (Index i : orbit) var += (full[i] - st.mean) * (full[i] - st.mean);
    st.std = std::sqrt(var / static_cast<double>(orbit.size()));
    out.orbits.push_back(st);
    means[static_cast<Index>(o)] = st.mean;
    out.max_within_std = std::max(out.max_within_std, st.std);
  }
  out.between_std = std::sqrt((means.array() - means.mean()).square().mean());
  out.ratio = out.between_std > 0.0 ? out.max_within_std / out.between_std
                                    : (out.max_within_std > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  return out;
}

}  // namespace mirror_opt
