// Copyright 2026 The misfeat Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "misfeat/error.hpp"
#include "misfeat/feature_subset.hpp"

namespace misfeat {

enum class EdgeFamily {
  kInterLevelDown,  // S -> S minus one feature
  kInterLevelUp,    // S -> S plus one feature
  kInterLevel,      // both directions
  kIntraLevel,      // same level, overlap of level - 1
  kInterLattice,    // same subset, other subgroups
};

struct NodeRef {
  int subgroup = 0;
  FeatureSubset subset;

  auto operator<=>(const NodeRef&) const = default;
};

struct StructuralCounts {
  std::uint64_t nodes = 0;
  std::uint64_t inter_level_edges = 0;
  std::uint64_t intra_level_edges = 0;

  bool operator==(const StructuralCounts&) const = default;
};

// Closed-form sizes of one subgroup lattice restricted to level bounds:
// C(n,l) nodes per level, l inter-level edges below each node of level l
// (when level l-1 is kept), l(n-l)/2 intra-level edges per node of level l.
inline StructuralCounts structural_counts(int n, LevelBounds bounds) {
  if (n < 1) throw ValidationError("structural_counts: n must be >= 1");
  StructuralCounts c;
  for (int l = bounds.min; l <= bounds.max; ++l) {
    const std::uint64_t nodes = binomial(n, l);
    c.nodes += nodes;
    if (l >= 2 && l - 1 >= bounds.min) c.inter_level_edges += nodes * static_cast<std::uint64_t>(l);
    if (l >= 2) c.intra_level_edges += nodes * static_cast<std::uint64_t>(l) * static_cast<std::uint64_t>(n - l) / 2;
  }
  return c;
}

inline StructuralCounts structural_counts(int n) { return structural_counts(n, LevelBounds::full(n)); }

// One lattice over n features: nodes in ascending bitmask order and
// adjacency lists (ascending node index) for each intra-lattice family. All
// subgroups share this topology; only their labels differ.
class LatticeTopology {
 public:
  LatticeTopology() = default;
  LatticeTopology(int n, LevelBounds bounds) : n_(n), bounds_(bounds) {
    if (n < 1 || n > kMaxFeatures) throw ValidationError("lattice: feature count out of range");
    validate_bounds(bounds, n);
    index_.assign(std::size_t{1} << n, -1);
    for_each_subset(full_mask(n), bounds, [&](Mask s) {
      index_[s] = static_cast<int>(nodes_.size());
      nodes_.push_back(s);
    });
    down_.resize(nodes_.size());
    up_.resize(nodes_.size());
    intra_.resize(nodes_.size());
    for (std::size_t v = 0; v < nodes_.size(); ++v) {
      const Mask s = nodes_[v];
      for (int f = 0; f < n; ++f) {
        const Mask bit = Mask{1} << f;
        if (!(s & bit)) continue;
        const int u = index_[s & ~bit];
        if (u >= 0) {
          down_[v].push_back(u);
          up_[static_cast<std::size_t>(u)].push_back(static_cast<int>(v));
        }
        if (std::popcount(s) < 2) continue;
        for (int g = 0; g < n; ++g) {
          const Mask gbit = Mask{1} << g;
          if (s & gbit) continue;
          const int w = index_[(s & ~bit) | gbit];
          if (w >= 0) intra_[v].push_back(w);
        }
      }
    }
    for (auto* lists : {&down_, &up_, &intra_}) {
      for (auto& l : *lists) std::sort(l.begin(), l.end());
    }
  }

  int n_features() const { return n_; }
  const LevelBounds& bounds() const { return bounds_; }
  std::size_t size() const { return nodes_.size(); }
  Mask node(std::size_t v) const { return nodes_[v]; }
  const std::vector<Mask>& nodes() const { return nodes_; }

  int index_of(Mask s) const { return s < index_.size() ? index_[s] : -1; }

  const std::vector<int>& down(std::size_t v) const { return down_[v]; }
  const std::vector<int>& up(std::size_t v) const { return up_[v]; }
  const std::vector<int>& intra(std::size_t v) const { return intra_[v]; }

  // Message-passing neighborhood: both inter-level directions and the
  // intra-level family, ascending.
  std::vector<int> pooled(std::size_t v) const {
    std::vector<int> out;
    out.reserve(down_[v].size() + up_[v].size() + intra_[v].size());
    out.insert(out.end(), down_[v].begin(), down_[v].end());
    out.insert(out.end(), up_[v].begin(), up_[v].end());
    out.insert(out.end(), intra_[v].begin(), intra_[v].end());
    std::sort(out.begin(), out.end());
    return out;
  }

  std::uint64_t inter_level_edge_count() const {
    std::uint64_t c = 0;
    for (const auto& l : down_) c += l.size();
    return c;
  }

  std::uint64_t intra_level_edge_count() const {
    std::uint64_t c = 0;
    for (const auto& l : intra_) c += l.size();
    return c / 2;
  }

 private:
  int n_ = 0;
  LevelBounds bounds_;
  std::vector<Mask> nodes_;
  std::vector<int> index_;
  std::vector<std::vector<int>> down_, up_, intra_;
};

// Multiplex of per-subgroup lattices. Inter-lattice edges connect each
// subset to its copies in every other subgroup and are implicit in the node
// numbering: global id = subgroup * lattice size + local index.
class MultiplexGraph {
 public:
  MultiplexGraph() = default;
  MultiplexGraph(int n, std::vector<Mask> missing_per_subgroup, LevelBounds bounds)
      : topo_(n, bounds), missing_(std::move(missing_per_subgroup)) {
    if (n < 1) throw ValidationError("multiplex: n must be >= 1");
    if (missing_.empty()) throw ValidationError("multiplex: at least one subgroup is required");
    labels_.assign(missing_.size(), std::vector<double>(topo_.size(), std::numeric_limits<double>::quiet_NaN()));
  }

  const LatticeTopology& topology() const { return topo_; }
  int n_features() const { return topo_.n_features(); }
  int n_subgroups() const { return static_cast<int>(missing_.size()); }
  const LevelBounds& bounds() const { return topo_.bounds(); }
  std::size_t lattice_size() const { return topo_.size(); }
  std::size_t node_count() const { return topo_.size() * missing_.size(); }
  Mask missing(int subgroup) const { return missing_[static_cast<std::size_t>(subgroup)]; }

  bool computable(int subgroup, std::size_t v) const { return (topo_.node(v) & missing(subgroup)) == 0; }

  std::uint64_t inter_level_edge_count() const { return topo_.inter_level_edge_count() * missing_.size(); }
  std::uint64_t intra_level_edge_count() const { return topo_.intra_level_edge_count() * missing_.size(); }
  std::uint64_t inter_lattice_edge_count() const {
    const std::uint64_t p = missing_.size();
    return p * (p - 1) / 2 * topo_.size();
  }

  std::size_t local_index(const NodeRef& node) const {
    if (node.subgroup < 0 || node.subgroup >= n_subgroups()) throw ValidationError("graph: unknown subgroup");
    const int v = topo_.index_of(node.subset.bits());
    if (v < 0) throw ValidationError("graph: subset " + node.subset.to_string(n_features()) + " is not a node");
    return static_cast<std::size_t>(v);
  }

  // Neighbors in ascending bitmask order, then subgroup index.
  std::vector<NodeRef> neighbors(const NodeRef& node, EdgeFamily family) const {
    const std::size_t v = local_index(node);
    std::vector<NodeRef> out;
    auto add = [&](const std::vector<int>& list) {
      for (int u : list) out.push_back({node.subgroup, FeatureSubset(topo_.node(static_cast<std::size_t>(u)))});
    };
    switch (family) {
      case EdgeFamily::kInterLevelDown: add(topo_.down(v)); break;
      case EdgeFamily::kInterLevelUp: add(topo_.up(v)); break;
      case EdgeFamily::kInterLevel:
        add(topo_.down(v));
        add(topo_.up(v));
        break;
      case EdgeFamily::kIntraLevel: add(topo_.intra(v)); break;
      case EdgeFamily::kInterLattice:
        for (int j = 0; j < n_subgroups(); ++j) {
          if (j != node.subgroup) out.push_back({j, node.subset});
        }
        break;
    }
    std::sort(out.begin(), out.end(), [](const NodeRef& a, const NodeRef& b) {
      return a.subset.bits() != b.subset.bits() ? a.subset.bits() < b.subset.bits() : a.subgroup < b.subgroup;
    });
    return out;
  }

  // Exact-MI label slots; NaN marks an unlabeled node.
  bool labeled(int subgroup, std::size_t v) const { return !std::isnan(label(subgroup, v)); }
  double label(int subgroup, std::size_t v) const { return labels_[static_cast<std::size_t>(subgroup)][v]; }
  const std::vector<double>& labels(int subgroup) const { return labels_[static_cast<std::size_t>(subgroup)]; }

  void set_label(int subgroup, Mask subset, double mi) {
    const std::size_t v = local_index({subgroup, FeatureSubset(subset)});
    if (!computable(subgroup, v)) {
      throw ValidationError("graph: cannot label " + FeatureSubset(subset).to_string(n_features()) +
                            "; it contains a missing feature");
    }
    labels_[static_cast<std::size_t>(subgroup)][v] = mi;
  }

  void clear_labels(int subgroup) {
    auto& l = labels_[static_cast<std::size_t>(subgroup)];
    std::fill(l.begin(), l.end(), std::numeric_limits<double>::quiet_NaN());
  }

 private:
  LatticeTopology topo_;
  std::vector<Mask> missing_;
  std::vector<std::vector<double>> labels_;
};

template <class Subgroups>
MultiplexGraph build_multiplex(int n, const Subgroups& subgroups, LevelBounds bounds) {
  if (n < 2) throw ValidationError("build_multiplex: n must be >= 2");
  std::vector<Mask> missing;
  for (const auto& sg : subgroups) missing.push_back(sg.missing);
  return MultiplexGraph(n, std::move(missing), bounds);
}

inline nlohmann::json to_json(const MultiplexGraph& g) {
  const auto& topo = g.topology();
  const int n = g.n_features();
  nlohmann::json j;
  j["n_features"] = n;
  j["n_subgroups"] = g.n_subgroups();
  j["level_min"] = g.bounds().min;
  j["level_max"] = g.bounds().max;
  j["counts"] = {{"nodes", g.node_count()},
                 {"inter_level", g.inter_level_edge_count()},
                 {"intra_level", g.intra_level_edge_count()},
                 {"inter_lattice", g.inter_lattice_edge_count()}};
  auto& nodes = j["nodes"] = nlohmann::json::array();
  for (int i = 0; i < g.n_subgroups(); ++i) {
    for (std::size_t v = 0; v < topo.size(); ++v) {
      nodes.push_back({{"subgroup", i},
                       {"bitmask", topo.node(v)},
                       {"bits", FeatureSubset(topo.node(v)).to_string(n)},
                       {"level", std::popcount(topo.node(v))},
                       {"computable", g.computable(i, v)},
                       {"labeled", g.labeled(i, v)}});
    }
  }
  // Intra-lattice edges are identical in every subgroup; listed once as
  // bitmask pairs (smaller first).
  auto& inter = j["edges"]["inter_level"] = nlohmann::json::array();
  auto& intra = j["edges"]["intra_level"] = nlohmann::json::array();
  for (std::size_t v = 0; v < topo.size(); ++v) {
    for (int u : topo.down(v)) inter.push_back({topo.node(static_cast<std::size_t>(u)), topo.node(v)});
    for (int u : topo.intra(v)) {
      if (static_cast<std::size_t>(u) > v) intra.push_back({topo.node(v), topo.node(static_cast<std::size_t>(u))});
    }
  }
  auto& pairs = j["edges"]["inter_lattice_pairs"] = nlohmann::json::array();
  for (int a = 0; a < g.n_subgroups(); ++a) {
    for (int b = a + 1; b < g.n_subgroups(); ++b) pairs.push_back({a, b});
  }
  return j;
}

}  // namespace misfeat
