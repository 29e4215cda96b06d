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

#include <gtest/gtest.h>

#include <bit>
#include <set>
#include <string>
#include <vector>

#include "misfeat/lattice.hpp"

namespace misfeat {
namespace {

std::vector<std::string> bits(const std::vector<NodeRef>& nodes, int n) {
  std::vector<std::string> out;
  for (const auto& r : nodes) out.push_back(r.subset.to_string(n));
  return out;
}

struct Stub {
  Mask missing = 0;
};

MultiplexGraph graph(int n, int subgroups, LevelBounds bounds) {
  return build_multiplex(n, std::vector<Stub>(static_cast<std::size_t>(subgroups)), bounds);
}

TEST(Encode, ExamplesFromFourFeatures) {
  EXPECT_EQ(encode({0, 2}, 4).to_string(4), "0101");
  EXPECT_EQ(encode({0}, 4).to_string(4), "0001");
  EXPECT_EQ(encode({0, 1, 2, 3}, 4).to_string(4), "1111");
}

TEST(Encode, RoundTripsEverySubset) {
  for (int n = 1; n <= 8; ++n) {
    for (Mask s = 1; s <= full_mask(n); ++s) {
      const FeatureSubset fs(s);
      EXPECT_EQ(encode(decode(fs), n), fs);
      EXPECT_EQ(parse_subset(fs.to_string(n)), fs);
    }
  }
}

TEST(Encode, RejectsEmptyAndOutOfRange) {
  EXPECT_THROW(encode({}, 4), ValidationError);
  EXPECT_THROW(encode({4}, 4), ValidationError);
  EXPECT_THROW(encode({-1}, 4), ValidationError);
  EXPECT_THROW(decode(FeatureSubset(0)), ValidationError);
}

TEST(StructuralCounts, ClosedFormExamples) {
  EXPECT_EQ(structural_counts(4), (StructuralCounts{15, 28, 18}));
  EXPECT_EQ(structural_counts(1), (StructuralCounts{1, 0, 0}));
  std::uint64_t intra = 0;
  for (int l = 2; l <= 10; ++l) intra += binomial(10, l) * static_cast<std::uint64_t>(l * (10 - l)) / 2;
  EXPECT_EQ(structural_counts(10), (StructuralCounts{1023, 5110, intra}));
}

TEST(StructuralCounts, BuiltTopologyMatchesForAllSmallN) {
  for (int n = 1; n <= 12; ++n) {
    const LatticeTopology topo(n, LevelBounds::full(n));
    const auto c = structural_counts(n);
    EXPECT_EQ(topo.size(), c.nodes) << n;
    EXPECT_EQ(topo.inter_level_edge_count(), c.inter_level_edges) << n;
    EXPECT_EQ(topo.intra_level_edge_count(), c.intra_level_edges) << n;
    EXPECT_EQ(c.nodes, (std::uint64_t{1} << n) - 1);
    EXPECT_EQ(2 * c.inter_level_edges, static_cast<std::uint64_t>(n) * ((std::uint64_t{1} << n) - 2));
  }
}

TEST(StructuralCounts, BoundedTopologyMatches) {
  for (int n = 2; n <= 9; ++n) {
    for (int lo = 1; lo <= n; ++lo) {
      for (int hi = lo; hi <= n; ++hi) {
        const LatticeTopology topo(n, {lo, hi});
        const auto c = structural_counts(n, {lo, hi});
        EXPECT_EQ(topo.size(), c.nodes);
        EXPECT_EQ(topo.inter_level_edge_count(), c.inter_level_edges);
        EXPECT_EQ(topo.intra_level_edge_count(), c.intra_level_edges);
      }
    }
  }
}

TEST(Multiplex, FourFeatureCounts) {
  const auto g = graph(4, 1, LevelBounds::full(4));
  EXPECT_EQ(g.node_count(), 15u);
  EXPECT_EQ(g.inter_level_edge_count(), 28u);
  EXPECT_EQ(g.intra_level_edge_count(), 18u);
  EXPECT_EQ(g.inter_lattice_edge_count(), 0u);
}

TEST(Multiplex, ThreeSubgroupCounts) {
  const auto g = graph(4, 3, LevelBounds::full(4));
  EXPECT_EQ(g.node_count(), 45u);
  EXPECT_EQ(g.inter_lattice_edge_count(), 45u);
}

TEST(Multiplex, DownNeighborsOf0111) {
  const auto g = graph(4, 1, LevelBounds::full(4));
  EXPECT_EQ(bits(g.neighbors({0, parse_subset("0111")}, EdgeFamily::kInterLevelDown), 4),
            (std::vector<std::string>{"0011", "0101", "0110"}));
}

TEST(Multiplex, IntraNeighborsOf0011) {
  const auto g = graph(4, 1, LevelBounds::full(4));
  const auto got = bits(g.neighbors({0, parse_subset("0011")}, EdgeFamily::kIntraLevel), 4);
  EXPECT_EQ(std::set<std::string>(got.begin(), got.end()),
            (std::set<std::string>{"0101", "1001", "0110", "1010"}));
  // Ascending bitmask order.
  EXPECT_EQ(got, (std::vector<std::string>{"0101", "0110", "1001", "1010"}));
}

TEST(Multiplex, EmptyNeighborhoods) {
  const auto g = graph(4, 1, LevelBounds::full(4));
  EXPECT_TRUE(g.neighbors({0, parse_subset("0100")}, EdgeFamily::kIntraLevel).empty());
  EXPECT_TRUE(g.neighbors({0, parse_subset("1111")}, EdgeFamily::kInterLevelUp).empty());
  EXPECT_TRUE(g.neighbors({0, parse_subset("1111")}, EdgeFamily::kInterLattice).empty());
}

TEST(Multiplex, InterLatticeIsCliqueAcrossSubgroups) {
  const auto g = graph(3, 4, LevelBounds::full(3));
  for (int i = 0; i < 4; ++i) {
    const auto nb = g.neighbors({i, FeatureSubset(0b101)}, EdgeFamily::kInterLattice);
    ASSERT_EQ(nb.size(), 3u);
    for (const auto& r : nb) {
      EXPECT_NE(r.subgroup, i);
      EXPECT_EQ(r.subset.bits(), 0b101u);
    }
  }
}

TEST(Multiplex, UnknownNodeRaises) {
  const auto g = graph(4, 2, {2, 3});
  EXPECT_THROW(g.neighbors({0, parse_subset("0001")}, EdgeFamily::kIntraLevel), ValidationError);
  EXPECT_THROW(g.neighbors({2, parse_subset("0011")}, EdgeFamily::kIntraLevel), ValidationError);
  EXPECT_THROW(g.neighbors({0, parse_subset("10000")}, EdgeFamily::kIntraLevel), ValidationError);
}

TEST(Multiplex, RejectsInvalidBoundsAndSizes) {
  EXPECT_THROW(graph(4, 1, {0, 2}), ValidationError);
  EXPECT_THROW(graph(4, 1, {3, 2}), ValidationError);
  EXPECT_THROW(graph(4, 1, {1, 5}), ValidationError);
  EXPECT_THROW(graph(1, 1, {1, 1}), ValidationError);
  EXPECT_THROW(graph(4, 0, LevelBounds::full(4)), ValidationError);
}

TEST(Multiplex, EdgePredicatesHoldExhaustively) {
  for (int n = 2; n <= 8; ++n) {
    const LatticeTopology topo(n, LevelBounds::full(n));
    for (std::size_t v = 0; v < topo.size(); ++v) {
      const Mask s = topo.node(v);
      for (int u : topo.down(v)) {
        const Mask d = topo.node(static_cast<std::size_t>(u));
        EXPECT_EQ(std::popcount(s) - std::popcount(d), 1);
        EXPECT_EQ(d & ~s, 0u);
      }
      for (int u : topo.up(v)) {
        const Mask up = topo.node(static_cast<std::size_t>(u));
        EXPECT_EQ(std::popcount(up) - std::popcount(s), 1);
        EXPECT_EQ(s & ~up, 0u);
      }
      for (int u : topo.intra(v)) {
        const Mask w = topo.node(static_cast<std::size_t>(u));
        EXPECT_EQ(std::popcount(w), std::popcount(s));
        EXPECT_EQ(std::popcount(w & s), std::popcount(s) - 1);
        EXPECT_GT(std::popcount(w & s), 0);
      }
      // Completeness of the intra family: count all same-level overlaps.
      std::size_t expected = 0;
      for (std::size_t w = 0; w < topo.size(); ++w) {
        const Mask t = topo.node(w);
        if (t != s && std::popcount(t) == std::popcount(s) && std::popcount(t & s) == std::popcount(s) - 1 &&
            std::popcount(s) > 1) {
          ++expected;
        }
      }
      EXPECT_EQ(topo.intra(v).size(), expected);
    }
  }
}

TEST(Multiplex, DroppedLevelRemovesEdgesToIt) {
  const LatticeTopology topo(4, {2, 4});
  for (std::size_t v = 0; v < topo.size(); ++v) {
    if (std::popcount(topo.node(v)) == 2) {
      EXPECT_TRUE(topo.down(v).empty());
    }
  }
}

TEST(Multiplex, ComputabilityAndLabels) {
  std::vector<Stub> sgs(2);
  sgs[1].missing = 0b0100;
  MultiplexGraph g = build_multiplex(4, sgs, LevelBounds::full(4));
  const std::size_t v = g.local_index({1, parse_subset("0110")});
  EXPECT_TRUE(g.computable(0, v));
  EXPECT_FALSE(g.computable(1, v));
  EXPECT_THROW(g.set_label(1, 0b0110, 0.5), ValidationError);
  g.set_label(0, 0b0110, 0.5);
  EXPECT_TRUE(g.labeled(0, v));
  EXPECT_FALSE(g.labeled(1, v));
  g.clear_labels(0);
  EXPECT_FALSE(g.labeled(0, v));
}

TEST(Multiplex, DeterministicConstruction) {
  const auto a = to_json(graph(5, 3, {1, 4}));
  const auto b = to_json(graph(5, 3, {1, 4}));
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_EQ(a["counts"]["inter_lattice"].get<int>(), 3 * 30);
}

}  // namespace
}  // namespace misfeat
