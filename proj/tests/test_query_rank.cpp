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

#include <algorithm>
#include <bit>
#include <cmath>

#include "misfeat/pipeline.hpp"
#include "misfeat/query_rank.hpp"
#include "test_util.hpp"

namespace misfeat {
namespace {

struct Scenario {
  Partition part;
  PreparedSubgroups prep;
};

Scenario scenario(int n, int subgroups, double p, double rate, std::uint64_t seed) {
  Scenario s;
  s.part = testing::synthetic_partition(n, subgroups, 3000, p, seed);
  EvalConfig cfg;
  cfg.budget_rate = rate;
  s.prep = prepare(s.part.subgroups, cfg, seed);
  return s;
}

// Oracle: sort every level-m subset of the shadow data by exact MI.
std::vector<Mask> brute_force(const SubgroupData& sg, int m, int k) {
  const TableView view = shadow_view(sg);
  std::vector<std::pair<double, Mask>> all;
  for (Mask s = 1; s <= full_mask(sg.n_features); ++s) {
    if (std::popcount(s) == m) all.push_back({mi_direct(view, s), s});
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<Mask> out;
  for (int i = 0; i < k && i < static_cast<int>(all.size()); ++i) out.push_back(all[static_cast<std::size_t>(i)].second);
  return out;
}

void expect_sorted(const TopKResult& r) {
  for (std::size_t i = 1; i < r.entries.size(); ++i) EXPECT_TRUE(ranks_before(r.entries[i - 1], r.entries[i]));
  for (const auto& e : r.entries) EXPECT_EQ(std::popcount(e.subset), r.m);
}

TEST(TopK, LargeKReturnsWholeLevel) {
  auto s = scenario(6, 1, 0.0, 1.0, 1);
  const auto& g = s.prep.graph;
  const auto r = topk(g, s.prep.stores[0], nullptr, 0, 2, 100);
  EXPECT_EQ(r.entries.size(), binomial(6, 2));
  expect_sorted(r);
}

TEST(TopK, NoMissingnessFullBudgetMatchesGroundTruth) {
  auto s = scenario(7, 1, 0.0, 1.0, 2);
  const auto& sg = s.part.subgroups[0];
  ASSERT_EQ(sg.missing, 0u);
  for (int m = 1; m <= 7; ++m) {
    const auto got = topk(s.prep.graph, s.prep.stores[0], nullptr, 0, m, 5);
    const auto truth = ground_truth_topk(sg, m, 5);
    EXPECT_EQ(got.subsets(), truth.subsets()) << m;
    EXPECT_EQ(got.subsets(), brute_force(sg, m, 5)) << m;
    for (std::size_t j = 0; j < got.entries.size(); ++j) {
      EXPECT_NEAR(got.entries[j].score, truth.entries[j].score, 1e-9);
      EXPECT_EQ(got.entries[j].provenance, Provenance::kExact);
    }
  }
}

TEST(TopK, ProvenanceMixesExactAndPredicted) {
  auto s = scenario(6, 2, 0.0, 1.0, 3);
  GnnConfig cfg;
  cfg.hidden = 8;
  cfg.train.epochs = 20;
  const auto trained = train_coupled(s.prep.graph, cfg, 1);
  for (int i = 0; i < 2; ++i) {
    const auto r = topk(s.prep.graph, s.prep.stores[static_cast<std::size_t>(i)],
                        &trained.models[static_cast<std::size_t>(i)], i, 2, 100);
    EXPECT_EQ(r.entries.size(), binomial(6, 2));
    expect_sorted(r);
    const Mask missing = s.prep.graph.missing(i);
    bool exact = false, predicted = false;
    for (const auto& e : r.entries) {
      EXPECT_EQ(e.provenance == Provenance::kPredicted, (e.subset & missing) != 0);
      (e.provenance == Provenance::kExact ? exact : predicted) = true;
    }
    EXPECT_TRUE(exact);
    EXPECT_TRUE(predicted);
  }
}

TEST(TopK, NeedsModelWhenNodesLackLabels) {
  auto s = scenario(5, 2, 0.2, 1.0, 4);
  EXPECT_THROW(topk(s.prep.graph, s.prep.stores[0], nullptr, 0, 2, 3), ValidationError);
}

TEST(TopK, RejectsBadArguments) {
  auto s = scenario(5, 1, 0.0, 1.0, 5);
  EXPECT_THROW(topk(s.prep.graph, s.prep.stores[0], nullptr, 0, 0, 3), ValidationError);
  EXPECT_THROW(topk(s.prep.graph, s.prep.stores[0], nullptr, 0, 6, 3), ValidationError);
  EXPECT_THROW(topk(s.prep.graph, s.prep.stores[0], nullptr, 0, 2, 0), ValidationError);
}

TEST(TopK, PrefixConsistent) {
  auto s = scenario(6, 1, 0.0, 0.5, 6);
  std::map<Mask, double> predicted;
  for (Mask m = 1; m < 64; ++m) predicted[m] = 0.01 * static_cast<double>(m % 7);
  const auto full = topk(s.prep.graph, s.prep.stores[0], predicted, 0, 3, 20);
  for (int k = 1; k < 20; ++k) {
    const auto r = topk(s.prep.graph, s.prep.stores[0], predicted, 0, 3, k);
    ASSERT_EQ(r.entries.size(), static_cast<std::size_t>(k));
    EXPECT_TRUE(std::equal(r.entries.begin(), r.entries.end(), full.entries.begin()));
  }
}

TEST(RankByScores, InvariantUnderIncreasingTransform) {
  const std::vector<Mask> cand{0b0011, 0b0101, 0b0110, 0b1001, 0b1010, 0b1100};
  std::map<Mask, double> a, b;
  double x = 0.3;
  for (Mask s : cand) {
    x = std::fmod(x * 7.13 + 0.11, 1.0);
    a[s] = x;
    b[s] = std::exp(3.0 * x) - 2.0;
  }
  for (int k = 1; k <= 6; ++k) {
    EXPECT_EQ(rank_by_scores(0, 2, k, cand, a, Provenance::kPredicted).subsets(),
              rank_by_scores(0, 2, k, cand, b, Provenance::kPredicted).subsets());
  }
}

TEST(RankByScores, TiesBreakByAscendingBitmask) {
  const std::vector<Mask> cand{0b1100, 0b0011, 0b0110, 0b0101};
  std::map<Mask, double> scores;
  for (Mask s : cand) scores[s] = 0.5;
  scores[0b0110] = 0.9;
  EXPECT_EQ(rank_by_scores(0, 2, 4, cand, scores, Provenance::kExact).subsets(),
            (std::vector<Mask>{0b0110, 0b0011, 0b0101, 0b1100}));
  EXPECT_THROW(rank_by_scores(0, 2, 4, {0b1111}, scores, Provenance::kExact), ValidationError);
}

TEST(GroundTruth, TableOneBestSingleFeature) {
  const Partition part = testing::table1_partition();
  for (const auto& sg : part.subgroups) {
    const auto r = ground_truth_topk(sg, 1, 1);
    ASSERT_EQ(r.entries.size(), 1u);
    const TableView view = shadow_view(sg);
    // Features never recorded in the subgroup score zero.
    std::vector<double> mi(static_cast<std::size_t>(sg.n_features), 0.0);
    for (int f = 0; f < sg.n_features; ++f) {
      const auto& col = sg.shadow[static_cast<std::size_t>(f)];
      if (std::any_of(col.begin(), col.end(), [](Code c) { return c != kNull; })) {
        mi[static_cast<std::size_t>(f)] = mi_direct(view, Mask{1} << f);
      }
    }
    const double best = *std::max_element(mi.begin(), mi.end());
    const int chosen = std::countr_zero(r.entries[0].subset);
    EXPECT_NEAR(r.entries[0].score, best, 1e-9);
    EXPECT_NEAR(mi[static_cast<std::size_t>(chosen)], best, 1e-9);
  }
}

TEST(GroundTruth, TopLevelIsFullSet) {
  const Partition part = testing::table1_partition();
  const auto& sg = part.subgroups[0];
  const auto r = ground_truth_topk(sg, sg.n_features, 5);
  ASSERT_EQ(r.entries.size(), 1u);
  EXPECT_EQ(r.entries[0].subset, full_mask(sg.n_features));
}

TEST(GroundTruth, DeterministicUnderTies) {
  // Selection features are constant inside a subgroup, so their level-1
  // scores tie at zero.
  const Partition part = testing::table1_partition();
  const auto& sg = part.subgroups[1];
  const auto a = ground_truth_topk(sg, 1, sg.n_features);
  const auto b = ground_truth_topk(sg, 1, sg.n_features);
  EXPECT_EQ(a.entries, b.entries);
  expect_sorted(a);
}

TEST(GroundTruth, RequiresShadowData) {
  SubgroupData sg = testing::synthetic_subgroup(4, 100, 1);
  sg.shadow.clear();
  EXPECT_THROW(ground_truth_topk(sg, 2, 3), ValidationError);
}

TEST(TopKJson, CarriesNamesAndProvenance) {
  TopKResult r{1, 2, 3, {{0b101, 0.25, Provenance::kPredicted}}};
  const auto j = to_json(r, {"a", "b", "c"});
  EXPECT_EQ(j["K"], 3);
  EXPECT_EQ(j["entries"][0]["features"], (nlohmann::json{"a", "c"}));
  EXPECT_EQ(j["entries"][0]["provenance"], "predicted");
  EXPECT_EQ(j["entries"][0]["bitmask"], 5);
}

}  // namespace
}  // namespace misfeat
