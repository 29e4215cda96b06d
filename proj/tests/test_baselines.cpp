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

#include "misfeat/baselines.hpp"
#include "misfeat/pipeline.hpp"
#include "test_util.hpp"

namespace misfeat {
namespace {

struct BrokenRelu {
  static double apply(double, double upstream) { return upstream; }
};

// Subgroup from explicit rows; kNull marks a systematically missing column.
SubgroupData make(int index, const std::vector<std::vector<Code>>& rows, Mask missing) {
  SubgroupData sg;
  sg.index = index;
  sg.n_features = static_cast<int>(rows.front().size());
  sg.missing = missing;
  sg.present = full_mask(sg.n_features) & ~missing;
  sg.columns.assign(static_cast<std::size_t>(sg.n_features), {});
  for (const auto& r : rows) {
    for (int f = 0; f < sg.n_features; ++f) {
      sg.columns[static_cast<std::size_t>(f)].push_back(((missing >> f) & 1U) ? kNull : r[static_cast<std::size_t>(f)]);
    }
    sg.target.push_back(0);
  }
  sg.shadow = sg.columns;
  sg.domain_sizes.assign(static_cast<std::size_t>(sg.n_features), 4);
  sg.target_domain = 2;
  return sg;
}

std::vector<LabeledNode> labels_for(int n, double (*f)(Mask)) {
  std::vector<LabeledNode> out;
  for (Mask s = 1; s <= full_mask(n); ++s) out.push_back({static_cast<std::size_t>(s - 1), s, f(s)});
  return out;
}

TEST(Knn, ExactDuplicateDonorWithOneNeighbor) {
  const SubgroupData target = make(0, {{1, 2, 0}, {3, 0, 0}}, 0b100);
  const SubgroupData donor = make(1, {{3, 0, 2}, {1, 2, 3}, {0, 1, 1}}, 0);
  const auto out = knn_impute(target, {target, donor}, {1});
  EXPECT_EQ(out.columns[2], (std::vector<Code>{3, 2}));
  EXPECT_EQ(out.missing, 0u);
  EXPECT_EQ(out.present, 0b111u);
}

TEST(Knn, ModeTieGoesToSmallestValue) {
  const SubgroupData target = make(0, {{1, 1, 0}}, 0b100);
  const SubgroupData donor = make(1, {{1, 1, 3}, {1, 1, 2}, {0, 0, 0}}, 0);
  EXPECT_EQ(knn_impute(target, {target, donor}, {2}).columns[2], (std::vector<Code>{2}));
}

TEST(Knn, DistanceTiesGoToEarlierDonors) {
  const SubgroupData target = make(0, {{1, 1, 0}}, 0b100);
  const SubgroupData first = make(1, {{1, 0, 3}}, 0);
  const SubgroupData second = make(2, {{0, 1, 1}}, 0);
  EXPECT_EQ(knn_impute(target, {target, first, second}, {1}).columns[2], (std::vector<Code>{3}));
  EXPECT_EQ(knn_impute(target, {target, second, first}, {1}).columns[2], (std::vector<Code>{1}));
}

TEST(Knn, DistanceUsesMutuallyObservedFeaturesOnly) {
  // Donor a agrees on feature 0 only; donor b agrees on feature 1, which
  // the target does not observe.
  const SubgroupData target = make(0, {{2, 0, 0}}, 0b110);
  const SubgroupData a = make(1, {{2, 3, 1}}, 0);
  const SubgroupData b = make(2, {{0, 0, 2}}, 0);
  const auto out = knn_impute(target, {target, b, a}, {1});
  EXPECT_EQ(out.columns[2], (std::vector<Code>{1}));
}

TEST(Knn, ObservedCellsUntouched) {
  const Partition part = testing::synthetic_partition(6, 3, 600, 0.3, 4);
  for (const auto& sg : part.subgroups) {
    const auto out = knn_impute(sg, part.subgroups);
    for (int f = 0; f < sg.n_features; ++f) {
      const auto uf = static_cast<std::size_t>(f);
      if ((sg.present >> f) & 1U) {
        EXPECT_EQ(out.columns[uf], sg.columns[uf]);
      } else {
        for (Code c : out.columns[uf]) EXPECT_LT(c, sg.domain_sizes[uf]);
      }
    }
    EXPECT_EQ(out.target, sg.target);
  }
}

TEST(Knn, FeatureObservedNowhereRejected) {
  const SubgroupData a = make(0, {{1, 0}}, 0b10);
  const SubgroupData b = make(1, {{1, 0}}, 0b10);
  EXPECT_THROW(knn_impute(a, {a, b}), ValidationError);
  EXPECT_THROW(knn_impute(a, {a, b}, {0}), ValidationError);
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
  const auto labels = labels_for(4, [](Mask s) { return 0.1 * std::popcount(s) + 0.05 * (s & 1U); });
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    MlpConfig cfg;
    cfg.hidden = 8;
    EXPECT_LT(mlp_gradient_check(MlpModel(4, cfg, seed), labels, 1e-5), 1e-4);
  }
}

TEST(Mlp, BrokenReluDetected) {
  const auto labels = labels_for(4, [](Mask s) { return 0.1 * std::popcount(s); });
  MlpConfig cfg;
  cfg.hidden = 8;
  EXPECT_GT(mlp_gradient_check<BrokenRelu>(MlpModel(4, cfg, 1), labels, 1e-5), 1e-2);
}

TEST(Mlp, ConstantLabelsGiveConstantPredictor) {
  const auto labels = labels_for(5, [](Mask) { return 0.4; });
  MlpConfig cfg;
  cfg.train.epochs = 1000;
  const auto [model, report] = mlp_train(5, 0, labels, cfg, 3);
  EXPECT_LT(report.train_loss.back(), 1e-4);
  // The kept parameters come from the best validation epoch.
  EXPECT_LT(report.selected_validation_loss(), 0.01);
  std::vector<Mask> all;
  for (Mask s = 1; s < 32; ++s) all.push_back(s);
  for (const auto& [s, y] : mlp_predict(model, all)) EXPECT_NEAR(y, 0.4, 0.2) << s;
}

TEST(Mlp, PureFunctionOfBitmask) {
  const auto labels = labels_for(4, [](Mask s) { return 0.2 * (s & 3U); });
  MlpConfig cfg;
  cfg.train.epochs = 30;
  const auto model = mlp_train(4, 1, labels, cfg, 2).first;
  const Vector y = model.predict({0b0101, 0b0011, 0b0101});
  // Batched products may sum in a different order per row.
  EXPECT_NEAR(y(0), y(2), 1e-12);
  EXPECT_NEAR(mlp_predict(model, {0b0101}).at(0b0101), std::max(0.0, y(0)), 1e-12);
}

TEST(Mlp, DeterministicAndRejectsTooFewLabels) {
  const auto labels = labels_for(4, [](Mask s) { return 0.1 * std::popcount(s); });
  MlpConfig cfg;
  cfg.train.epochs = 40;
  const auto a = mlp_train(4, 0, labels, cfg, 9);
  const auto b = mlp_train(4, 0, labels, cfg, 9);
  EXPECT_EQ(a.second.train_loss, b.second.train_loss);
  EXPECT_TRUE(a.first.params() == b.first.params());
  std::vector<LabeledNode> few(labels.begin(), labels.begin() + 4);
  EXPECT_THROW(mlp_train(4, 0, few, cfg, 0), ValidationError);
  EXPECT_THROW(MlpModel(0, cfg, 0), ValidationError);
}

}  // namespace
}  // namespace misfeat
