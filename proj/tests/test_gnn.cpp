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
#include <numeric>

#include "misfeat/gnn.hpp"
#include "misfeat/pipeline.hpp"
#include "test_util.hpp"

namespace misfeat {
namespace {

// ReLU backward that passes every gradient through.
struct BrokenRelu {
  static double apply(double, double upstream) { return upstream; }
};

GnnConfig small(int hidden, int epochs) {
  GnnConfig c;
  c.hidden = hidden;
  c.train.epochs = epochs;
  return c;
}

// Partition, graph and per-subgroup labels at the given budget rate.
struct Fixture {
  Partition part;
  MultiplexGraph graph;
  std::vector<SampleSet> samples;
  std::vector<EntropyStore> stores;
};

Fixture labeled(int n, int subgroups, double p, double rate, std::uint64_t seed, std::size_t rows = 3000) {
  Fixture f;
  f.part = testing::synthetic_partition(n, subgroups, rows, p, seed);
  EvalConfig cfg;
  cfg.budget_rate = rate;
  auto prep = prepare(f.part.subgroups, cfg, seed);
  f.graph = std::move(prep.graph);
  f.samples = std::move(prep.samples);
  f.stores = std::move(prep.stores);
  return f;
}

double spearman(std::vector<double> a, std::vector<double> b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> r(v.size());
    for (std::size_t k = 0; k < idx.size();) {
      std::size_t e = k;
      while (e + 1 < idx.size() && v[idx[e + 1]] == v[idx[k]]) ++e;
      for (std::size_t q = k; q <= e; ++q) r[idx[q]] = 0.5 * static_cast<double>(k + e);
      k = e + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t k = 0; k < ra.size(); ++k) {
    sab += (ra[k] - ma) * (rb[k] - mb);
    saa += (ra[k] - ma) * (ra[k] - ma);
    sbb += (rb[k] - mb) * (rb[k] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

TEST(GnnForward, OnePredictionPerNode) {
  const auto f = labeled(4, 2, 0.2, 1.0, 1, 400);
  const GnnModel model(4, 2, small(8, 1), 3);
  EXPECT_EQ(forward(model, f.graph).size(), 30u);
}

TEST(GnnForward, ZeroParametersGiveZero) {
  const auto f = labeled(5, 3, 0.2, 1.0, 2, 400);
  GnnModel model(5, 3, small(8, 1), 3);
  for (auto& t : model.params().tensors) t.setZero();
  for (double y : forward(model, f.graph)) EXPECT_EQ(y, 0.0);
}

TEST(GnnForward, IsolatedNodeUsesSelfPathOnly) {
  const LatticeTopology topo(1, LevelBounds::full(1));
  const GnnContext ctx = make_context(topo, 1, {{}});
  const GnnModel model(1, 1, small(4, 1), 7);
  // Hand trace with an empty neighborhood: the message is zero, so layer t
  // is ReLU(W_conc[:, :in] h + b).
  const Matrix& c0 = model.tensor(model.conc(0, 0));
  const Matrix& c1 = model.tensor(model.conc(1, 0));
  Eigen::VectorXd h1 = (c0.col(0) + model.tensor(model.bias(0, 0)).row(0).transpose()).cwiseMax(0.0);
  Eigen::VectorXd h2 = (c1.leftCols(4) * h1 + model.tensor(model.bias(1, 0)).row(0).transpose()).cwiseMax(0.0);
  const double y = model.tensor(model.out_w(0)).row(0).dot(h2) + model.tensor(model.out_b(0))(0, 0);
  const auto out = forward(model, ctx);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_NEAR(out[0], y, 1e-12);
  // Aggregation weights cannot matter.
  GnnModel changed = model;
  changed.params().tensors[model.agg(0, 0)].setConstant(5.0);
  changed.params().tensors[model.agg(1, 0)].setConstant(-3.0);
  EXPECT_EQ(forward(changed, ctx), out);
}

TEST(GnnForward, MismatchedShapesRejected) {
  const auto f = labeled(4, 2, 0.2, 1.0, 1, 400);
  EXPECT_THROW(forward(GnnModel(4, 3, small(8, 1), 0), f.graph), ValidationError);
  EXPECT_THROW(forward(GnnModel(5, 2, small(8, 1), 0), f.graph), ValidationError);
  EXPECT_THROW(GnnModel(4, 2, small(0, 1), 0), ValidationError);
}

TEST(GnnForward, NeighborOrderDoesNotChangeOutput) {
  const auto f = labeled(5, 2, 0.2, 1.0, 4, 400);
  const auto& topo = f.graph.topology();
  std::vector<std::vector<int>> lists(topo.size()), reversed(topo.size());
  for (std::size_t v = 0; v < topo.size(); ++v) {
    lists[v] = topo.pooled(v);
    reversed[v] = lists[v];
    std::reverse(reversed[v].begin(), reversed[v].end());
    Rng rng = make_rng(v, 0);
    shuffle(reversed[v], rng);
  }
  const GnnModel model(5, 2, small(8, 1), 9);
  EXPECT_EQ(forward(model, make_context(topo, 2, lists)), forward(model, make_context(topo, 2, reversed)));
}

TEST(GnnForward, CrossLatticeMessagesCouple) {
  // Perturbing subgroup 1's weights changes subgroup 0's output only
  // through the cross-lattice term.
  const auto f = labeled(4, 2, 0.2, 1.0, 5, 400);
  const GnnContext ctx = make_context(f.graph);
  const GnnModel model(4, 2, small(8, 1), 2);
  GnnModel other = model;
  other.params().tensors[model.conc(0, 1)] *= 2.0;
  EXPECT_NE(forward_subgroup(model, ctx, 0), forward_subgroup(other, ctx, 0));
  GnnModel cut = other;
  for (int t = 0; t < 2; ++t) cut.params().tensors[model.cross(t, 1, 0)].setZero();
  GnnModel cut_base = model;
  for (int t = 0; t < 2; ++t) cut_base.params().tensors[model.cross(t, 1, 0)].setZero();
  EXPECT_EQ(forward_subgroup(cut, ctx, 0), forward_subgroup(cut_base, ctx, 0));
}

TEST(GnnGradient, MatchesFiniteDifferences) {
  const auto f = labeled(4, 2, 0.2, 1.0, 6, 400);
  const GnnContext ctx = make_context(f.graph);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const GnnModel model(4, 2, small(8, 1), seed);
    for (int i = 0; i < 2; ++i) {
      EXPECT_LT(gradient_check(model, ctx, i, labeled_nodes(f.graph, i), 1e-5), 1e-4);
    }
  }
}

TEST(GnnGradient, BrokenReluDetected) {
  const auto f = labeled(4, 2, 0.2, 1.0, 6, 400);
  const GnnContext ctx = make_context(f.graph);
  const GnnModel model(4, 2, small(8, 1), 1);
  EXPECT_GT(gradient_check<BrokenRelu>(model, ctx, 0, labeled_nodes(f.graph, 0), 1e-5), 1e-2);
}

TEST(GnnGradient, ZeroLossGivesZeroGradient) {
  const auto f = labeled(4, 2, 0.2, 1.0, 6, 400);
  const GnnContext ctx = make_context(f.graph);
  GnnModel model(4, 2, small(8, 1), 1);
  for (auto& t : model.params().tensors) t.setZero();
  auto labels = labeled_nodes(f.graph, 0);
  for (auto& l : labels) l.target = 0.0;
  const auto [loss, grad] = gnn_loss_and_grad(model, ctx, 0, labels);
  EXPECT_EQ(loss, 0.0);
  for (const auto& t : grad.tensors) EXPECT_EQ(t.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(gradient_check(model, ctx, 0, labels, 1e-5), 0.0);
}

TEST(GnnGradient, OwnBlockTouchesOnlyTargetParameters) {
  const auto f = labeled(4, 3, 0.2, 1.0, 7, 400);
  const GnnContext ctx = make_context(f.graph);
  const GnnModel model(4, 3, small(8, 1), 1);
  const auto cache = detail::gnn_forward(model, ctx, std::vector<bool>(3, true));
  const Params g = detail::gnn_backward(model, ctx, cache, 1, labeled_nodes(f.graph, 1), true);
  for (std::size_t k = 0; k < g.tensors.size(); ++k) {
    const std::string& name = g.names[k];
    const bool own = name.find("[1]") != std::string::npos || name.find("->1]") != std::string::npos;
    if (!own) {
      EXPECT_EQ(g.tensors[k].cwiseAbs().maxCoeff(), 0.0) << name;
    }
  }
  EXPECT_GT(g.tensors[model.out_w(1)].cwiseAbs().maxCoeff(), 0.0);
}

TEST(GnnTrain, ConstantLabelsAreFit) {
  const auto f = labeled(5, 2, 0.2, 1.0, 8, 400);
  auto labels = labeled_nodes(f.graph, 0);
  for (auto& l : labels) l.target = 0.3;
  const auto [model, report] = train_subgroup(make_context(f.graph), 0, labels, small(16, 1000), 1);
  EXPECT_LT(report.train_loss.back(), 1e-6);
  EXPECT_LT(report.train_loss.back(), report.train_loss.front());
}

TEST(GnnTrain, SelectedEpochMinimizesValidationLoss) {
  const auto f = labeled(5, 2, 0.2, 0.6, 9, 2000);
  const auto [model, report] = train_subgroup(f.graph, 0, small(16, 200), 2);
  const auto it = std::min_element(report.validation_loss.begin(), report.validation_loss.end());
  EXPECT_EQ(report.selected_epoch, static_cast<int>(it - report.validation_loss.begin()));
  EXPECT_EQ(report.train_loss.size(), 200u);
  EXPECT_GT(report.validation_count, 0u);
}

TEST(GnnTrain, DeterministicUnderFixedSeed) {
  const auto f = labeled(5, 2, 0.2, 0.6, 10, 1000);
  const auto a = train_subgroup(f.graph, 1, small(8, 50), 4);
  const auto b = train_subgroup(f.graph, 1, small(8, 50), 4);
  EXPECT_EQ(a.second.train_loss, b.second.train_loss);
  EXPECT_EQ(a.second.validation_loss, b.second.validation_loss);
  EXPECT_TRUE(a.first.params() == b.first.params());
  const auto c1 = train_coupled(f.graph, small(8, 50), 4);
  const auto c2 = train_coupled(f.graph, small(8, 50), 4);
  for (std::size_t i = 0; i < c1.models.size(); ++i) {
    EXPECT_TRUE(c1.models[i].params() == c2.models[i].params());
    EXPECT_EQ(c1.reports[i].train_loss, c2.reports[i].train_loss);
  }
}

TEST(GnnTrain, TooFewLabelsRejected) {
  const auto f = labeled(4, 2, 0.2, 1.0, 11, 400);
  auto labels = labeled_nodes(f.graph, 0);
  labels.resize(4);
  EXPECT_THROW(train_subgroup(make_context(f.graph), 0, labels, small(8, 5), 0), ValidationError);
  std::vector<std::vector<LabeledNode>> all{labels, labeled_nodes(f.graph, 1)};
  EXPECT_THROW(train_coupled(make_context(f.graph), all, small(8, 5), 0), ValidationError);
}

TEST(GnnTrain, OverfitsFullBudget) {
  const auto f = labeled(8, 2, 0.0, 1.0, 12, 4000);
  const auto coupled = train_coupled(f.graph, small(32, 1000), 3);
  for (const auto& r : coupled.reports) EXPECT_LT(r.train_loss.back(), 1e-3);
}

TEST(GnnTrain, CoupledReportsSelectBestValidationEpoch) {
  const auto f = labeled(6, 3, 0.2, 1.0, 13, 1500);
  const auto c = train_coupled(f.graph, small(8, 100), 5);
  ASSERT_EQ(c.models.size(), 3u);
  const GnnContext ctx = make_context(f.graph);
  for (int i = 0; i < 3; ++i) {
    const auto& r = c.reports[static_cast<std::size_t>(i)];
    const auto it = std::min_element(r.validation_loss.begin(), r.validation_loss.end());
    EXPECT_EQ(r.selected_epoch, static_cast<int>(it - r.validation_loss.begin()));
    EXPECT_EQ(c.models[static_cast<std::size_t>(i)].trained_for(), i);
  }
}

TEST(GnnPredict, FullyLabeledSubgroupHasNothingToPredict) {
  Fixture f = labeled(4, 2, 0.0, 1.0, 14, 400);
  // Label subgroup 0's non-computable nodes too, with their shadow MI.
  const auto& sg = f.part.subgroups[0];
  const EntropyStore shadow = build_entropy_store(shadow_view(sg), 0, full_mask(4), LevelBounds::full(4));
  MultiplexGraph g(4, {0, f.graph.missing(1)}, LevelBounds::full(4));
  for (Mask s = 1; s < 16; ++s) g.set_label(0, s, shadow.mi(s));
  GnnModel model(4, 2, small(8, 1), 0);
  model.set_trained_for(0);
  EXPECT_TRUE(predict_missing(model, g, 0).empty());
}

TEST(GnnPredict, EveryNodeWithMissingFeatureGetsPrediction) {
  const auto f = labeled(6, 2, 0.2, 1.0, 15, 1000);
  const auto c = train_coupled(f.graph, small(8, 20), 1);
  for (int i = 0; i < 2; ++i) {
    const auto pred = predict_missing(c.models[static_cast<std::size_t>(i)], f.graph, i);
    const Mask missing = f.graph.missing(i);
    ASSERT_NE(missing, 0u);
    for (Mask s = 1; s < 64; ++s) {
      if (s & missing) {
        ASSERT_TRUE(pred.count(s)) << s;
        EXPECT_GE(pred.at(s), 0.0);
      } else {
        EXPECT_FALSE(pred.count(s));  // full budget: every computable node is labeled
      }
    }
  }
}

TEST(GnnPredict, UntrainedModelRejected) {
  const auto f = labeled(4, 2, 0.2, 1.0, 16, 400);
  EXPECT_THROW(predict_missing(GnnModel(4, 2, small(8, 1), 0), f.graph, 0), ValidationError);
}

TEST(GnnPredict, HeldOutPredictionsCorrelateWithExactMi) {
  const auto f = labeled(8, 2, 0.2, 0.5, 17, 6000);
  const auto c = train_coupled(f.graph, small(32, 400), 2);
  for (int i = 0; i < 2; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const auto pred = predict_missing(c.models[ui], f.graph, i);
    std::vector<double> a, b;
    for (const auto& [s, y] : pred) {
      if (s & f.graph.missing(i)) continue;
      a.push_back(y);
      b.push_back(f.stores[ui].mi(s));
    }
    ASSERT_GT(a.size(), 10u);
    EXPECT_GT(spearman(a, b), 0.0) << "subgroup " << i;
  }
}

TEST(GnnCheckpoint, SaveLoadRoundTrip) {
  const auto f = labeled(5, 2, 0.2, 1.0, 18, 400);
  const auto c = train_coupled(f.graph, small(8, 10), 6);
  const auto path = (testing::temp_dir("gnn_ckpt") / "model.bin").string();
  save_model(path, c.models[1]);
  const GnnModel back = load_model(path);
  EXPECT_TRUE(back.params() == c.models[1].params());
  EXPECT_EQ(back.trained_for(), 1);
  EXPECT_EQ(forward(back, f.graph), forward(c.models[1], f.graph));
}

}  // namespace
}  // namespace misfeat
