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

// End-to-end evaluation: sample, label, train, rank the test nodes and score
// every method against the pre-injection ground truth.

#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "misfeat/baselines.hpp"
#include "misfeat/data_model.hpp"
#include "misfeat/gnn.hpp"
#include "misfeat/info_theory.hpp"
#include "misfeat/lattice.hpp"
#include "misfeat/metrics.hpp"
#include "misfeat/query_rank.hpp"
#include "misfeat/sampler.hpp"
#include "misfeat/synthgen.hpp"

namespace misfeat {

enum class SamplerKind { kRandWalk, kArbitrary, kLevelBiased };

inline SamplerKind parse_sampler(const std::string& s) {
  if (s == "randwalk") return SamplerKind::kRandWalk;
  if (s == "arbitrary") return SamplerKind::kArbitrary;
  if (s == "level_biased") return SamplerKind::kLevelBiased;
  throw ValidationError("unknown sampler '" + s + "' (randwalk|arbitrary|level_biased)");
}

inline SampleSet draw_sample(SamplerKind kind, int subgroup, Mask present, std::uint64_t budget, LevelBounds bounds,
                             std::uint64_t seed) {
  switch (kind) {
    case SamplerKind::kRandWalk: return randwalk_sample(subgroup, present, budget, bounds, seed);
    case SamplerKind::kArbitrary: return arbitrary_sample(subgroup, present, budget, bounds, seed);
    case SamplerKind::kLevelBiased: return level_biased_sample(subgroup, present, budget, bounds, seed);
  }
  throw ValidationError("unknown sampler");
}

struct EvalConfig {
  LevelBounds bounds{1, 0};  // max 0: full lattice
  double budget_rate = 1.0;
  SamplerKind sampler = SamplerKind::kRandWalk;
  int m = 3;
  int k = 10;
  GnnConfig gnn;
  MlpConfig mlp;
  KnnConfig knn;
  bool run_mlp = true;
  bool run_knn = true;
  bool coupled = true;  // train all subgroup blocks jointly (see train_coupled)

  LevelBounds resolved_bounds(int n) const { return bounds.max == 0 ? LevelBounds::full(n) : bounds; }
};

// Per-subgroup outcome of one evaluation run.
struct SubgroupEval {
  int subgroup = 0;
  std::size_t test_nodes = 0;  // level-m test nodes
  int k = 0;                   // K used (capped by test nodes)
  std::map<std::string, double> ndcg, precision;
  ClosureAccuracy closure;
  TrainReport gnn_report;
};

struct EvalResult {
  std::uint64_t seed = 0;
  std::vector<SubgroupEval> subgroups;
};

struct PreparedSubgroups {
  std::vector<EntropyStore> stores;
  std::vector<SampleSet> samples;
  MultiplexGraph graph;
};

// Entropy stores over the observed cells, samples and labels for every
// subgroup.
inline PreparedSubgroups prepare(const std::vector<SubgroupData>& subgroups, const EvalConfig& cfg,
                                 std::uint64_t seed) {
  const int n = subgroups.front().n_features;
  const LevelBounds bounds = cfg.resolved_bounds(n);
  PreparedSubgroups p;
  p.graph = build_multiplex(n, subgroups, bounds);
  for (const auto& sg : subgroups) {
    p.stores.push_back(build_entropy_store(sg, bounds));
    const auto budget = budget_from_rate(cfg.budget_rate, valid_state_count(sg.present, bounds));
    p.samples.push_back(draw_sample(cfg.sampler, sg.index, sg.present, budget, bounds, seed));
    attach_labels(p.graph, sg.index, label_samples(p.stores.back(), p.samples.back()));
  }
  return p;
}

inline EvalResult evaluate(const std::vector<SubgroupData>& subgroups, const EvalConfig& cfg, std::uint64_t seed) {
  if (subgroups.empty()) throw ValidationError("evaluate: no subgroups");
  PreparedSubgroups prep = prepare(subgroups, cfg, seed);
  const MultiplexGraph& graph = prep.graph;
  detail::check_level(graph.bounds(), cfg.m);
  const GnnContext ctx = make_context(graph);
  const int n = graph.n_features();

  CoupledTraining coupled;
  if (cfg.coupled) {
    std::vector<std::vector<LabeledNode>> all_labels;
    for (const auto& sg : subgroups) all_labels.push_back(labeled_nodes(graph, sg.index));
    coupled = train_coupled(ctx, all_labels, cfg.gnn, seed);
  }

  EvalResult result;
  result.seed = seed;
  for (const auto& sg : subgroups) {
    const int i = sg.index;
    SubgroupEval ev;
    ev.subgroup = i;
    const auto test = at_level(build_test_set(graph, prep.samples[static_cast<std::size_t>(i)], i), cfg.m);
    ev.test_nodes = test.size();
    const auto labels = labeled_nodes(graph, i);

    GnnModel model;
    if (cfg.coupled) {
      model = coupled.models[static_cast<std::size_t>(i)];
      ev.gnn_report = coupled.reports[static_cast<std::size_t>(i)];
    } else {
      std::tie(model, ev.gnn_report) = train_subgroup(ctx, i, labels, cfg.gnn, seed);
    }
    const Vector raw = forward_subgroup(model, ctx, i);
    std::map<Mask, double> raw_scores;
    for (std::size_t v = 0; v < graph.lattice_size(); ++v) {
      raw_scores.emplace(graph.topology().node(v), raw(static_cast<Eigen::Index>(v)));
    }
    ev.closure = upward_closure_accuracy(raw_scores, graph.topology());

    if (!test.empty()) {
      ev.k = std::min(cfg.k, static_cast<int>(test.size()));
      const auto truth = ground_truth_topk(sg, test, cfg.m, ev.k).subsets();
      auto score = [&](const std::string& method, const std::map<Mask, double>& scores) {
        const auto ranked = rank_by_scores(i, cfg.m, ev.k, test, scores, Provenance::kPredicted).subsets();
        ev.ndcg[method] = ndcg_at_k(ranked, truth, ev.k);
        ev.precision[method] = precision_at_k(ranked, truth, ev.k);
      };
      score("misfeat", predict_missing(model, graph, ctx, i));
      if (cfg.run_mlp) {
        const auto mlp = mlp_train(n, i, labels, cfg.mlp, seed).first;
        score("mlp", mlp_predict(mlp, test));
      }
      if (cfg.run_knn) {
        const SubgroupData imputed = knn_impute(sg, subgroups, cfg.knn);
        const EntropyStore store = build_entropy_store(imputed, {cfg.m, cfg.m});
        std::map<Mask, double> exact;
        for (Mask s : test) exact.emplace(s, store.mi(s));
        score("knn", exact);
      }
    }
    result.subgroups.push_back(std::move(ev));
  }
  return result;
}

inline void append(MetricReport& report, const EvalResult& r) {
  report.seeds.push_back(r.seed);
  for (const auto& ev : r.subgroups) {
    for (const auto& [method, v] : ev.ndcg) report.add(method, r.seed, ev.subgroup, "ndcg", v);
    for (const auto& [method, v] : ev.precision) report.add(method, r.seed, ev.subgroup, "precision", v);
    report.add("misfeat", r.seed, ev.subgroup, "closure_accuracy", ev.closure.overall);
    for (const auto& [level, v] : ev.closure.per_level) {
      report.add("misfeat", r.seed, ev.subgroup, "closure_accuracy_level" + std::to_string(level), v);
    }
    report.add("misfeat", r.seed, ev.subgroup, "gnn_selected_epoch", ev.gnn_report.selected_epoch);
    report.add("misfeat", r.seed, ev.subgroup, "gnn_train_mse", ev.gnn_report.selected_train_loss());
    report.add("misfeat", r.seed, ev.subgroup, "test_nodes", static_cast<double>(ev.test_nodes));
  }
}

// ---------------------------------------------------------------------------
// Timing

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct SharingTiming {
  int n = 0;
  std::size_t rows = 0;
  double naive_seconds = 0.0;
  double shared_seconds = 0.0;
  double max_abs_diff = 0.0;

  double speedup() const { return shared_seconds > 0.0 ? naive_seconds / shared_seconds : 0.0; }
};

// MI of every subset of one complete subgroup, once by independent joint
// counting per subset and once through the shared entropy store.
inline SharingTiming time_entropy_sharing(const SubgroupData& sg) {
  SharingTiming t;
  t.n = sg.n_features;
  t.rows = sg.n_rows();
  const TableView view = observed_view(sg);
  const auto subsets = subsets_within(sg.present, LevelBounds::full(sg.n_features));

  auto t0 = std::chrono::steady_clock::now();
  std::vector<double> naive;
  naive.reserve(subsets.size());
  for (Mask s : subsets) naive.push_back(mi_direct(view, s));
  t.naive_seconds = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  const EntropyStore store = build_entropy_store(sg, LevelBounds::full(sg.n_features));
  std::vector<double> shared;
  shared.reserve(subsets.size());
  for (Mask s : subsets) shared.push_back(mi_shared(store, s));
  t.shared_seconds = seconds_since(t0);

  for (std::size_t k = 0; k < subsets.size(); ++k) t.max_abs_diff = std::max(t.max_abs_diff, std::abs(naive[k] - shared[k]));
  return t;
}

// One complete subgroup of synthetic data with n features.
inline SubgroupData single_subgroup(int n, std::size_t rows, std::uint64_t seed) {
  SynthConfig c;
  c.n_rows = rows;
  c.n_subgroups = 1;
  c.n_relevant = std::min(4, n);
  c.n_correlated = std::min(2, n - c.n_relevant);
  c.n_redundant = std::min(2, n - c.n_relevant - c.n_correlated);
  c.n_irrelevant = n - c.n_relevant - c.n_correlated - c.n_redundant;
  c.formula = c.n_relevant >= 4 ? "(r0 ^ r1) | (r2 & r3)" : "r0";
  c.seed = seed;
  return generate(c).partition.subgroups.front();
}

}  // namespace misfeat
