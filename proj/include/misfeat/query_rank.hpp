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

// Top-K feature subsets of a fixed size per subgroup.

#pragma once

#include <algorithm>
#include <bit>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "misfeat/data_model.hpp"
#include "misfeat/error.hpp"
#include "misfeat/feature_subset.hpp"
#include "misfeat/gnn.hpp"
#include "misfeat/info_theory.hpp"
#include "misfeat/lattice.hpp"

namespace misfeat {

enum class Provenance { kExact, kPredicted };

inline const char* to_string(Provenance p) { return p == Provenance::kExact ? "exact" : "predicted"; }

struct RankedEntry {
  Mask subset = 0;
  double score = 0.0;
  Provenance provenance = Provenance::kExact;

  bool operator==(const RankedEntry&) const = default;
};

struct TopKResult {
  int subgroup = 0;
  int m = 0;
  int k = 0;
  std::vector<RankedEntry> entries;

  std::vector<Mask> subsets() const {
    std::vector<Mask> out;
    for (const auto& e : entries) out.push_back(e.subset);
    return out;
  }
};

// Descending score, ascending bitmask on ties.
inline bool ranks_before(const RankedEntry& a, const RankedEntry& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.subset < b.subset;
}

inline TopKResult rank_entries(int subgroup, int m, int k, std::vector<RankedEntry> entries) {
  if (k < 1) throw ValidationError("topk: K must be >= 1");
  const auto keep = std::min(entries.size(), static_cast<std::size_t>(k));
  std::partial_sort(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(keep), entries.end(), ranks_before);
  entries.resize(keep);
  return {subgroup, m, k, std::move(entries)};
}

// Ranks candidates by a score table; every candidate must have a score.
inline TopKResult rank_by_scores(int subgroup, int m, int k, const std::vector<Mask>& candidates,
                                 const std::map<Mask, double>& scores, Provenance provenance) {
  std::vector<RankedEntry> entries;
  entries.reserve(candidates.size());
  for (Mask s : candidates) {
    const auto it = scores.find(s);
    if (it == scores.end()) throw ValidationError("rank: no score for subset " + std::to_string(s));
    entries.push_back({s, it->second, provenance});
  }
  return rank_entries(subgroup, m, k, std::move(entries));
}

namespace detail {

inline void check_level(const LevelBounds& bounds, int m) {
  if (!bounds.contains(m)) {
    throw ValidationError("topk: m=" + std::to_string(m) + " is outside level bounds [" + std::to_string(bounds.min) +
                          ", " + std::to_string(bounds.max) + "]");
  }
}

}  // namespace detail

// Scores every level-m node of `subgroup`: exact MI where the graph holds a
// label, `predicted` otherwise. A node needing a prediction that is absent
// from `predicted` is an error.
inline TopKResult topk(const MultiplexGraph& graph, const EntropyStore& store, const std::map<Mask, double>& predicted,
                       int subgroup, int m, int k) {
  detail::check_level(graph.bounds(), m);
  if (k < 1) throw ValidationError("topk: K must be >= 1");
  std::vector<RankedEntry> entries;
  for (Mask s : subsets_within(full_mask(graph.n_features()), {m, m})) {
    const std::size_t v = graph.local_index({subgroup, FeatureSubset(s)});
    if (graph.labeled(subgroup, v)) {
      entries.push_back({s, mi_shared(store, s), Provenance::kExact});
      continue;
    }
    const auto it = predicted.find(s);
    if (it == predicted.end()) {
      throw ValidationError("topk: subset " + FeatureSubset(s).to_string(graph.n_features()) +
                            " has no exact label and no prediction; train a model first");
    }
    entries.push_back({s, it->second, Provenance::kPredicted});
  }
  return rank_entries(subgroup, m, k, std::move(entries));
}

inline TopKResult topk(const MultiplexGraph& graph, const EntropyStore& store, const GnnModel* model, int subgroup,
                       int m, int k) {
  std::map<Mask, double> predicted;
  if (model != nullptr) predicted = predict_missing(*model, graph, subgroup);
  return topk(graph, store, predicted, subgroup, m, k);
}

// Exhaustive exact ranking of `candidates` on the pre-injection cells.
inline TopKResult ground_truth_topk(const SubgroupData& sg, const std::vector<Mask>& candidates, int m, int k) {
  if (sg.shadow.empty()) throw ValidationError("ground truth: subgroup has no shadow data");
  const TableView view = shadow_view(sg);
  std::map<Mask, double> scores;
  if (!candidates.empty()) {
    const EntropyStore store = build_entropy_store(view, sg.index, sg.selection_mask(), {m, m});
    for (Mask s : candidates) scores.emplace(s, store.mi(s));
  }
  return rank_by_scores(sg.index, m, k, candidates, scores, Provenance::kExact);
}

inline TopKResult ground_truth_topk(const SubgroupData& sg, int m, int k) {
  validate_bounds({m, m}, sg.n_features);
  return ground_truth_topk(sg, subsets_within(sg.selection_mask(), {m, m}), m, k);
}

inline nlohmann::json to_json(const TopKResult& r, const std::vector<std::string>& feature_names) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : r.entries) {
    std::vector<std::string> names;
    for (int f : decode(FeatureSubset(e.subset))) {
      names.push_back(static_cast<std::size_t>(f) < feature_names.size() ? feature_names[static_cast<std::size_t>(f)]
                                                                          : "f" + std::to_string(f));
    }
    entries.push_back(
        {{"features", names}, {"bitmask", e.subset}, {"score", e.score}, {"provenance", to_string(e.provenance)}});
  }
  return {{"subgroup", r.subgroup}, {"m", r.m}, {"K", r.k}, {"entries", entries}};
}

}  // namespace misfeat
