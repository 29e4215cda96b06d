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

// Ranking quality, distribution distance and monotonicity measures.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "misfeat/data_model.hpp"
#include "misfeat/error.hpp"
#include "misfeat/feature_subset.hpp"
#include "misfeat/lattice.hpp"
#include "misfeat/sampler.hpp"

namespace misfeat {

namespace detail {

inline void check_ranking(std::size_t predicted, std::size_t truth, int k) {
  if (k < 1) throw ValidationError("metric: K must be >= 1");
  if (predicted < static_cast<std::size_t>(k)) throw ValidationError("metric: ranking shorter than K");
  if (truth < static_cast<std::size_t>(k)) throw ValidationError("metric: truth set smaller than K");
}

}  // namespace detail

// sum_{i<=K} [pred_i in truth] / log2(i+1), over the same sum with every
// position a hit.
inline double ndcg_at_k(const std::vector<Mask>& predicted, const std::vector<Mask>& truth, int k) {
  detail::check_ranking(predicted.size(), truth.size(), k);
  const std::set<Mask> hits(truth.begin(), truth.end());
  double dcg = 0.0;
  double ideal = 0.0;
  for (int i = 0; i < k; ++i) {
    const double discount = 1.0 / std::log2(static_cast<double>(i) + 2.0);
    ideal += discount;
    if (hits.count(predicted[static_cast<std::size_t>(i)])) dcg += discount;
  }
  return dcg / ideal;
}

inline double precision_at_k(const std::vector<Mask>& predicted, const std::vector<Mask>& truth, int k) {
  detail::check_ranking(predicted.size(), truth.size(), k);
  const std::set<Mask> hits(truth.begin(), truth.end());
  int count = 0;
  for (int i = 0; i < k; ++i) count += hits.count(predicted[static_cast<std::size_t>(i)]) ? 1 : 0;
  return static_cast<double>(count) / static_cast<double>(k);
}

inline constexpr int kTvBins = 20;

// Probability histogram over n_bins equal-width bins on [lo, hi]; the last
// bin is closed. A zero-width range puts everything in bin 0.
inline std::vector<double> histogram(const std::vector<double>& values, double lo, double hi, int n_bins) {
  if (n_bins < 2) throw ValidationError("histogram: n_bins must be >= 2");
  if (values.empty()) throw ValidationError("histogram: no values");
  std::vector<double> h(static_cast<std::size_t>(n_bins), 0.0);
  const double width = (hi - lo) / n_bins;
  for (double v : values) {
    int b = width > 0.0 ? static_cast<int>(std::floor((v - lo) / width)) : 0;
    b = std::clamp(b, 0, n_bins - 1);
    h[static_cast<std::size_t>(b)] += 1.0;
  }
  for (double& x : h) x /= static_cast<double>(values.size());
  return h;
}

inline double l1_distance(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw ValidationError("l1_distance: length mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) d += std::abs(p[i] - q[i]);
  return d;
}

// Total variation in l1 form between the empirical distributions of two
// value sets, binned over their combined range.
inline double tv_distance(const std::vector<double>& sample, const std::vector<double>& population,
                          int n_bins = kTvBins) {
  if (sample.empty() || population.empty()) throw ValidationError("tv_distance: empty input");
  const auto [smin, smax] = std::minmax_element(sample.begin(), sample.end());
  const auto [pmin, pmax] = std::minmax_element(population.begin(), population.end());
  const double lo = std::min(*smin, *pmin);
  const double hi = std::max(*smax, *pmax);
  return l1_distance(histogram(sample, lo, hi, n_bins), histogram(population, lo, hi, n_bins));
}

struct ClosureAccuracy {
  std::map<int, double> per_level;  // keyed by the superset's level
  std::map<int, std::uint64_t> edges_per_level;
  double overall = 0.0;
  std::uint64_t edges = 0;
};

// Fraction of inter-level edges S < T with score(T) >= score(S).
inline ClosureAccuracy upward_closure_accuracy(const std::map<Mask, double>& scores, const LatticeTopology& topo) {
  auto score = [&](Mask s) {
    const auto it = scores.find(s);
    if (it == scores.end()) throw ValidationError("closure accuracy: no score for subset " + std::to_string(s));
    return it->second;
  };
  ClosureAccuracy acc;
  std::map<int, std::uint64_t> good;
  std::uint64_t total_good = 0;
  for (std::size_t v = 0; v < topo.size(); ++v) {
    const Mask t = topo.node(v);
    const int level = std::popcount(t);
    for (int u : topo.down(v)) {
      const bool ok = score(t) >= score(topo.node(static_cast<std::size_t>(u)));
      good[level] += ok ? 1 : 0;
      total_good += ok ? 1 : 0;
      ++acc.edges_per_level[level];
      ++acc.edges;
    }
  }
  for (const auto& [level, n] : acc.edges_per_level) {
    acc.per_level[level] = static_cast<double>(good[level]) / static_cast<double>(n);
  }
  acc.overall = acc.edges == 0 ? 1.0 : static_cast<double>(total_good) / static_cast<double>(acc.edges);
  return acc;
}

inline nlohmann::json to_json(const ClosureAccuracy& a) {
  nlohmann::json levels = nlohmann::json::object();
  for (const auto& [l, v] : a.per_level) levels[std::to_string(l)] = v;
  return {{"overall", a.overall}, {"edges", a.edges}, {"per_level", levels}};
}

// Nodes whose MI is not known exactly: subsets touching a missing feature,
// plus computable subsets outside the sample. Ascending bitmask.
inline std::vector<Mask> build_test_set(const MultiplexGraph& graph, const SampleSet& samples, int subgroup) {
  const std::set<Mask> sampled(samples.sampled.begin(), samples.sampled.end());
  std::vector<Mask> out;
  for (std::size_t v = 0; v < graph.lattice_size(); ++v) {
    const Mask s = graph.topology().node(v);
    if (!graph.computable(subgroup, v) || !sampled.count(s)) out.push_back(s);
  }
  return out;
}

inline std::vector<Mask> at_level(const std::vector<Mask>& subsets, int m) {
  std::vector<Mask> out;
  for (Mask s : subsets) {
    if (std::popcount(s) == m) out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

struct MetricRow {
  std::string method;
  std::uint64_t seed = 0;
  int subgroup = -1;  // -1: mean over subgroups
  std::string metric;
  double value = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  std::vector<std::uint64_t> seeds;

  void add(std::string method, std::uint64_t seed, int subgroup, std::string metric, double value) {
    rows.push_back({std::move(method), seed, subgroup, std::move(metric), value});
  }

  // Mean of the subgroup-level rows for (method, metric), over all seeds.
  double mean(const std::string& method, const std::string& metric) const {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : rows) {
      if (r.method == method && r.metric == metric && r.subgroup >= 0) {
        sum += r.value;
        ++n;
      }
    }
    if (n == 0) throw ValidationError("report: no rows for " + method + "/" + metric);
    return sum / n;
  }
};

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  std::map<std::pair<std::string, std::string>, std::pair<double, int>> means;
  for (const auto& row : r.rows) {
    rows.push_back({{"method", row.method},
                    {"seed", row.seed},
                    {"subgroup", row.subgroup},
                    {"metric", row.metric},
                    {"value", row.value}});
    if (row.subgroup >= 0) {
      auto& m = means[{row.method, row.metric}];
      m.first += row.value;
      ++m.second;
    }
  }
  nlohmann::json avg = nlohmann::json::object();
  for (const auto& [key, m] : means) avg[key.first][key.second] = m.first / m.second;
  return {{"seeds", r.seeds}, {"rows", rows}, {"averages", avg}};
}

inline void write_csv(std::ostream& out, const MetricReport& r) {
  out << "method,seed,subgroup,metric,value\n";
  for (const auto& row : r.rows) {
    out << row.method << ',' << row.seed << ',' << row.subgroup << ',' << row.metric << ','
        << detail::format_double(row.value) << '\n';
  }
}

}  // namespace misfeat
