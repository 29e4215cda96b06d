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

// Budgeted choice of which computable lattice nodes receive exact MI labels.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "misfeat/error.hpp"
#include "misfeat/feature_subset.hpp"
#include "misfeat/info_theory.hpp"
#include "misfeat/lattice.hpp"
#include "misfeat/random.hpp"

namespace misfeat {

struct SampleSet {
  int subgroup = 0;
  std::uint64_t budget = 0;
  std::uint64_t seed = 0;
  std::vector<Mask> sampled;  // ascending
  std::uint64_t steps = 0;    // walk transitions taken (0 for non-walk samplers)

  bool operator==(const SampleSet&) const = default;
};

inline constexpr std::uint64_t kMaxWalkSteps = 10'000'000;

// Number of non-empty subsets of `present` with level in bounds.
inline std::uint64_t valid_state_count(Mask present, LevelBounds bounds) {
  const int k = std::popcount(present);
  std::uint64_t total = 0;
  for (int l = std::max(1, bounds.min); l <= std::min(k, bounds.max); ++l) total += binomial(k, l);
  return total;
}

// Rate r in (0, 1] -> ceil(r * valid states).
inline std::uint64_t budget_from_rate(double rate, std::uint64_t valid_states) {
  if (!(rate > 0.0 && rate <= 1.0)) throw ValidationError("budget rate must lie in (0, 1]");
  const auto b = static_cast<std::uint64_t>(std::ceil(rate * static_cast<double>(valid_states) - 1e-9));
  return std::clamp<std::uint64_t>(b, 1, valid_states);
}

namespace detail {

inline void check_budget(Mask present, std::uint64_t budget, LevelBounds bounds) {
  if (present == 0) throw ValidationError("sampler: no present features");
  if (budget < 1) throw ValidationError("sampler: budget must be >= 1");
  const std::uint64_t valid = valid_state_count(present, bounds);
  if (budget > valid) {
    throw ValidationError("sampler: budget " + std::to_string(budget) + " exceeds the " + std::to_string(valid) +
                          " valid subsets");
  }
}

inline std::vector<int> bits_of(Mask m) {
  std::vector<int> out;
  for (; m != 0; m &= m - 1) out.push_back(std::countr_zero(m));
  return out;
}

}  // namespace detail

// Lazy random walk on the hypercube spanned by the present features. Each
// step stays put with probability 1/2, otherwise flips one present bit
// chosen uniformly. The walk moves over the whole hypercube, including the
// empty set and levels outside the bounds, but only valid states join the
// sample, which ends once it holds `budget` distinct subsets. Blocking moves
// into invalid states instead would bias inclusion against the states next
// to them (singletons lose about 5% inclusion at n=8).
inline SampleSet randwalk_sample(int subgroup, Mask present, std::uint64_t budget, LevelBounds bounds,
                                 std::uint64_t seed) {
  detail::check_budget(present, budget, bounds);
  const auto bits = detail::bits_of(present);
  Rng rng = make_rng(seed, static_cast<std::uint64_t>(subgroup));
  auto valid = [&](Mask s) { return s != 0 && bounds.contains(std::popcount(s)); };

  Mask state = 0;
  for (int f : bits) {
    if (bernoulli(rng, 0.5)) state |= Mask{1} << f;
  }
  std::unordered_set<Mask> seen;
  std::vector<Mask> order;
  if (valid(state)) {
    seen.insert(state);
    order.push_back(state);
  }
  std::uint64_t steps = 0;
  while (order.size() < budget) {
    if (++steps > kMaxWalkSteps) {
      throw RuntimeError("randwalk: step cap reached with " + std::to_string(order.size()) + " of " +
                         std::to_string(budget) + " samples");
    }
    if (bernoulli(rng, 0.5)) continue;
    state ^= Mask{1} << bits[uniform_index(rng, bits.size())];
    if (valid(state) && seen.insert(state).second) order.push_back(state);
  }
  std::sort(order.begin(), order.end());
  return {subgroup, budget, seed, std::move(order), steps};
}

// Uniform sampling without replacement over the valid subsets.
inline SampleSet arbitrary_sample(int subgroup, Mask present, std::uint64_t budget, LevelBounds bounds,
                                  std::uint64_t seed) {
  detail::check_budget(present, budget, bounds);
  auto pool = subsets_within(present, bounds);
  Rng rng = make_rng(seed, 0x617262ULL + static_cast<std::uint64_t>(subgroup));
  for (std::size_t i = 0; i < budget; ++i) {
    std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
  }
  pool.resize(budget);
  std::sort(pool.begin(), pool.end());
  return {subgroup, budget, seed, std::move(pool), 0};
}

// Deliberately skewed reference sampler: fills the lowest levels first
// (random order within a level). Used to show what a non-representative
// sample costs in total variation.
inline SampleSet level_biased_sample(int subgroup, Mask present, std::uint64_t budget, LevelBounds bounds,
                                     std::uint64_t seed) {
  detail::check_budget(present, budget, bounds);
  Rng rng = make_rng(seed, 0x6c766cULL + static_cast<std::uint64_t>(subgroup));
  std::vector<Mask> out;
  for (int l = bounds.min; l <= bounds.max && out.size() < budget; ++l) {
    auto level = subsets_within(present, {l, l});
    shuffle(level, rng);
    for (Mask s : level) {
      if (out.size() == budget) break;
      out.push_back(s);
    }
  }
  std::sort(out.begin(), out.end());
  return {subgroup, budget, seed, std::move(out), 0};
}

using LabelMap = std::map<Mask, double>;

inline LabelMap label_samples(const EntropyStore& store, const SampleSet& samples) {
  LabelMap labels;
  for (Mask s : samples.sampled) {
    if (!store.has(s)) {
      throw ValidationError("label_samples: subset " + FeatureSubset(s).to_string(store.n_features()) +
                            " is not in the entropy store");
    }
    labels.emplace(s, store.mi(s));
  }
  return labels;
}

inline void attach_labels(MultiplexGraph& graph, int subgroup, const LabelMap& labels) {
  graph.clear_labels(subgroup);
  for (const auto& [s, mi] : labels) graph.set_label(subgroup, s, mi);
}

inline nlohmann::json to_json(const SampleSet& s) {
  return {{"subgroup", s.subgroup}, {"seed", s.seed}, {"budget", s.budget}, {"steps", s.steps},
          {"bitmasks", s.sampled}};
}

inline SampleSet sample_set_from_json(const nlohmann::json& j) {
  SampleSet s;
  s.subgroup = j.at("subgroup").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.budget = j.at("budget").get<std::uint64_t>();
  s.steps = j.value("steps", std::uint64_t{0});
  s.sampled = j.at("bitmasks").get<std::vector<Mask>>();
  return s;
}

}  // namespace misfeat
