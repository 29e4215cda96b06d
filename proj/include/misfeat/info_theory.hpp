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

// Empirical entropy and mutual information over discrete columns, in bits.
//
// Two independent routes exist on purpose:
//   * empirical_entropy / mi_direct hash whole tuples per call and evaluate
//     the textbook sums;
//   * EntropyStore walks the subset tree once, refining the row partition
//     of a parent subset by one column to get each child (the chain rule
//     H(S + f) = H(S) + H(f | S)), then answers MI(S; Y) with
//     H(S) + H(Y) - H(S + Y).

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "misfeat/data_model.hpp"
#include "misfeat/error.hpp"
#include "misfeat/feature_subset.hpp"

namespace misfeat {

inline constexpr double kMiTolerance = 1e-12;

// Read-only view over a subgroup's cells (observed or shadow).
struct TableView {
  std::span<const std::vector<Code>> columns;
  std::span<const Code> target;
  std::span<const int> domain_sizes;
  int target_domain = 0;

  std::size_t n_rows() const { return target.size(); }
  int n_features() const { return static_cast<int>(columns.size()); }
};

inline TableView observed_view(const SubgroupData& sg) {
  return {sg.columns, sg.target, sg.domain_sizes, sg.target_domain};
}

inline TableView shadow_view(const SubgroupData& sg) {
  return {sg.shadow, sg.target, sg.domain_sizes, sg.target_domain};
}

namespace detail {

inline double entropy_from_counts(std::span<const std::uint64_t> counts, std::uint64_t total) {
  if (total == 0) return 0.0;
  double acc = 0.0;
  for (std::uint64_t c : counts) {
    if (c > 0) acc += static_cast<double>(c) * std::log2(static_cast<double>(c));
  }
  const double n = static_cast<double>(total);
  return std::log2(n) - acc / n;
}

// Tuple key for the columns in `subset` (plus optionally the target) as a
// mixed-radix integer. Returns false when the row has a NULL in the subset.
struct TupleEncoder {
  std::vector<int> features;
  std::vector<std::uint64_t> radix;
  bool fits = true;

  TupleEncoder(const TableView& view, Mask subset) {
    unsigned __int128 product = 1;
    for (Mask b = subset; b != 0; b &= b - 1) {
      const int f = std::countr_zero(b);
      if (f >= view.n_features()) throw ValidationError("subset references feature beyond table width");
      features.push_back(f);
      radix.push_back(static_cast<std::uint64_t>(view.domain_sizes[static_cast<std::size_t>(f)]));
      product *= radix.back();
    }
    product *= static_cast<std::uint64_t>(view.target_domain);
    fits = product < (static_cast<unsigned __int128>(1) << 63);
  }

  bool key(const TableView& view, std::size_t row, std::uint64_t& out) const {
    std::uint64_t k = 0;
    for (std::size_t i = 0; i < features.size(); ++i) {
      const Code v = view.columns[static_cast<std::size_t>(features[i])][row];
      if (v == kNull) return false;
      k = k * radix[i] + v;
    }
    out = k;
    return true;
  }

  bool tuple(const TableView& view, std::size_t row, std::vector<Code>& out) const {
    out.clear();
    for (int f : features) {
      const Code v = view.columns[static_cast<std::size_t>(f)][row];
      if (v == kNull) return false;
      out.push_back(v);
    }
    return true;
  }
};

// Counts of joint (x, y) cells and of x alone, keyed by tuple.
struct JointCounts {
  std::map<std::pair<std::uint64_t, Code>, std::uint64_t> xy_small;
  std::unordered_map<std::uint64_t, std::uint64_t> x_small;
  std::map<std::pair<std::vector<Code>, Code>, std::uint64_t> xy_wide;
  std::map<std::vector<Code>, std::uint64_t> x_wide;
  std::vector<std::uint64_t> y;
  std::uint64_t total = 0;
};

inline JointCounts count_joint(const TableView& view, Mask subset) {
  const TupleEncoder enc(view, subset);
  JointCounts jc;
  jc.y.assign(static_cast<std::size_t>(view.target_domain), 0);
  std::uint64_t k = 0;
  std::vector<Code> t;
  for (std::size_t r = 0; r < view.n_rows(); ++r) {
    const Code y = view.target[r];
    if (enc.fits) {
      if (!enc.key(view, r, k)) continue;
      ++jc.x_small[k];
      ++jc.xy_small[{k, y}];
    } else {
      if (!enc.tuple(view, r, t)) continue;
      ++jc.x_wide[t];
      ++jc.xy_wide[{t, y}];
    }
    ++jc.y[y];
    ++jc.total;
  }
  return jc;
}

}  // namespace detail

// Shannon entropy (bits) of the empirical joint distribution of `subset`
// (and Y when with_target). Rows with a NULL in a selected column are
// skipped.
inline double empirical_entropy(const TableView& view, Mask subset, bool with_target = false) {
  if (subset == 0 && !with_target) throw ValidationError("empirical_entropy: empty subset");
  const auto jc = detail::count_joint(view, subset);
  if (jc.total == 0) throw ValidationError("empirical_entropy: no usable rows");
  std::vector<std::uint64_t> counts;
  if (with_target) {
    for (const auto& [key, c] : jc.xy_small) counts.push_back(c);
    for (const auto& [key, c] : jc.xy_wide) counts.push_back(c);
  } else {
    for (const auto& [key, c] : jc.x_small) counts.push_back(c);
    for (const auto& [key, c] : jc.x_wide) counts.push_back(c);
  }
  return detail::entropy_from_counts(counts, jc.total);
}

// I(subset; Y) from the nested-sum definition
//   sum_x sum_y P(x,y) log2(P(x,y) / (P(x) P(y))).
inline double mi_direct(const TableView& view, Mask subset) {
  if (subset == 0) throw ValidationError("mi_direct: empty subset");
  const auto jc = detail::count_joint(view, subset);
  if (jc.total == 0) throw ValidationError("mi_direct: no usable rows");
  const double n = static_cast<double>(jc.total);
  double mi = 0.0;
  auto term = [&](std::uint64_t cxy, std::uint64_t cx, std::uint64_t cy) {
    const double pxy = static_cast<double>(cxy) / n;
    return pxy * std::log2(static_cast<double>(cxy) * n / (static_cast<double>(cx) * static_cast<double>(cy)));
  };
  for (const auto& [key, cxy] : jc.xy_small) mi += term(cxy, jc.x_small.at(key.first), jc.y[key.second]);
  for (const auto& [key, cxy] : jc.xy_wide) mi += term(cxy, jc.x_wide.at(key.first), jc.y[key.second]);
  return mi < 0.0 ? 0.0 : mi;
}

// ---------------------------------------------------------------------------

class EntropyStore {
 public:
  EntropyStore() = default;
  EntropyStore(int subgroup, int n_features, Mask present, LevelBounds bounds)
      : subgroup_(subgroup), n_(n_features), present_(present), bounds_(bounds) {
    if (n_features < 1 || n_features > kMaxFeatures) throw ValidationError("EntropyStore: bad feature count");
    const std::size_t size = std::size_t{1} << n_features;
    h_.assign(size, std::numeric_limits<double>::quiet_NaN());
    hy_.assign(size, std::numeric_limits<double>::quiet_NaN());
  }

  int subgroup() const { return subgroup_; }
  int n_features() const { return n_; }
  Mask present() const { return present_; }
  const LevelBounds& bounds() const { return bounds_; }
  double h_y() const { return h_y_; }
  std::uint64_t subsets_visited() const { return visited_; }
  bool complete_rows() const { return h_target_.empty(); }

  bool has(Mask s) const { return s != 0 && s < h_.size() && !std::isnan(h_[s]); }

  double entropy(Mask s) const { return lookup(h_, s); }
  double entropy_with_target(Mask s) const { return lookup(hy_, s); }
  // H(Y) over the rows usable for s; equals h_y() when no present column
  // has stray NULLs.
  double target_entropy(Mask s) const { return h_target_.empty() ? h_y_ : lookup(h_target_, s); }

  // H(f | S) = H(S + f) - H(S); both subsets must be stored.
  double conditional_entropy(int f, Mask s) const { return entropy(s | (Mask{1} << f)) - entropy(s); }

  // Raw MI before clamping; used by tolerance checks.
  double mi_unclamped(Mask s) const {
    check_computable(s);
    return entropy(s) + target_entropy(s) - entropy_with_target(s);
  }

  double mi(Mask s) const {
    const double v = mi_unclamped(s);
    return v < 0.0 ? 0.0 : v;
  }

  std::vector<Mask> stored_subsets() const {
    std::vector<Mask> out;
    for (Mask s = 1; s < h_.size(); ++s) {
      if (!std::isnan(h_[s])) out.push_back(s);
    }
    return out;
  }

  // Writes one entry. Used by the builder and the loader, and by tests that
  // corrupt entries on purpose.
  void set_entry(Mask s, double h, double hy, double h_target = std::numeric_limits<double>::quiet_NaN()) {
    if (s == 0 || s >= h_.size()) throw ValidationError("EntropyStore: subset out of range");
    h_[s] = h;
    hy_[s] = hy;
    if (!std::isnan(h_target)) {
      if (h_target_.empty()) h_target_.assign(h_.size(), std::numeric_limits<double>::quiet_NaN());
      h_target_[s] = h_target;
    }
  }
  void set_h_y(double v) { h_y_ = v; }
  void count_visit() { ++visited_; }

  bool operator==(const EntropyStore& o) const {
    auto same = [](const std::vector<double>& a, const std::vector<double>& b) {
      if (a.size() != b.size()) return false;
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::isnan(a[i]) != std::isnan(b[i])) return false;
        if (!std::isnan(a[i]) && std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
      }
      return true;
    };
    return subgroup_ == o.subgroup_ && n_ == o.n_ && present_ == o.present_ && bounds_.min == o.bounds_.min &&
           bounds_.max == o.bounds_.max && std::bit_cast<std::uint64_t>(h_y_) == std::bit_cast<std::uint64_t>(o.h_y_) &&
           same(h_, o.h_) && same(hy_, o.hy_) && same(h_target_, o.h_target_);
  }

 private:
  double lookup(const std::vector<double>& table, Mask s) const {
    if (s == 0 || s >= table.size() || std::isnan(table[s])) {
      throw ValidationError("EntropyStore: subset " + FeatureSubset(s).to_string(n_) + " not stored");
    }
    return table[s];
  }

  void check_computable(Mask s) const {
    if (s == 0) throw ValidationError("EntropyStore: empty subset");
    if ((s & ~present_) != 0) {
      throw MissingFeatureError("subset " + FeatureSubset(s).to_string(n_) +
                                " contains a systematically missing feature; predict instead");
    }
  }

  int subgroup_ = 0;
  int n_ = 0;
  Mask present_ = 0;
  LevelBounds bounds_;
  double h_y_ = 0.0;
  std::uint64_t visited_ = 0;
  std::vector<double> h_, hy_, h_target_;
};

namespace detail {

// Depth-first walk over subsets of `present`. Each child refines its
// parent's row partition by a single column, so a subset costs two linear
// passes over the rows regardless of its size.
class StoreBuilder {
 public:
  StoreBuilder(const TableView& view, EntropyStore& store, Mask present, LevelBounds bounds)
      : view_(view), store_(store), bounds_(bounds) {
    for (Mask b = present; b != 0; b &= b - 1) features_.push_back(std::countr_zero(b));
    rows_ = view.n_rows();
    for (std::size_t r = 0; r < rows_; ++r) {
      for (int f : features_) {
        if (view.columns[static_cast<std::size_t>(f)][r] == kNull) has_nulls_ = true;
      }
    }
  }

  void run() {
    std::vector<std::uint32_t> root(rows_, 0);
    std::vector<std::uint64_t> ycount(static_cast<std::size_t>(view_.target_domain), 0);
    for (std::size_t r = 0; r < rows_; ++r) ++ycount[view_.target[r]];
    store_.set_h_y(entropy_from_counts(ycount, rows_));
    visit(0, 0, root, rows_ == 0 ? 0 : 1);
  }

 private:
  static constexpr std::uint32_t kInvalid = 0xFFFFFFFFu;

  void visit(Mask subset, std::size_t next, const std::vector<std::uint32_t>& ids, std::uint32_t groups) {
    const int level = std::popcount(subset);
    if (level >= bounds_.max) return;
    std::vector<std::uint32_t> child(rows_);
    for (std::size_t i = next; i < features_.size(); ++i) {
      const int f = features_[i];
      const Mask s = subset | (Mask{1} << f);
      const std::uint32_t child_groups = refine(ids, groups, f, child);
      record(s, child, child_groups);
      visit(s, i + 1, child, child_groups);
    }
  }

  std::uint32_t refine(const std::vector<std::uint32_t>& ids, std::uint32_t groups, int f,
                       std::vector<std::uint32_t>& out) {
    const auto& col = view_.columns[static_cast<std::size_t>(f)];
    const std::uint32_t dom = static_cast<std::uint32_t>(view_.domain_sizes[static_cast<std::size_t>(f)]);
    remap_.assign(static_cast<std::size_t>(groups) * dom, kInvalid);
    std::uint32_t next = 0;
    for (std::size_t r = 0; r < rows_; ++r) {
      const Code v = col[r];
      if (ids[r] == kInvalid || v == kNull) {
        out[r] = kInvalid;
        continue;
      }
      std::uint32_t& slot = remap_[static_cast<std::size_t>(ids[r]) * dom + v];
      if (slot == kInvalid) slot = next++;
      out[r] = slot;
    }
    return next;
  }

  void record(Mask s, const std::vector<std::uint32_t>& ids, std::uint32_t groups) {
    store_.count_visit();
    if (!bounds_.contains(std::popcount(s))) return;
    const std::size_t ydom = static_cast<std::size_t>(view_.target_domain);
    cx_.assign(groups, 0);
    cxy_.assign(static_cast<std::size_t>(groups) * ydom, 0);
    std::uint64_t total = 0;
    if (has_nulls_) cy_.assign(ydom, 0);
    for (std::size_t r = 0; r < rows_; ++r) {
      const std::uint32_t g = ids[r];
      if (g == kInvalid) continue;
      ++cx_[g];
      ++cxy_[static_cast<std::size_t>(g) * ydom + view_.target[r]];
      if (has_nulls_) ++cy_[view_.target[r]];
      ++total;
    }
    const double h = entropy_from_counts(cx_, total);
    const double hy = entropy_from_counts(cxy_, total);
    if (has_nulls_) {
      store_.set_entry(s, h, hy, entropy_from_counts(cy_, total));
    } else {
      store_.set_entry(s, h, hy);
    }
  }

  const TableView& view_;
  EntropyStore& store_;
  LevelBounds bounds_;
  std::vector<int> features_;
  std::size_t rows_ = 0;
  bool has_nulls_ = false;
  std::vector<std::uint32_t> remap_;
  std::vector<std::uint64_t> cx_, cxy_, cy_;
};

}  // namespace detail

// Materializes H(S) and H(S + Y) for every subset S of `present` whose level
// lies in bounds. Subsets below level_min are walked (they are parents) but
// not stored.
inline EntropyStore build_entropy_store(const TableView& view, int subgroup, Mask present, LevelBounds bounds) {
  if (bounds.max < 1) throw ValidationError("build_entropy_store: level_max must be >= 1");
  if (present == 0) throw ValidationError("build_entropy_store: no present features");
  const int n = view.n_features();
  validate_bounds(bounds, n);
  EntropyStore store(subgroup, n, present, bounds);
  detail::StoreBuilder builder(view, store, present, bounds);
  builder.run();
  return store;
}

inline EntropyStore build_entropy_store(const SubgroupData& sg, LevelBounds bounds) {
  return build_entropy_store(observed_view(sg), sg.index, sg.present, bounds);
}

inline double mi_shared(const EntropyStore& store, Mask subset) { return store.mi(subset); }

struct ClosureViolation {
  Mask subset;
  Mask superset;
  double mi_subset;
  double mi_superset;
};

// Pairs (S, T) with S one feature smaller than T and MI(S) > MI(T) + 1e-12.
inline std::vector<ClosureViolation> verify_upward_closure(const EntropyStore& store) {
  std::vector<ClosureViolation> out;
  for (Mask t : store.stored_subsets()) {
    if (std::popcount(t) < 2) continue;
    const double mt = store.mi_unclamped(t);
    for (Mask b = t; b != 0; b &= b - 1) {
      const Mask s = t & ~(b & (~b + 1));
      if (!store.has(s)) continue;
      const double ms = store.mi_unclamped(s);
      if (ms > mt + kMiTolerance) out.push_back({s, t, ms, mt});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence. Doubles are written with shortest round-trip formatting, so
// reloading reproduces every entry bit for bit.

inline nlohmann::json to_json(const EntropyStore& store) {
  nlohmann::json j;
  j["subgroup"] = store.subgroup();
  j["n_features"] = store.n_features();
  j["present_mask"] = store.present();
  j["level_min"] = store.bounds().min;
  j["level_max"] = store.bounds().max;
  j["h_y"] = store.h_y();
  j["entries"] = nlohmann::json::array();
  for (Mask s : store.stored_subsets()) {
    nlohmann::json e = {s, store.entropy(s), store.entropy_with_target(s)};
    if (!store.complete_rows()) e.push_back(store.target_entropy(s));
    j["entries"].push_back(std::move(e));
  }
  return j;
}

inline EntropyStore entropy_store_from_json(const nlohmann::json& j) {
  EntropyStore store(j.at("subgroup").get<int>(), j.at("n_features").get<int>(), j.at("present_mask").get<Mask>(),
                     {j.at("level_min").get<int>(), j.at("level_max").get<int>()});
  store.set_h_y(j.at("h_y").get<double>());
  for (const auto& e : j.at("entries")) {
    if (e.size() == 4) {
      store.set_entry(e[0].get<Mask>(), e[1].get<double>(), e[2].get<double>(), e[3].get<double>());
    } else {
      store.set_entry(e[0].get<Mask>(), e[1].get<double>(), e[2].get<double>());
    }
  }
  return store;
}

}  // namespace misfeat
