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

// Tabular data model: discretized columns with a NULL sentinel, subgroups
// selected by minterm predicates, and systematic (whole-column) missingness.
//
// Cells are stored column-major as small dense codes 0..|dom|-1. Numeric
// columns keep raw doubles until discretize() turns them into codes.

#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "misfeat/error.hpp"
#include "misfeat/feature_subset.hpp"
#include "misfeat/random.hpp"

namespace misfeat {

using Code = std::uint8_t;
inline constexpr Code kNull = 0xFF;
inline constexpr int kMaxDomain = 9;

enum class ColumnKind { kCategorical, kNumeric };

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::kCategorical;
  std::vector<std::string> domain;  // code -> label
  std::vector<double> bin_edges;    // interior edges, set by discretize()

  bool operator==(const ColumnSpec&) const = default;
};

struct Column {
  ColumnSpec spec;
  std::vector<Code> codes;     // categorical cells, kNull for NULL
  std::vector<double> values;  // numeric cells, NaN for NULL

  bool is_null(std::size_t row) const {
    return spec.kind == ColumnKind::kNumeric ? std::isnan(values[row]) : codes[row] == kNull;
  }

  bool operator==(const Column& o) const {
    if (!(spec == o.spec) || codes != o.codes || values.size() != o.values.size()) return false;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const bool an = std::isnan(values[i]), bn = std::isnan(o.values[i]);
      if (an != bn || (!an && values[i] != o.values[i])) return false;
    }
    return true;
  }
};

struct Schema {
  std::vector<ColumnSpec> columns;  // CSV order, target included
  std::string target;

  bool operator==(const Schema&) const = default;
};

class Dataset {
 public:
  std::vector<Column> features;
  Column target;

  std::size_t n_rows() const { return target.codes.size(); }
  int n_columns() const { return static_cast<int>(features.size()); }

  int column_index(const std::string& name) const {
    for (int c = 0; c < n_columns(); ++c) {
      if (features[static_cast<std::size_t>(c)].spec.name == name) return c;
    }
    return -1;
  }

  Schema schema() const {
    Schema s;
    for (const auto& c : features) s.columns.push_back(c.spec);
    s.columns.push_back(target.spec);
    s.target = target.spec.name;
    return s;
  }

  bool operator==(const Dataset&) const = default;
};

// ---------------------------------------------------------------------------
// Schema sidecar

inline nlohmann::json to_json(const ColumnSpec& c) {
  nlohmann::json j;
  j["name"] = c.name;
  j["type"] = c.kind == ColumnKind::kNumeric ? "numeric" : "categorical";
  if (c.kind == ColumnKind::kCategorical) j["domain"] = c.domain;
  if (!c.bin_edges.empty()) j["bin_edges"] = c.bin_edges;
  return j;
}

inline nlohmann::json to_json(const Schema& s) {
  nlohmann::json j;
  j["target"] = s.target;
  j["columns"] = nlohmann::json::array();
  for (const auto& c : s.columns) j["columns"].push_back(to_json(c));
  return j;
}

inline Schema schema_from_json(const nlohmann::json& j) {
  Schema s;
  try {
    s.target = j.at("target").get<std::string>();
    for (const auto& jc : j.at("columns")) {
      ColumnSpec c;
      c.name = jc.at("name").get<std::string>();
      const std::string type = jc.value("type", "categorical");
      if (type == "numeric") {
        c.kind = ColumnKind::kNumeric;
      } else if (type == "categorical") {
        c.domain = jc.at("domain").get<std::vector<std::string>>();
        if (c.domain.empty() || c.domain.size() >= kNull) {
          throw ValidationError("schema: column '" + c.name + "' has unusable domain size");
        }
      } else {
        throw ValidationError("schema: unknown column type '" + type + "'");
      }
      if (jc.contains("bin_edges")) c.bin_edges = jc.at("bin_edges").get<std::vector<double>>();
      s.columns.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("schema: ") + e.what());
  }
  const auto it = std::find_if(s.columns.begin(), s.columns.end(),
                               [&](const ColumnSpec& c) { return c.name == s.target; });
  if (it == s.columns.end()) throw ValidationError("schema: target '" + s.target + "' not among columns");
  if (it->kind != ColumnKind::kCategorical) throw ValidationError("schema: target must be categorical");
  return s;
}

inline Schema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeError("cannot open schema file " + path);
  try {
    return schema_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("schema " + path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline Dataset read_dataset(std::istream& in, const Schema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("csv: missing header row");
  const auto header = detail::split_csv_line(line);
  if (header.size() != schema.columns.size()) {
    throw ValidationError("csv: header has " + std::to_string(header.size()) + " columns, schema has " +
                          std::to_string(schema.columns.size()));
  }
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] != schema.columns[c].name) {
      throw ValidationError("csv: header column '" + header[c] + "' does not match schema '" +
                            schema.columns[c].name + "'");
    }
  }

  Dataset ds;
  std::vector<Column*> slots;
  for (const auto& spec : schema.columns) {
    if (spec.name == schema.target) continue;
    ds.features.push_back(Column{spec, {}, {}});
  }
  {
    std::size_t f = 0;
    for (const auto& spec : schema.columns) {
      if (spec.name == schema.target) {
        ds.target.spec = spec;
        slots.push_back(&ds.target);
      } else {
        slots.push_back(&ds.features[f++]);
      }
    }
  }

  std::vector<std::map<std::string, Code>> lookup(schema.columns.size());
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const auto& dom = schema.columns[c].domain;
    for (std::size_t v = 0; v < dom.size(); ++v) lookup[c][dom[v]] = static_cast<Code>(v);
  }

  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != schema.columns.size()) {
      throw ValidationError("csv: row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                            " cells, expected " + std::to_string(schema.columns.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      Column& col = *slots[c];
      const std::string& cell = cells[c];
      if (col.spec.kind == ColumnKind::kNumeric) {
        if (cell.empty()) {
          col.values.push_back(std::numeric_limits<double>::quiet_NaN());
          continue;
        }
        double v = 0;
        const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
          throw ValidationError("csv: row " + std::to_string(row) + " column '" + col.spec.name +
                                "': '" + cell + "' is not numeric");
        }
        col.values.push_back(v);
        continue;
      }
      if (cell.empty()) {
        if (slots[c] == &ds.target) {
          throw ValidationError("csv: row " + std::to_string(row) + " has NULL target");
        }
        col.codes.push_back(kNull);
        continue;
      }
      const auto it = lookup[c].find(cell);
      if (it == lookup[c].end()) {
        throw ValidationError("csv: row " + std::to_string(row) + " column '" + col.spec.name + "': value '" +
                              cell + "' outside declared domain");
      }
      col.codes.push_back(it->second);
    }
  }
  return ds;
}

inline Dataset load_dataset(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw RuntimeError("cannot open dataset " + path);
  return read_dataset(in, schema);
}

inline void write_dataset(std::ostream& out, const Dataset& ds) {
  auto cell = [](const Column& c, std::size_t r) -> std::string {
    if (c.is_null(r)) return {};
    if (c.spec.kind == ColumnKind::kNumeric) return detail::format_double(c.values[r]);
    return c.spec.domain[c.codes[r]];
  };
  for (const auto& c : ds.features) out << c.spec.name << ',';
  out << ds.target.spec.name << '\n';
  for (std::size_t r = 0; r < ds.n_rows(); ++r) {
    for (const auto& c : ds.features) out << cell(c, r) << ',';
    out << cell(ds.target, r) << '\n';
  }
}

inline void save_dataset(const std::string& csv_path, const std::string& schema_path, const Dataset& ds) {
  std::ofstream out(csv_path);
  if (!out) throw RuntimeError("cannot write " + csv_path);
  write_dataset(out, ds);
  std::ofstream js(schema_path);
  if (!js) throw RuntimeError("cannot write " + schema_path);
  js << to_json(ds.schema()).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Discretization

// Right-closed bins: code k holds values in (edge[k-1], edge[k]]; the first
// bin also holds everything at or below edge[0].
inline Dataset discretize_with_edges(const Dataset& in, const std::string& column, std::vector<double> edges) {
  const int c = in.column_index(column);
  if (c < 0) throw ValidationError("discretize: unknown column '" + column + "'");
  if (!std::is_sorted(edges.begin(), edges.end())) throw ValidationError("discretize: edges must be sorted");
  const int n_bins = static_cast<int>(edges.size()) + 1;
  if (n_bins < 2 || n_bins > kMaxDomain) throw ValidationError("discretize: bin count must be in [2, 9]");

  Dataset out = in;
  Column& col = out.features[static_cast<std::size_t>(c)];
  const Column& src = in.features[static_cast<std::size_t>(c)];
  std::vector<double> numeric(in.n_rows());
  for (std::size_t r = 0; r < in.n_rows(); ++r) {
    numeric[r] = src.is_null(r) ? std::numeric_limits<double>::quiet_NaN()
                 : src.spec.kind == ColumnKind::kNumeric ? src.values[r]
                                                         : static_cast<double>(src.codes[r]);
  }
  col.values.clear();
  col.codes.assign(in.n_rows(), kNull);
  for (std::size_t r = 0; r < in.n_rows(); ++r) {
    if (std::isnan(numeric[r])) continue;
    const auto it = std::lower_bound(edges.begin(), edges.end(), numeric[r]);
    col.codes[r] = static_cast<Code>(it - edges.begin());
  }
  col.spec.kind = ColumnKind::kCategorical;
  col.spec.domain.clear();
  for (int b = 0; b < n_bins; ++b) col.spec.domain.push_back("bin" + std::to_string(b));
  col.spec.bin_edges = std::move(edges);
  return out;
}

// Equal-width binning over the observed range. Categorical columns are
// binned by their codes, which is how wide categorical domains get folded
// down to at most nine values.
inline Dataset discretize(const Dataset& in, const std::string& column, int n_bins) {
  const int c = in.column_index(column);
  if (c < 0) throw ValidationError("discretize: unknown column '" + column + "'");
  if (n_bins < 2 || n_bins > kMaxDomain) throw ValidationError("discretize: n_bins must be in [2, 9]");
  const Column& src = in.features[static_cast<std::size_t>(c)];
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t r = 0; r < in.n_rows(); ++r) {
    if (src.is_null(r)) continue;
    const double v = src.spec.kind == ColumnKind::kNumeric ? src.values[r] : static_cast<double>(src.codes[r]);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (src.spec.kind == ColumnKind::kCategorical) {
    lo = 0;
    hi = static_cast<double>(src.spec.domain.size() - 1);
  }
  std::vector<double> edges;
  if (!(hi > lo)) {
    // Degenerate range: every value lands in bin 0.
    const double base = std::isfinite(lo) ? lo : 0.0;
    for (int b = 1; b < n_bins; ++b) edges.push_back(base + b);
  } else {
    const double width = (hi - lo) / n_bins;
    for (int b = 1; b < n_bins; ++b) edges.push_back(lo + width * b);
  }
  return discretize_with_edges(in, column, std::move(edges));
}

// ---------------------------------------------------------------------------
// Subgroups

struct Literal {
  std::string feature;
  Code value = 0;

  bool operator==(const Literal&) const = default;
};

using Predicate = std::vector<Literal>;

struct SubgroupSpec {
  std::vector<std::string> subgroup_features;  // F'
  std::vector<std::string> selection_features;  // F^S, in dataset order
  std::vector<int> selection_columns;           // dataset column per selection feature
  std::vector<Predicate> predicates;            // one per non-empty subgroup
};

struct SubgroupData {
  int index = 0;
  Predicate predicate;
  std::vector<std::size_t> row_ids;  // rows of the source dataset
  int n_features = 0;                // |F^S|
  Mask present = 0;                  // F_i^+
  Mask missing = 0;                  // F_i^-
  Mask injected = 0;                 // subset of F_i^- blanked by injection

  std::vector<std::vector<Code>> columns;  // observed cells [feature][row]
  std::vector<std::vector<Code>> shadow;   // pre-injection cells, evaluation only
  std::vector<Code> target;
  std::vector<int> domain_sizes;
  int target_domain = 0;

  std::size_t n_rows() const { return target.size(); }
  Mask selection_mask() const { return full_mask(n_features); }
};

struct Partition {
  SubgroupSpec spec;
  std::vector<SubgroupData> subgroups;
};

namespace detail {

inline Mask detect_missing(const std::vector<std::vector<Code>>& columns) {
  Mask missing = 0;
  for (std::size_t f = 0; f < columns.size(); ++f) {
    const bool all_null = std::all_of(columns[f].begin(), columns[f].end(), [](Code v) { return v == kNull; });
    if (all_null) missing |= Mask{1} << f;
  }
  return missing;
}

}  // namespace detail

inline Partition partition_subgroups(const Dataset& ds, const std::vector<std::string>& subgroup_features) {
  if (subgroup_features.empty()) throw ValidationError("partition: no subgrouping features");
  std::vector<int> group_cols;
  for (const auto& name : subgroup_features) {
    if (name == ds.target.spec.name) throw ValidationError("partition: subgroup feature equals target '" + name + "'");
    const int c = ds.column_index(name);
    if (c < 0) throw ValidationError("partition: unknown subgroup feature '" + name + "'");
    group_cols.push_back(c);
  }
  Partition part;
  part.spec.subgroup_features = subgroup_features;
  for (int c = 0; c < ds.n_columns(); ++c) {
    if (std::find(group_cols.begin(), group_cols.end(), c) != group_cols.end()) continue;
    part.spec.selection_columns.push_back(c);
    part.spec.selection_features.push_back(ds.features[static_cast<std::size_t>(c)].spec.name);
  }
  const int n = static_cast<int>(part.spec.selection_columns.size());
  if (n < 1) throw ValidationError("partition: no selection features remain");
  if (n > kMaxFeatures) throw ValidationError("partition: too many selection features (" + std::to_string(n) + ")");

  auto check_preprocessed = [](const Column& col) {
    if (col.spec.kind != ColumnKind::kCategorical) {
      throw ValidationError("column '" + col.spec.name + "' is numeric; discretize it first");
    }
    if (col.spec.domain.size() > static_cast<std::size_t>(kMaxDomain)) {
      throw ValidationError("column '" + col.spec.name + "' has more than 9 values; discretize it first");
    }
  };
  for (const auto& col : ds.features) check_preprocessed(col);
  check_preprocessed(ds.target);

  std::map<std::vector<Code>, std::vector<std::size_t>> groups;
  for (std::size_t r = 0; r < ds.n_rows(); ++r) {
    std::vector<Code> key;
    for (int c : group_cols) {
      const Code v = ds.features[static_cast<std::size_t>(c)].codes[r];
      if (v == kNull) {
        throw ValidationError("partition: NULL in subgrouping feature '" +
                              ds.features[static_cast<std::size_t>(c)].spec.name + "' at row " + std::to_string(r));
      }
      key.push_back(v);
    }
    groups[key].push_back(r);
  }

  int index = 0;
  for (auto& [key, rows] : groups) {
    SubgroupData sg;
    sg.index = index++;
    for (std::size_t k = 0; k < key.size(); ++k) sg.predicate.push_back({subgroup_features[k], key[k]});
    sg.row_ids = std::move(rows);
    sg.n_features = n;
    sg.columns.resize(static_cast<std::size_t>(n));
    for (int f = 0; f < n; ++f) {
      const Column& col = ds.features[static_cast<std::size_t>(part.spec.selection_columns[static_cast<std::size_t>(f)])];
      auto& dst = sg.columns[static_cast<std::size_t>(f)];
      dst.reserve(sg.row_ids.size());
      for (std::size_t r : sg.row_ids) dst.push_back(col.codes[r]);
      sg.domain_sizes.push_back(static_cast<int>(col.spec.domain.size()));
    }
    for (std::size_t r : sg.row_ids) sg.target.push_back(ds.target.codes[r]);
    sg.target_domain = static_cast<int>(ds.target.spec.domain.size());
    sg.shadow = sg.columns;
    sg.missing = detail::detect_missing(sg.columns);
    sg.present = full_mask(n) & ~sg.missing;
    part.spec.predicates.push_back(sg.predicate);
    part.subgroups.push_back(std::move(sg));
  }
  return part;
}

// Blanks every feature in `mask` for the subgroup; shadow values are kept.
inline void blank_features(SubgroupData& sg, Mask mask) {
  for (int f = 0; f < sg.n_features; ++f) {
    if (!((mask >> f) & 1U)) continue;
    std::fill(sg.columns[static_cast<std::size_t>(f)].begin(), sg.columns[static_cast<std::size_t>(f)].end(), kNull);
  }
  sg.injected |= mask & sg.present;
  sg.missing |= mask;
  sg.present &= ~mask;
}

inline void restore_feature(SubgroupData& sg, int f) {
  sg.columns[static_cast<std::size_t>(f)] = sg.shadow[static_cast<std::size_t>(f)];
  const Mask bit = Mask{1} << f;
  sg.injected &= ~bit;
  sg.missing &= ~bit;
  sg.present |= bit;
}

// Injects systematic missingness: each (subgroup, feature) pair is blanked
// with probability p. Repair then (1) gives every globally absent feature
// back to one uniformly chosen subgroup that had it blanked, and (2) blanks a
// uniformly chosen feature in every subgroup left without a missing one,
// drawing only among features still present in some other subgroup. When no
// such feature exists, a uniformly chosen (feature, subgroup) pair is moved
// instead: the feature is restored in the other subgroup and blanked here.
inline std::vector<SubgroupData> inject_systematic_missingness(std::vector<SubgroupData> subgroups, double p,
                                                               std::uint64_t seed) {
  if (!(p >= 0.0 && p < 1.0)) throw ValidationError("inject: p must lie in [0, 1)");
  if (subgroups.empty()) throw ValidationError("inject: no subgroups");
  const int n = subgroups.front().n_features;
  if (n < 2) throw ValidationError("inject: at least two features are required");
  if (subgroups.size() < 2) {
    throw ValidationError("inject: a single subgroup cannot both miss a feature and keep every feature present");
  }
  Rng rng = make_rng(seed, 0x6d697373ULL);

  for (auto& sg : subgroups) {
    Mask drop = 0;
    for (int f = 0; f < n; ++f) {
      if (bernoulli(rng, p)) drop |= Mask{1} << f;
    }
    blank_features(sg, drop & sg.present);
  }

  auto holders = [&](int f) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < subgroups.size(); ++i) {
      if ((subgroups[i].present >> f) & 1U) out.push_back(i);
    }
    return out;
  };

  for (int f = 0; f < n; ++f) {
    if (!holders(f).empty()) continue;
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < subgroups.size(); ++i) {
      if ((subgroups[i].injected >> f) & 1U) candidates.push_back(i);
    }
    if (candidates.empty()) {
      throw ValidationError("inject: feature " + std::to_string(f) + " is observed in no subgroup");
    }
    restore_feature(subgroups[candidates[uniform_index(rng, candidates.size())]], f);
  }

  for (std::size_t i = 0; i < subgroups.size(); ++i) {
    auto& sg = subgroups[i];
    if (sg.missing != 0) continue;
    std::vector<int> candidates;
    for (int f = 0; f < n; ++f) {
      if (holders(f).size() >= 2) candidates.push_back(f);
    }
    if (!candidates.empty()) {
      blank_features(sg, Mask{1} << candidates[uniform_index(rng, candidates.size())]);
      continue;
    }
    // Step (1) left this subgroup as the only holder of everything it has.
    // Move one such feature to another subgroup that had it blanked and
    // still misses something else.
    std::vector<std::pair<int, std::size_t>> moves;
    for (int f = 0; f < n; ++f) {
      if (!((sg.present >> f) & 1U)) continue;
      for (std::size_t j = 0; j < subgroups.size(); ++j) {
        if (j != i && ((subgroups[j].injected >> f) & 1U) && std::popcount(subgroups[j].missing) >= 2) {
          moves.emplace_back(f, j);
        }
      }
    }
    if (moves.empty()) throw ValidationError("inject: no feature can be blanked in subgroup " + std::to_string(i));
    const auto [f, j] = moves[uniform_index(rng, moves.size())];
    restore_feature(subgroups[j], f);
    blank_features(sg, Mask{1} << f);
  }
  return subgroups;
}

// ---------------------------------------------------------------------------
// Subgroup sidecar: predicates and missingness masks. The observed cells are
// rebuilt from the dataset with apply_subgroup_masks().

inline nlohmann::json to_json(const Partition& part) {
  nlohmann::json j;
  j["subgroup_features"] = part.spec.subgroup_features;
  j["selection_features"] = part.spec.selection_features;
  j["subgroups"] = nlohmann::json::array();
  for (const auto& sg : part.subgroups) {
    nlohmann::json js;
    js["index"] = sg.index;
    js["predicate"] = nlohmann::json::array();
    for (const auto& lit : sg.predicate) js["predicate"].push_back({{"feature", lit.feature}, {"value", lit.value}});
    js["n_rows"] = sg.n_rows();
    js["present_mask"] = sg.present;
    js["missing_mask"] = sg.missing;
    js["injected_mask"] = sg.injected;
    js["present"] = FeatureSubset(sg.present).to_string(sg.n_features);
    j["subgroups"].push_back(std::move(js));
  }
  return j;
}

inline void apply_subgroup_masks(Partition& part, const nlohmann::json& j) {
  const auto& arr = j.at("subgroups");
  if (arr.size() != part.subgroups.size()) {
    throw ValidationError("subgroup sidecar lists " + std::to_string(arr.size()) + " subgroups, dataset yields " +
                          std::to_string(part.subgroups.size()));
  }
  for (std::size_t i = 0; i < arr.size(); ++i) {
    auto& sg = part.subgroups[i];
    if (arr[i].at("n_rows").get<std::size_t>() != sg.n_rows()) {
      throw ValidationError("subgroup sidecar row count mismatch for subgroup " + std::to_string(i));
    }
    blank_features(sg, arr[i].at("injected_mask").get<Mask>());
    if (sg.missing != arr[i].at("missing_mask").get<Mask>()) {
      throw ValidationError("subgroup sidecar missing mask mismatch for subgroup " + std::to_string(i));
    }
  }
}

}  // namespace misfeat
