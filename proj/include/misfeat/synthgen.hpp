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

// Synthetic tabular data with a planted feature/target structure.
//
// Columns: "group" (subgrouping feature), then relevant r*, correlated c*,
// redundant d*, irrelevant x* features, then the target "y". Values are
// `bits`-wide integers combined bitwise.

#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "misfeat/data_model.hpp"
#include "misfeat/error.hpp"
#include "misfeat/info_theory.hpp"
#include "misfeat/random.hpp"

namespace misfeat {

// Bitwise expression over relevant features.
struct Expr {
  enum class Op { kVar, kNot, kAnd, kOr, kXor };
  Op op = Op::kVar;
  int var = 0;
  std::shared_ptr<const Expr> lhs, rhs;

  unsigned eval(const std::vector<unsigned>& r, unsigned mask) const {
    switch (op) {
      case Op::kVar: return r[static_cast<std::size_t>(var)];
      case Op::kNot: return ~lhs->eval(r, mask) & mask;
      case Op::kAnd: return lhs->eval(r, mask) & rhs->eval(r, mask);
      case Op::kOr: return lhs->eval(r, mask) | rhs->eval(r, mask);
      case Op::kXor: return lhs->eval(r, mask) ^ rhs->eval(r, mask);
    }
    return 0;
  }

  int max_var() const {
    if (op == Op::kVar) return var;
    int m = lhs->max_var();
    if (rhs) m = std::max(m, rhs->max_var());
    return m;
  }
};

namespace detail {

// expr := xor ('|' xor)* ; xor := and ('^' and)* ; and := unary ('&' unary)*
// unary := '~' unary | 'r' digits | '(' expr ')'
class ExprParser {
 public:
  explicit ExprParser(std::string text) : s_(std::move(text)) {}

  std::shared_ptr<const Expr> parse() {
    auto e = parse_binary(0);
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  static constexpr char kOps[] = {'|', '^', '&'};

  std::shared_ptr<const Expr> parse_binary(int level) {
    if (level == 3) return parse_unary();
    auto lhs = parse_binary(level + 1);
    while (true) {
      skip();
      if (pos_ >= s_.size() || s_[pos_] != kOps[level]) return lhs;
      ++pos_;
      auto node = std::make_shared<Expr>();
      node->op = level == 0 ? Expr::Op::kOr : level == 1 ? Expr::Op::kXor : Expr::Op::kAnd;
      node->lhs = lhs;
      node->rhs = parse_binary(level + 1);
      lhs = node;
    }
  }

  std::shared_ptr<const Expr> parse_unary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end");
    if (s_[pos_] == '~') {
      ++pos_;
      auto node = std::make_shared<Expr>();
      node->op = Expr::Op::kNot;
      node->lhs = parse_unary();
      return node;
    }
    if (s_[pos_] == '(') {
      ++pos_;
      auto e = parse_binary(0);
      skip();
      if (pos_ >= s_.size() || s_[pos_] != ')') fail("missing ')'");
      ++pos_;
      return e;
    }
    if (s_[pos_] == 'r') {
      ++pos_;
      const std::size_t start = pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      if (start == pos_) fail("expected a feature index after 'r'");
      auto node = std::make_shared<Expr>();
      node->var = std::stoi(s_.substr(start, pos_ - start));
      return node;
    }
    fail("unexpected '" + std::string(1, s_[pos_]) + "'");
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ValidationError("formula '" + s_ + "': " + what + " at position " + std::to_string(pos_));
  }

  std::string s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::shared_ptr<const Expr> parse_formula(const std::string& text) { return detail::ExprParser(text).parse(); }

enum class FeatureType { kRelevant, kCorrelated, kRedundant, kIrrelevant };

struct SynthConfig {
  std::size_t n_rows = 50'000;
  int n_subgroups = 4;
  int bits = 2;
  int n_relevant = 4;
  int n_correlated = 2;
  int n_redundant = 2;
  int n_irrelevant = 2;
  std::string formula = "(r0 ^ r1) | (r2 & r3)";
  double flip_rate = 0.2;   // correlated features: share of cells redrawn
  double noise_mean = 0.05;  // per-subgroup noise rate ~ N(mean, sd), clamped
  double noise_sd = 0.02;
  double missing_p = 0.2;
  std::uint64_t seed = 0;

  int n_features() const { return n_relevant + n_correlated + n_redundant + n_irrelevant; }
  int domain() const { return 1 << bits; }
};

// 15 and 20 feature collections with four subgroups.
inline SynthConfig sd1_config() {
  SynthConfig c;
  c.n_relevant = 4;
  c.n_correlated = 3;
  c.n_redundant = 3;
  c.n_irrelevant = 5;
  return c;
}

inline SynthConfig sd2_config() {
  SynthConfig c;
  c.n_relevant = 4;
  c.n_correlated = 4;
  c.n_redundant = 4;
  c.n_irrelevant = 8;
  return c;
}

inline void validate(const SynthConfig& c) {
  if (c.n_rows < 1) throw ValidationError("synth: n_rows must be >= 1");
  if (c.n_subgroups < 1 || c.n_subgroups > kMaxDomain) throw ValidationError("synth: n_subgroups must be in [1, 9]");
  if (c.bits < 1 || (1 << c.bits) > kMaxDomain) throw ValidationError("synth: bits must be 1, 2 or 3");
  if (c.n_relevant < 0 || c.n_correlated < 0 || c.n_redundant < 0 || c.n_irrelevant < 0) {
    throw ValidationError("synth: feature counts must be non-negative");
  }
  if (c.n_features() < 1 || c.n_features() > kMaxFeatures) throw ValidationError("synth: bad total feature count");
  if (c.n_redundant > 0 && c.n_relevant < 1) throw ValidationError("synth: redundant features need relevant ones");
  for (double r : {c.flip_rate, c.noise_mean, c.missing_p}) {
    if (!(r >= 0.0 && r < 1.0)) throw ValidationError("synth: rates must lie in [0, 1)");
  }
  if (c.noise_sd < 0.0) throw ValidationError("synth: noise_sd must be >= 0");
  if (c.n_relevant > 0 && parse_formula(c.formula)->max_var() >= c.n_relevant) {
    throw ValidationError("synth: formula uses a feature beyond n_relevant");
  }
}

inline std::vector<FeatureType> feature_types(const SynthConfig& c) {
  std::vector<FeatureType> t;
  t.insert(t.end(), static_cast<std::size_t>(c.n_relevant), FeatureType::kRelevant);
  t.insert(t.end(), static_cast<std::size_t>(c.n_correlated), FeatureType::kCorrelated);
  t.insert(t.end(), static_cast<std::size_t>(c.n_redundant), FeatureType::kRedundant);
  t.insert(t.end(), static_cast<std::size_t>(c.n_irrelevant), FeatureType::kIrrelevant);
  return t;
}

inline std::vector<std::string> feature_names(const SynthConfig& c) {
  std::vector<std::string> names;
  for (int k = 0; k < c.n_relevant; ++k) names.push_back("r" + std::to_string(k));
  for (int k = 0; k < c.n_correlated; ++k) names.push_back("c" + std::to_string(k));
  for (int k = 0; k < c.n_redundant; ++k) names.push_back("d" + std::to_string(k));
  for (int k = 0; k < c.n_irrelevant; ++k) names.push_back("x" + std::to_string(k));
  return names;
}

struct SynthOutput {
  Dataset dataset;            // complete cells, no missingness
  Partition partition;        // subgroups after injection; shadow holds the cells
  std::vector<double> noise;  // per-subgroup noise rate
};

namespace detail {

inline Column categorical_column(std::string name, int domain, std::size_t rows) {
  Column col;
  col.spec.name = std::move(name);
  for (int v = 0; v < domain; ++v) col.spec.domain.push_back(std::to_string(v));
  col.codes.assign(rows, 0);
  return col;
}

}  // namespace detail

// Redundant feature k combines two relevant features with AND, OR, XOR in
// turn: d_k = r_{k mod R} op r_{(k+2) mod R}.
inline Dataset generate_dataset(const SynthConfig& c, std::vector<double>* noise_out = nullptr) {
  validate(c);
  const int dom = c.domain();
  const auto mask = static_cast<unsigned>(dom - 1);
  const auto names = feature_names(c);
  const auto types = feature_types(c);
  const auto formula = c.n_relevant > 0 ? parse_formula(c.formula) : nullptr;
  Rng rng = make_rng(c.seed, 0x73796eULL);

  std::vector<double> noise(static_cast<std::size_t>(c.n_subgroups));
  for (auto& rate : noise) rate = std::clamp(normal(rng, c.noise_mean, c.noise_sd), 0.0, 0.99);

  Dataset ds;
  ds.features.push_back(detail::categorical_column("group", c.n_subgroups, c.n_rows));
  for (const auto& name : names) ds.features.push_back(detail::categorical_column(name, dom, c.n_rows));
  ds.target = detail::categorical_column("y", dom, c.n_rows);

  std::vector<unsigned> r(static_cast<std::size_t>(c.n_relevant));
  for (std::size_t row = 0; row < c.n_rows; ++row) {
    const auto g = static_cast<std::size_t>(uniform_index(rng, static_cast<std::uint64_t>(c.n_subgroups)));
    ds.features[0].codes[row] = static_cast<Code>(g);
    for (auto& v : r) v = static_cast<unsigned>(uniform_index(rng, static_cast<std::uint64_t>(dom)));
    const unsigned y =
        formula ? formula->eval(r, mask) : static_cast<unsigned>(uniform_index(rng, static_cast<std::uint64_t>(dom)));
    ds.target.codes[row] = static_cast<Code>(y);

    int redundant = 0;
    for (std::size_t f = 0; f < types.size(); ++f) {
      unsigned v = 0;
      switch (types[f]) {
        case FeatureType::kRelevant: v = r[f]; break;
        case FeatureType::kCorrelated:
          v = bernoulli(rng, c.flip_rate) ? static_cast<unsigned>(uniform_index(rng, static_cast<std::uint64_t>(dom)))
                                          : y;
          break;
        case FeatureType::kRedundant: {
          const auto R = static_cast<std::size_t>(c.n_relevant);
          const unsigned a = r[static_cast<std::size_t>(redundant) % R];
          const unsigned b = r[static_cast<std::size_t>(redundant + 2) % R];
          v = redundant % 3 == 0 ? (a & b) : redundant % 3 == 1 ? (a | b) : (a ^ b);
          ++redundant;
          break;
        }
        case FeatureType::kIrrelevant:
          v = static_cast<unsigned>(uniform_index(rng, static_cast<std::uint64_t>(dom)));
          break;
      }
      if (bernoulli(rng, noise[g])) v = static_cast<unsigned>(uniform_index(rng, static_cast<std::uint64_t>(dom)));
      ds.features[f + 1].codes[row] = static_cast<Code>(v);
    }
  }
  if (noise_out) *noise_out = noise;
  return ds;
}

inline SynthOutput generate(const SynthConfig& c) {
  SynthOutput out;
  out.dataset = generate_dataset(c, &out.noise);
  out.partition = partition_subgroups(out.dataset, {"group"});
  if (out.partition.subgroups.size() >= 2) {
    out.partition.subgroups =
        inject_systematic_missingness(std::move(out.partition.subgroups), c.missing_p, derive_seed(c.seed, 0x696e6aULL));
  }
  return out;
}

struct PlantReport {
  struct Row {
    int subgroup = 0;
    double informative = 0.0;  // mean level-1 MI of relevant and correlated features
    double irrelevant = 0.0;
    double margin = 0.0;
  };
  std::vector<Row> subgroups;
  bool separated = false;
  double min_margin = 0.0;
};

// Level-1 MI on the pre-injection cells: informative features should beat
// irrelevant ones in every subgroup.
inline PlantReport plant_check(const Partition& part, const SynthConfig& c) {
  const auto types = feature_types(c);
  PlantReport rep;
  bool comparable = false;
  for (const auto& sg : part.subgroups) {
    const TableView view = shadow_view(sg);
    double inf = 0.0, irr = 0.0;
    int n_inf = 0, n_irr = 0;
    for (std::size_t f = 0; f < types.size(); ++f) {
      const double mi = mi_direct(view, Mask{1} << f);
      if (types[f] == FeatureType::kRelevant || types[f] == FeatureType::kCorrelated) {
        inf += mi;
        ++n_inf;
      } else if (types[f] == FeatureType::kIrrelevant) {
        irr += mi;
        ++n_irr;
      }
    }
    comparable = n_inf > 0 && n_irr > 0;
    PlantReport::Row row{sg.index, n_inf ? inf / n_inf : 0.0, n_irr ? irr / n_irr : 0.0, 0.0};
    row.margin = row.informative - row.irrelevant;
    rep.subgroups.push_back(row);
  }
  rep.min_margin = rep.subgroups.empty() ? 0.0 : rep.subgroups.front().margin;
  for (const auto& r : rep.subgroups) rep.min_margin = std::min(rep.min_margin, r.margin);
  rep.separated = comparable && !rep.subgroups.empty() && rep.min_margin > 0.0;
  return rep;
}

inline nlohmann::json to_json(const PlantReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : r.subgroups) {
    rows.push_back({{"subgroup", s.subgroup},
                    {"informative_mi", s.informative},
                    {"irrelevant_mi", s.irrelevant},
                    {"margin", s.margin}});
  }
  return {{"separated", r.separated}, {"min_margin", r.min_margin}, {"subgroups", rows}};
}

}  // namespace misfeat
