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

// Comparison methods: KNN imputation followed by exact MI, and an MLP
// regressor on the subset's 0/1 encoding.

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "misfeat/data_model.hpp"
#include "misfeat/error.hpp"
#include "misfeat/feature_subset.hpp"
#include "misfeat/nn.hpp"
#include "misfeat/random.hpp"

namespace misfeat {

// ---------------------------------------------------------------------------
// KNN imputation

struct KnnConfig {
  int k = 5;
};

namespace detail {

// Rows packed four bits per feature so a Hamming distance is one XOR, a
// nibble fold and a popcount.
struct PackedRows {
  std::vector<std::uint64_t> cells;
  int words = 0;

  static int words_for(int n_features) { return (n_features + 15) / 16; }

  PackedRows(const std::vector<std::vector<Code>>& columns, std::size_t rows, int n_features)
      : words(words_for(n_features)) {
    cells.assign(rows * static_cast<std::size_t>(words), 0);
    for (int f = 0; f < n_features; ++f) {
      const auto& col = columns[static_cast<std::size_t>(f)];
      const int w = f / 16;
      const int shift = (f % 16) * 4;
      for (std::size_t r = 0; r < rows; ++r) {
        const std::uint64_t v = col[r] == kNull ? 0xF : col[r];
        cells[r * static_cast<std::size_t>(words) + static_cast<std::size_t>(w)] |= v << shift;
      }
    }
  }

  const std::uint64_t* row(std::size_t r) const { return cells.data() + r * static_cast<std::size_t>(words); }
};

inline std::vector<std::uint64_t> nibble_masks(Mask features, int words) {
  std::vector<std::uint64_t> m(static_cast<std::size_t>(words), 0);
  for (; features != 0; features &= features - 1) {
    const int f = std::countr_zero(features);
    m[static_cast<std::size_t>(f / 16)] |= std::uint64_t{1} << ((f % 16) * 4);
  }
  return m;
}

inline int hamming(const std::uint64_t* a, const std::uint64_t* b, const std::vector<std::uint64_t>& mask) {
  int d = 0;
  for (std::size_t w = 0; w < mask.size(); ++w) {
    std::uint64_t x = a[w] ^ b[w];
    x = (x | (x >> 1) | (x >> 2) | (x >> 3)) & mask[w];
    d += std::popcount(x);
  }
  return d;
}

}  // namespace detail

// Fills every systematically missing cell of `target` with the mode of the
// feature among its k nearest donor rows. Donors are rows of the other
// subgroups where the feature is observed; distance is Hamming over the
// features observed in both rows. Distance ties go to the lower donor row
// (subgroup order, then row order) and mode ties to the smaller value.
// Observed cells are never touched.
inline SubgroupData knn_impute(const SubgroupData& target, const std::vector<SubgroupData>& all, KnnConfig cfg = {}) {
  if (cfg.k < 1) throw ValidationError("knn: k must be >= 1");
  SubgroupData out = target;
  const int n = target.n_features;
  if (target.missing == 0) return out;

  struct Pool {
    const SubgroupData* sg;
    detail::PackedRows packed;
  };
  std::vector<Pool> pools;
  for (const auto& sg : all) {
    if (sg.index == target.index) continue;
    pools.push_back({&sg, detail::PackedRows(sg.columns, sg.n_rows(), n)});
  }
  const detail::PackedRows query(target.columns, target.n_rows(), n);
  const int max_dist = n;

  for (int f = 0; f < n; ++f) {
    if (!((target.missing >> f) & 1U)) continue;
    std::vector<std::size_t> donor_pools;
    for (std::size_t p = 0; p < pools.size(); ++p) {
      if ((pools[p].sg->present >> f) & 1U) donor_pools.push_back(p);
    }
    if (donor_pools.empty()) throw ValidationError("knn: feature " + std::to_string(f) + " is observed nowhere");
    std::vector<std::vector<std::uint64_t>> masks;
    for (std::size_t p : donor_pools) {
      masks.push_back(detail::nibble_masks(target.present & pools[p].sg->present & ~(Mask{1} << f), query.words));
    }
    auto& column = out.columns[static_cast<std::size_t>(f)];
    const int domain = target.domain_sizes[static_cast<std::size_t>(f)];
    std::vector<int> dist;
    for (std::size_t r = 0; r < target.n_rows(); ++r) {
      // Pass 1: histogram of distances to find the k-th smallest.
      std::vector<std::uint64_t> at(static_cast<std::size_t>(max_dist) + 1, 0);
      dist.clear();
      for (std::size_t q = 0; q < donor_pools.size(); ++q) {
        const Pool& pool = pools[donor_pools[q]];
        const auto& col = pool.sg->columns[static_cast<std::size_t>(f)];
        for (std::size_t d = 0; d < pool.sg->n_rows(); ++d) {
          if (col[d] == kNull) {
            dist.push_back(-1);
            continue;
          }
          const int h = detail::hamming(query.row(r), pool.packed.row(d), masks[q]);
          dist.push_back(h);
          ++at[static_cast<std::size_t>(h)];
        }
      }
      int cutoff = 0;
      std::uint64_t below = 0;
      while (cutoff < max_dist && below + at[static_cast<std::size_t>(cutoff)] < static_cast<std::uint64_t>(cfg.k)) {
        below += at[static_cast<std::size_t>(cutoff)];
        ++cutoff;
      }
      std::uint64_t ties_left = static_cast<std::uint64_t>(cfg.k) - below;
      // Pass 2: vote.
      std::array<int, kMaxDomain> votes{};
      std::size_t idx = 0;
      for (std::size_t q = 0; q < donor_pools.size(); ++q) {
        const auto& col = pools[donor_pools[q]].sg->columns[static_cast<std::size_t>(f)];
        for (std::size_t d = 0; d < col.size(); ++d, ++idx) {
          const int h = dist[idx];
          if (h < 0 || h > cutoff) continue;
          if (h == cutoff) {
            if (ties_left == 0) continue;
            --ties_left;
          }
          ++votes[col[d]];
        }
      }
      int best = 0;
      for (int v = 1; v < domain; ++v) {
        if (votes[static_cast<std::size_t>(v)] > votes[static_cast<std::size_t>(best)]) best = v;
      }
      column[r] = static_cast<Code>(best);
    }
  }
  out.present = out.selection_mask();
  out.missing = 0;
  out.injected = 0;
  return out;
}

// ---------------------------------------------------------------------------
// MLP regressor: input 0/1 vector, two ReLU hidden layers, scalar output.

struct MlpConfig {
  int hidden = 64;
  TrainHyper train;
};

class MlpModel {
 public:
  MlpModel() = default;
  MlpModel(int n_features, MlpConfig cfg, std::uint64_t seed) : n_(n_features), cfg_(cfg), seed_(seed) {
    if (n_features < 1 || cfg.hidden < 1) throw ValidationError("mlp: bad shape");
    w1_ = params_.add("w1", cfg.hidden, n_features, true);
    b1_ = params_.add("b1", 1, cfg.hidden, false);
    w2_ = params_.add("w2", cfg.hidden, cfg.hidden, true);
    b2_ = params_.add("b2", 1, cfg.hidden, false);
    w3_ = params_.add("w3", 1, cfg.hidden, true);
    b3_ = params_.add("b3", 1, 1, false);
    Rng rng = make_rng(seed, 0x6d6c70ULL);
    for (std::size_t k = 0; k < params_.tensors.size(); ++k) {
      if (params_.decay[k]) glorot_uniform(params_.tensors[k], rng);
    }
  }

  int n_features() const { return n_; }
  const MlpConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  Params& params() { return params_; }
  const Params& params() const { return params_; }

  struct Cache {
    Matrix x, z1, h1, z2, h2;
    Vector y;
  };

  Cache forward(const std::vector<Mask>& subsets) const {
    Cache c;
    c.x = Matrix::Zero(static_cast<Eigen::Index>(subsets.size()), n_);
    for (std::size_t r = 0; r < subsets.size(); ++r) {
      for (int f = 0; f < n_; ++f) {
        if ((subsets[r] >> f) & 1U) c.x(static_cast<Eigen::Index>(r), f) = 1.0;
      }
    }
    c.z1 = c.x * t(w1_).transpose();
    c.z1.rowwise() += t(b1_).row(0);
    c.h1 = c.z1.cwiseMax(0.0);
    c.z2 = c.h1 * t(w2_).transpose();
    c.z2.rowwise() += t(b2_).row(0);
    c.h2 = c.z2.cwiseMax(0.0);
    c.y = c.h2 * t(w3_).row(0).transpose();
    c.y.array() += t(b3_)(0, 0);
    return c;
  }

  Vector predict(const std::vector<Mask>& subsets) const { return forward(subsets).y; }

  template <class Relu = ReluGrad>
  Params backward(const Cache& c, const std::vector<double>& targets) const {
    Params g = params_.zeros_like();
    const auto n = static_cast<double>(targets.size());
    Vector dy(c.y.size());
    for (Eigen::Index r = 0; r < c.y.size(); ++r) dy(r) = 2.0 * (c.y(r) - targets[static_cast<std::size_t>(r)]) / n;
    g.tensors[w3_].row(0) = (c.h2.transpose() * dy).transpose();
    g.tensors[b3_](0, 0) = dy.sum();
    Matrix dh2 = dy * t(w3_).row(0);
    Matrix dz2 = c.z2.binaryExpr(dh2, [](double z, double u) { return Relu::apply(z, u); });
    g.tensors[w2_] = dz2.transpose() * c.h1;
    g.tensors[b2_].row(0) = dz2.colwise().sum();
    Matrix dh1 = dz2 * t(w2_);
    Matrix dz1 = c.z1.binaryExpr(dh1, [](double z, double u) { return Relu::apply(z, u); });
    g.tensors[w1_] = dz1.transpose() * c.x;
    g.tensors[b1_].row(0) = dz1.colwise().sum();
    return g;
  }

 private:
  const Matrix& t(std::size_t k) const { return params_.tensors[k]; }

  int n_ = 0;
  MlpConfig cfg_;
  std::uint64_t seed_ = 0;
  Params params_;
  std::size_t w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0, w3_ = 0, b3_ = 0;
};

namespace detail {

inline double mlp_mse(const Vector& y, const std::vector<double>& targets) {
  if (targets.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    const double e = y(static_cast<Eigen::Index>(r)) - targets[r];
    acc += e * e;
  }
  return acc / static_cast<double>(targets.size());
}

inline void unzip(const std::vector<LabeledNode>& nodes, std::vector<Mask>& subsets, std::vector<double>& targets) {
  subsets.clear();
  targets.clear();
  for (const auto& n : nodes) {
    subsets.push_back(n.subset);
    targets.push_back(n.target);
  }
}

}  // namespace detail

// Same protocol as the GNN: level-stratified validation share, full-batch
// Adam, best-validation epoch kept.
inline std::pair<MlpModel, TrainReport> mlp_train(int n_features, int subgroup, const std::vector<LabeledNode>& labels,
                                                  const MlpConfig& cfg, std::uint64_t seed) {
  if (labels.size() < 5) {
    throw ValidationError("mlp: subgroup " + std::to_string(subgroup) + " has " + std::to_string(labels.size()) +
                          " labels, at least 5 are required");
  }
  MlpModel model(n_features, cfg, derive_seed(seed, 0x100ULL + static_cast<std::uint64_t>(subgroup)));
  Rng split_rng = make_rng(seed, 0x73706c00ULL + static_cast<std::uint64_t>(subgroup));
  const Split split = stratified_split(labels, cfg.train.validation_fraction, split_rng);
  std::vector<Mask> train_x, val_x;
  std::vector<double> train_y, val_y;
  detail::unzip(split.train, train_x, train_y);
  detail::unzip(split.validation, val_x, val_y);

  TrainReport report = fit(model.params(), cfg.train, [&](Params&) {
    const auto cache = model.forward(train_x);
    EpochEval e;
    e.train_loss = detail::mlp_mse(cache.y, train_y);
    e.validation_loss = val_x.empty() ? 0.0 : detail::mlp_mse(model.predict(val_x), val_y);
    e.grads = model.backward(cache, train_y);
    return e;
  });
  report.subgroup = subgroup;
  report.train_count = split.train.size();
  report.validation_count = split.validation.size();
  return {std::move(model), std::move(report)};
}

// Predictions for the given subsets, clamped at zero.
inline std::map<Mask, double> mlp_predict(const MlpModel& model, const std::vector<Mask>& subsets) {
  const Vector y = model.predict(subsets);
  std::map<Mask, double> out;
  for (std::size_t r = 0; r < subsets.size(); ++r) out.emplace(subsets[r], std::max(0.0, y(static_cast<Eigen::Index>(r))));
  return out;
}

template <class Relu = ReluGrad>
double mlp_gradient_check(MlpModel model, const std::vector<LabeledNode>& labels, double epsilon) {
  std::vector<Mask> x;
  std::vector<double> y;
  detail::unzip(labels, x, y);
  auto loss = [&](const Params&) { return detail::mlp_mse(model.predict(x), y); };
  auto grad = [&](const Params&) { return model.backward<Relu>(model.forward(x), y); };
  return max_relative_gradient_error(model.params(), loss, grad, epsilon);
}

}  // namespace misfeat
