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

// Heterogeneous GraphSAGE-style regressor over the multiplex lattice graph.
//
// Layer t, node v of subgroup i (h^0 is the subset's 0/1 vector):
//
//   msg     = W_agg[t][i] * mean_{u in N_i(v)} h_u  +  sum_{j != i} W_cross[t][j->i] * h_{v_j}
//   h^t_v   = relu(W_conc[t][i] * [h^{t-1}_v || msg] + b_conc[t][i])
//   y_v     = w_out[i] . h^T_v + b_out[i]
//
// N_i pools the inter-level and intra-level neighbors of v inside lattice i.
// One model is trained per subgroup: every subgroup's nodes take part in
// message passing, only the target subgroup's labels enter the loss.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "misfeat/error.hpp"
#include "misfeat/feature_subset.hpp"
#include "misfeat/lattice.hpp"
#include "misfeat/nn.hpp"
#include "misfeat/random.hpp"
#include "misfeat/sampler.hpp"

namespace misfeat {

// Row-wise neighbor mean over a fixed adjacency. Neighbor lists are sorted
// on construction, so the summation order (and therefore every bit of the
// result) does not depend on the order they were supplied in.
class MeanAggregator {
 public:
  MeanAggregator() = default;
  explicit MeanAggregator(std::vector<std::vector<int>> neighbors) {
    const std::size_t n = neighbors.size();
    offsets_.assign(n + 1, 0);
    for (std::size_t v = 0; v < n; ++v) {
      auto& list = neighbors[v];
      std::sort(list.begin(), list.end());
      offsets_[v + 1] = offsets_[v] + list.size();
      index_.insert(index_.end(), list.begin(), list.end());
    }
    std::vector<std::vector<int>> incoming(n);
    for (std::size_t v = 0; v < n; ++v) {
      for (int u : neighbors[v]) incoming[static_cast<std::size_t>(u)].push_back(static_cast<int>(v));
    }
    t_offsets_.assign(n + 1, 0);
    for (std::size_t u = 0; u < n; ++u) {
      std::sort(incoming[u].begin(), incoming[u].end());
      t_offsets_[u + 1] = t_offsets_[u] + incoming[u].size();
      t_index_.insert(t_index_.end(), incoming[u].begin(), incoming[u].end());
    }
  }

  std::size_t size() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t degree(std::size_t v) const { return offsets_[v + 1] - offsets_[v]; }

  // out.row(v) = mean of in.row(u) over neighbors u; zero when v has none.
  void forward(const Matrix& in, Matrix& out) const {
    out.setZero(in.rows(), in.cols());
    for (std::size_t v = 0; v < size(); ++v) {
      const std::size_t deg = degree(v);
      if (deg == 0) continue;
      auto row = out.row(static_cast<Eigen::Index>(v));
      for (std::size_t k = offsets_[v]; k < offsets_[v + 1]; ++k) row += in.row(index_[k]);
      row /= static_cast<double>(deg);
    }
  }

  // grad_in.row(u) += sum over v with u in N(v) of grad_out.row(v) / deg(v).
  void backward(const Matrix& grad_out, Matrix& grad_in) const {
    for (std::size_t u = 0; u < size(); ++u) {
      auto row = grad_in.row(static_cast<Eigen::Index>(u));
      for (std::size_t k = t_offsets_[u]; k < t_offsets_[u + 1]; ++k) {
        const auto v = static_cast<std::size_t>(t_index_[k]);
        row += grad_out.row(static_cast<Eigen::Index>(v)) / static_cast<double>(degree(v));
      }
    }
  }

 private:
  std::vector<std::size_t> offsets_, t_offsets_;
  std::vector<int> index_, t_index_;
};

// Everything the model needs from the graph: layer-0 features and the
// pooled intra-lattice neighborhood, shared by all subgroups.
struct GnnContext {
  int n_features = 0;
  int n_subgroups = 0;
  std::size_t lattice_size = 0;
  Matrix input;       // lattice_size x n_features, 0/1
  Matrix input_mean;  // aggregator applied to input
  MeanAggregator aggregator;
};

inline GnnContext make_context(const LatticeTopology& topo, int n_subgroups,
                               std::vector<std::vector<int>> neighbor_lists) {
  GnnContext ctx;
  ctx.n_features = topo.n_features();
  ctx.n_subgroups = n_subgroups;
  ctx.lattice_size = topo.size();
  ctx.input = Matrix::Zero(static_cast<Eigen::Index>(topo.size()), topo.n_features());
  for (std::size_t v = 0; v < topo.size(); ++v) {
    for (int f = 0; f < topo.n_features(); ++f) {
      if ((topo.node(v) >> f) & 1U) ctx.input(static_cast<Eigen::Index>(v), f) = 1.0;
    }
  }
  ctx.aggregator = MeanAggregator(std::move(neighbor_lists));
  ctx.aggregator.forward(ctx.input, ctx.input_mean);
  return ctx;
}

inline GnnContext make_context(const MultiplexGraph& graph) {
  const auto& topo = graph.topology();
  std::vector<std::vector<int>> lists(topo.size());
  for (std::size_t v = 0; v < topo.size(); ++v) lists[v] = topo.pooled(v);
  return make_context(topo, graph.n_subgroups(), std::move(lists));
}

struct GnnConfig {
  int layers = 2;
  int hidden = 128;
  TrainHyper train;
};

class GnnModel {
 public:
  GnnModel() = default;
  GnnModel(int n_features, int n_subgroups, GnnConfig cfg, std::uint64_t seed)
      : n_features_(n_features), n_subgroups_(n_subgroups), cfg_(cfg), seed_(seed) {
    if (cfg.layers < 1 || cfg.hidden < 1) throw ValidationError("gnn: layers and hidden width must be positive");
    if (n_features < 1 || n_subgroups < 1) throw ValidationError("gnn: empty graph shape");
    const int p = n_subgroups;
    const int d = cfg.hidden;
    agg_.resize(static_cast<std::size_t>(cfg.layers));
    cross_.resize(static_cast<std::size_t>(cfg.layers));
    conc_.resize(static_cast<std::size_t>(cfg.layers));
    bias_.resize(static_cast<std::size_t>(cfg.layers));
    for (int t = 0; t < cfg.layers; ++t) {
      const int in = input_width(t);
      auto& cross = cross_[static_cast<std::size_t>(t)];
      cross.assign(static_cast<std::size_t>(p * p), kNone);
      for (int i = 0; i < p; ++i) {
        const std::string tag = "[" + std::to_string(t) + "][" + std::to_string(i) + "]";
        agg_[static_cast<std::size_t>(t)].push_back(params_.add("agg" + tag, d, in, true));
        for (int j = 0; j < p; ++j) {
          if (j == i) continue;
          cross[static_cast<std::size_t>(j * p + i)] = params_.add(
              "cross[" + std::to_string(t) + "][" + std::to_string(j) + "->" + std::to_string(i) + "]", d, in, true);
        }
        conc_[static_cast<std::size_t>(t)].push_back(params_.add("conc" + tag, d, in + d, true));
        bias_[static_cast<std::size_t>(t)].push_back(params_.add("conc_bias" + tag, 1, d, false));
      }
    }
    for (int i = 0; i < p; ++i) {
      out_w_.push_back(params_.add("out[" + std::to_string(i) + "]", 1, d, true));
      out_b_.push_back(params_.add("out_bias[" + std::to_string(i) + "]", 1, 1, false));
    }
    Rng rng = make_rng(seed, 0x676e6eULL);
    for (std::size_t k = 0; k < params_.tensors.size(); ++k) {
      if (params_.decay[k]) glorot_uniform(params_.tensors[k], rng);
    }
  }

  int n_features() const { return n_features_; }
  int n_subgroups() const { return n_subgroups_; }
  int layers() const { return cfg_.layers; }
  int hidden() const { return cfg_.hidden; }
  const GnnConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  int input_width(int t) const { return t == 0 ? n_features_ : cfg_.hidden; }

  bool trained() const { return trained_for_ >= 0; }
  int trained_for() const { return trained_for_; }
  void set_trained_for(int subgroup) { trained_for_ = subgroup; }

  Params& params() { return params_; }
  const Params& params() const { return params_; }

  std::size_t agg(int t, int i) const { return agg_[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)]; }
  std::size_t cross(int t, int j, int i) const {
    return cross_[static_cast<std::size_t>(t)][static_cast<std::size_t>(j * n_subgroups_ + i)];
  }
  std::size_t conc(int t, int i) const { return conc_[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)]; }
  std::size_t bias(int t, int i) const { return bias_[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)]; }
  std::size_t out_w(int i) const { return out_w_[static_cast<std::size_t>(i)]; }
  std::size_t out_b(int i) const { return out_b_[static_cast<std::size_t>(i)]; }

  const Matrix& tensor(std::size_t k) const { return params_.tensors[k]; }

  nlohmann::json header() const {
    return {{"kind", "gnn"},
            {"layers", cfg_.layers},
            {"hidden", cfg_.hidden},
            {"n_subgroups", n_subgroups_},
            {"n_features", n_features_},
            {"seed", seed_},
            {"trained_for", trained_for_},
            {"epochs", cfg_.train.epochs},
            {"learning_rate", cfg_.train.adam.learning_rate},
            {"weight_decay", cfg_.train.adam.weight_decay},
            {"validation_fraction", cfg_.train.validation_fraction}};
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  int n_features_ = 0;
  int n_subgroups_ = 0;
  GnnConfig cfg_;
  std::uint64_t seed_ = 0;
  int trained_for_ = -1;
  Params params_;
  std::vector<std::vector<std::size_t>> agg_, cross_, conc_, bias_;
  std::vector<std::size_t> out_w_, out_b_;
};

namespace detail {

struct GnnCache {
  // h[t][i] for t = 0..T; layer-0 entries alias the context input.
  std::vector<std::vector<Matrix>> h, s, m, z;
  std::vector<std::vector<bool>> active;
  std::vector<Vector> y;
};

inline void check_shapes(const GnnModel& model, const GnnContext& ctx) {
  if (model.n_subgroups() != ctx.n_subgroups) throw ValidationError("gnn: model/graph subgroup count mismatch");
  if (model.n_features() != ctx.n_features) throw ValidationError("gnn: model/graph feature count mismatch");
}

// Runs all layers for every subgroup except the last layer, which is only
// evaluated for subgroups flagged in `outputs`.
inline GnnCache gnn_forward(const GnnModel& model, const GnnContext& ctx, const std::vector<bool>& outputs) {
  check_shapes(model, ctx);
  const int T = model.layers();
  const int P = model.n_subgroups();
  GnnCache c;
  c.h.assign(static_cast<std::size_t>(T + 1), std::vector<Matrix>(static_cast<std::size_t>(P)));
  c.s = c.m = c.z = c.h;
  c.active.assign(static_cast<std::size_t>(T + 1), std::vector<bool>(static_cast<std::size_t>(P), true));
  c.active[static_cast<std::size_t>(T)] = outputs;
  for (int i = 0; i < P; ++i) c.h[0][static_cast<std::size_t>(i)] = ctx.input;

  for (int t = 1; t <= T; ++t) {
    const auto& prev = c.h[static_cast<std::size_t>(t - 1)];
    const Eigen::Index in = model.input_width(t - 1);
    for (int i = 0; i < P; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      if (!c.active[static_cast<std::size_t>(t)][ui]) continue;
      Matrix& s = c.s[static_cast<std::size_t>(t)][ui];
      if (t == 1) {
        s = ctx.input_mean;
      } else {
        ctx.aggregator.forward(prev[ui], s);
      }
      Matrix& m = c.m[static_cast<std::size_t>(t)][ui];
      m.noalias() = s * model.tensor(model.agg(t - 1, i)).transpose();
      for (int j = 0; j < P; ++j) {
        if (j == i) continue;
        m.noalias() += prev[static_cast<std::size_t>(j)] * model.tensor(model.cross(t - 1, j, i)).transpose();
      }
      const Matrix& wc = model.tensor(model.conc(t - 1, i));
      Matrix& z = c.z[static_cast<std::size_t>(t)][ui];
      z.noalias() = prev[ui] * wc.leftCols(in).transpose();
      z.noalias() += m * wc.rightCols(model.hidden()).transpose();
      z.rowwise() += model.tensor(model.bias(t - 1, i)).row(0);
      c.h[static_cast<std::size_t>(t)][ui] = z.cwiseMax(0.0);
    }
  }
  c.y.assign(static_cast<std::size_t>(P), Vector());
  for (int i = 0; i < P; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (!outputs[ui]) continue;
    c.y[ui] = c.h[static_cast<std::size_t>(T)][ui] * model.tensor(model.out_w(i)).row(0).transpose();
    c.y[ui].array() += model.tensor(model.out_b(i))(0, 0);
  }
  return c;
}

inline double mse(const Vector& y, const std::vector<LabeledNode>& nodes) {
  if (nodes.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& n : nodes) {
    const double r = y(static_cast<Eigen::Index>(n.node)) - n.target;
    acc += r * r;
  }
  return acc / static_cast<double>(nodes.size());
}

// Adds the gradient of mean((y - target)^2) over `train` for subgroup
// `target` into `g`. With `own_block` set, the gradient stops at the other
// subgroups' representations, so only the target's parameters receive it.
template <class Relu = ReluGrad>
void gnn_backward_into(Params& g, const GnnModel& model, const GnnContext& ctx, const GnnCache& c, int target,
                       const std::vector<LabeledNode>& train, bool own_block) {
  const int T = model.layers();
  const int P = model.n_subgroups();
  const auto N = static_cast<Eigen::Index>(ctx.lattice_size);
  const auto ut = static_cast<std::size_t>(target);

  Vector dy = Vector::Zero(N);
  for (const auto& n : train) {
    const auto v = static_cast<Eigen::Index>(n.node);
    dy(v) = 2.0 * (c.y[ut](v) - n.target) / static_cast<double>(train.size());
  }
  const Matrix& h_last = c.h[static_cast<std::size_t>(T)][ut];
  g.tensors[model.out_w(target)].row(0) += (h_last.transpose() * dy).transpose();
  g.tensors[model.out_b(target)](0, 0) += dy.sum();

  std::vector<Matrix> dh(static_cast<std::size_t>(P));
  std::vector<bool> has(static_cast<std::size_t>(P), false);
  dh[ut] = dy * model.tensor(model.out_w(target)).row(0);
  has[ut] = true;

  for (int t = T; t >= 1; --t) {
    const auto& prev = c.h[static_cast<std::size_t>(t - 1)];
    const Eigen::Index in = model.input_width(t - 1);
    std::vector<Matrix> dprev(static_cast<std::size_t>(P));
    std::vector<bool> prev_has(static_cast<std::size_t>(P), false);
    auto accumulate = [&](int j, const Matrix& delta) {
      const auto uj = static_cast<std::size_t>(j);
      if (!prev_has[uj]) {
        dprev[uj] = delta;
        prev_has[uj] = true;
      } else {
        dprev[uj] += delta;
      }
    };
    for (int i = 0; i < P; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      if (!has[ui]) continue;
      const Matrix& z = c.z[static_cast<std::size_t>(t)][ui];
      const Matrix dz = z.binaryExpr(dh[ui], [](double pre, double up) { return Relu::apply(pre, up); });
      const Matrix& m = c.m[static_cast<std::size_t>(t)][ui];
      const Matrix& s = c.s[static_cast<std::size_t>(t)][ui];
      const Matrix& wc = model.tensor(model.conc(t - 1, i));

      Matrix& gc = g.tensors[model.conc(t - 1, i)];
      gc.leftCols(in).noalias() += dz.transpose() * prev[ui];
      gc.rightCols(model.hidden()).noalias() += dz.transpose() * m;
      g.tensors[model.bias(t - 1, i)].row(0) += dz.colwise().sum();

      const Matrix dm = dz * wc.rightCols(model.hidden());
      g.tensors[model.agg(t - 1, i)].noalias() += dm.transpose() * s;
      for (int j = 0; j < P; ++j) {
        if (j == i) continue;
        g.tensors[model.cross(t - 1, j, i)].noalias() += dm.transpose() * prev[static_cast<std::size_t>(j)];
      }
      if (t == 1) continue;  // layer-0 features are constants

      accumulate(i, dz * wc.leftCols(in));
      Matrix ds = dm * model.tensor(model.agg(t - 1, i));
      Matrix dmean = Matrix::Zero(N, in);
      ctx.aggregator.backward(ds, dmean);
      accumulate(i, dmean);
      if (own_block) continue;
      for (int j = 0; j < P; ++j) {
        if (j == i) continue;
        accumulate(j, dm * model.tensor(model.cross(t - 1, j, i)));
      }
    }
    dh = std::move(dprev);
    has = std::move(prev_has);
  }
}

template <class Relu = ReluGrad>
Params gnn_backward(const GnnModel& model, const GnnContext& ctx, const GnnCache& c, int target,
                    const std::vector<LabeledNode>& train, bool own_block = false) {
  Params g = model.params().zeros_like();
  gnn_backward_into<Relu>(g, model, ctx, c, target, train, own_block);
  return g;
}

inline std::vector<bool> only(int P, int i) {
  std::vector<bool> v(static_cast<std::size_t>(P), false);
  v[static_cast<std::size_t>(i)] = true;
  return v;
}

}  // namespace detail

// Predictions for every node of every subgroup, in global order
// (subgroup-major, then ascending bitmask).
inline std::vector<double> forward(const GnnModel& model, const GnnContext& ctx) {
  const auto cache = detail::gnn_forward(model, ctx, std::vector<bool>(static_cast<std::size_t>(model.n_subgroups()), true));
  std::vector<double> out;
  out.reserve(ctx.lattice_size * static_cast<std::size_t>(model.n_subgroups()));
  for (const auto& y : cache.y) out.insert(out.end(), y.data(), y.data() + y.size());
  return out;
}

inline std::vector<double> forward(const GnnModel& model, const MultiplexGraph& graph) {
  return forward(model, make_context(graph));
}

// Predictions of one subgroup only (the last layer is skipped for others).
inline Vector forward_subgroup(const GnnModel& model, const GnnContext& ctx, int subgroup) {
  return detail::gnn_forward(model, ctx, detail::only(model.n_subgroups(), subgroup)).y[static_cast<std::size_t>(subgroup)];
}

template <class Relu = ReluGrad>
std::pair<double, Params> gnn_loss_and_grad(const GnnModel& model, const GnnContext& ctx, int subgroup,
                                            const std::vector<LabeledNode>& train) {
  const auto cache = detail::gnn_forward(model, ctx, detail::only(model.n_subgroups(), subgroup));
  const double loss = detail::mse(cache.y[static_cast<std::size_t>(subgroup)], train);
  return {loss, detail::gnn_backward<Relu>(model, ctx, cache, subgroup, train)};
}

inline std::vector<LabeledNode> labeled_nodes(const MultiplexGraph& graph, int subgroup) {
  std::vector<LabeledNode> out;
  for (std::size_t v = 0; v < graph.lattice_size(); ++v) {
    if (graph.labeled(subgroup, v)) out.push_back({v, graph.topology().node(v), graph.label(subgroup, v)});
  }
  return out;
}

inline std::vector<LabeledNode> labeled_nodes(const MultiplexGraph& graph, int subgroup, const LabelMap& labels) {
  std::vector<LabeledNode> out;
  for (const auto& [s, mi] : labels) {
    out.push_back({graph.local_index({subgroup, FeatureSubset(s)}), s, mi});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.node < b.node; });
  return out;
}

inline constexpr std::size_t kMinLabels = 5;

// Trains the model for `subgroup` with MSE on its labeled nodes, holding out
// a level-stratified validation share and keeping the best-validation epoch.
inline std::pair<GnnModel, TrainReport> train_subgroup(const GnnContext& ctx, int subgroup,
                                                       const std::vector<LabeledNode>& labels, const GnnConfig& cfg,
                                                       std::uint64_t seed) {
  if (subgroup < 0 || subgroup >= ctx.n_subgroups) throw ValidationError("train: unknown subgroup");
  if (labels.size() < kMinLabels) {
    throw ValidationError("train: subgroup " + std::to_string(subgroup) + " has " + std::to_string(labels.size()) +
                          " labels, at least 5 are required");
  }
  GnnModel model(ctx.n_features, ctx.n_subgroups, cfg, derive_seed(seed, static_cast<std::uint64_t>(subgroup)));
  Rng split_rng = make_rng(seed, 0x73706c00ULL + static_cast<std::uint64_t>(subgroup));
  const Split split = stratified_split(labels, cfg.train.validation_fraction, split_rng);

  TrainReport report = fit(model.params(), cfg.train, [&](Params& p) {
    (void)p;  // model.params() is the same object
    const auto cache = detail::gnn_forward(model, ctx, detail::only(model.n_subgroups(), subgroup));
    const auto& y = cache.y[static_cast<std::size_t>(subgroup)];
    EpochEval e;
    e.train_loss = detail::mse(y, split.train);
    e.validation_loss = detail::mse(y, split.validation);
    e.grads = detail::gnn_backward(model, ctx, cache, subgroup, split.train);
    return e;
  });
  report.subgroup = subgroup;
  report.train_count = split.train.size();
  report.validation_count = split.validation.size();
  model.set_trained_for(subgroup);
  return {std::move(model), std::move(report)};
}

struct CoupledTraining {
  std::vector<GnnModel> models;  // models[i]: snapshot at subgroup i's best validation epoch
  std::vector<TrainReport> reports;
};

// Trains every subgroup's parameter block at once. Each epoch runs one
// forward pass over the whole multiplex graph; block i then takes an Adam
// step on the gradient of subgroup i's loss with respect to its own
// parameters only. Other subgroups' representations enter block i's
// messages, but they are shaped by those subgroups' own labels.
inline CoupledTraining train_coupled(const GnnContext& ctx, const std::vector<std::vector<LabeledNode>>& labels,
                                     const GnnConfig& cfg, std::uint64_t seed) {
  const int P = ctx.n_subgroups;
  if (static_cast<int>(labels.size()) != P) throw ValidationError("train: one label list per subgroup is required");
  std::vector<Split> splits;
  for (int i = 0; i < P; ++i) {
    const auto& l = labels[static_cast<std::size_t>(i)];
    if (l.size() < kMinLabels) {
      throw ValidationError("train: subgroup " + std::to_string(i) + " has " + std::to_string(l.size()) +
                            " labels, at least 5 are required");
    }
    Rng split_rng = make_rng(seed, 0x73706c00ULL + static_cast<std::uint64_t>(i));
    splits.push_back(stratified_split(l, cfg.train.validation_fraction, split_rng));
  }

  GnnModel model(ctx.n_features, P, cfg, seed);
  Adam adam(model.params(), cfg.train.adam);
  CoupledTraining out;
  out.models.assign(static_cast<std::size_t>(P), model);
  out.reports.resize(static_cast<std::size_t>(P));
  std::vector<double> best(static_cast<std::size_t>(P), std::numeric_limits<double>::infinity());
  const std::vector<bool> all(static_cast<std::size_t>(P), true);

  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    const auto cache = detail::gnn_forward(model, ctx, all);
    Params grads = model.params().zeros_like();
    for (int i = 0; i < P; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      const auto& y = cache.y[ui];
      const double train_loss = detail::mse(y, splits[ui].train);
      const double val_loss = detail::mse(y, splits[ui].validation);
      if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
        throw RuntimeError("training diverged at epoch " + std::to_string(epoch) + " (subgroup " +
                           std::to_string(i) + " loss is not finite)");
      }
      auto& rep = out.reports[ui];
      rep.train_loss.push_back(train_loss);
      rep.validation_loss.push_back(val_loss);
      if (val_loss < best[ui]) {
        best[ui] = val_loss;
        rep.selected_epoch = epoch;
        out.models[ui].params() = model.params();
      }
      detail::gnn_backward_into(grads, model, ctx, cache, i, splits[ui].train, true);
    }
    adam.step(model.params(), grads);
  }
  for (int i = 0; i < P; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    out.models[ui].set_trained_for(i);
    out.reports[ui].subgroup = i;
    out.reports[ui].train_count = splits[ui].train.size();
    out.reports[ui].validation_count = splits[ui].validation.size();
  }
  return out;
}

inline CoupledTraining train_coupled(const MultiplexGraph& graph, const GnnConfig& cfg, std::uint64_t seed) {
  std::vector<std::vector<LabeledNode>> labels;
  for (int i = 0; i < graph.n_subgroups(); ++i) labels.push_back(labeled_nodes(graph, i));
  return train_coupled(make_context(graph), labels, cfg, seed);
}

inline std::pair<GnnModel, TrainReport> train_subgroup(const MultiplexGraph& graph, int subgroup,
                                                       const GnnConfig& cfg, std::uint64_t seed) {
  return train_subgroup(make_context(graph), subgroup, labeled_nodes(graph, subgroup), cfg, seed);
}

// Max relative error between analytic and central-difference gradients of
// the MSE over `labels` (all of them, no validation split).
template <class Relu = ReluGrad>
double gradient_check(GnnModel model, const GnnContext& ctx, int subgroup, const std::vector<LabeledNode>& labels,
                      double epsilon) {
  auto loss = [&](const Params&) {
    return detail::mse(forward_subgroup(model, ctx, subgroup), labels);
  };
  auto grad = [&](const Params&) { return gnn_loss_and_grad<Relu>(model, ctx, subgroup, labels).second; };
  return max_relative_gradient_error(model.params(), loss, grad, epsilon);
}

// MI predictions for every node of `subgroup` without an exact label in the
// graph, clamped at zero.
inline std::map<Mask, double> predict_missing(const GnnModel& model, const MultiplexGraph& graph, const GnnContext& ctx,
                                              int subgroup) {
  if (!model.trained()) throw ValidationError("predict: model is untrained");
  const Vector y = forward_subgroup(model, ctx, subgroup);
  std::map<Mask, double> out;
  for (std::size_t v = 0; v < graph.lattice_size(); ++v) {
    if (graph.labeled(subgroup, v)) continue;
    out.emplace(graph.topology().node(v), std::max(0.0, y(static_cast<Eigen::Index>(v))));
  }
  return out;
}

inline std::map<Mask, double> predict_missing(const GnnModel& model, const MultiplexGraph& graph, int subgroup) {
  return predict_missing(model, graph, make_context(graph), subgroup);
}

inline void save_model(const std::string& path, const GnnModel& model) {
  write_checkpoint(path, model.header(), model.params());
}

inline GnnModel load_model(const std::string& path) {
  auto [h, flat] = read_checkpoint(path);
  if (h.value("kind", "") != "gnn") throw ValidationError("checkpoint " + path + " is not a GNN model");
  GnnConfig cfg;
  cfg.layers = h.at("layers").get<int>();
  cfg.hidden = h.at("hidden").get<int>();
  cfg.train.epochs = h.at("epochs").get<int>();
  cfg.train.adam.learning_rate = h.at("learning_rate").get<double>();
  cfg.train.adam.weight_decay = h.at("weight_decay").get<double>();
  cfg.train.validation_fraction = h.at("validation_fraction").get<double>();
  GnnModel model(h.at("n_features").get<int>(), h.at("n_subgroups").get<int>(), cfg, h.at("seed").get<std::uint64_t>());
  unflatten(model.params(), flat);
  model.set_trained_for(h.at("trained_for").get<int>());
  return model;
}

}  // namespace misfeat
