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

// Shared regression machinery for the GNN and the MLP baseline: parameter
// bundles, Adam with decoupled weight decay, a level-stratified validation
// split and the best-validation-epoch training loop.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "misfeat/error.hpp"
#include "misfeat/feature_subset.hpp"
#include "misfeat/random.hpp"

namespace misfeat {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct Params {
  std::vector<Matrix> tensors;
  std::vector<std::string> names;
  std::vector<bool> decay;  // weight decay applies to matrices, not biases

  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols, bool decayed) {
    tensors.push_back(Matrix::Zero(rows, cols));
    names.push_back(std::move(name));
    decay.push_back(decayed);
    return tensors.size() - 1;
  }

  std::size_t scalar_count() const {
    std::size_t c = 0;
    for (const auto& t : tensors) c += static_cast<std::size_t>(t.size());
    return c;
  }

  Params zeros_like() const {
    Params p = *this;
    for (auto& t : p.tensors) t.setZero();
    return p;
  }

  bool operator==(const Params& o) const {
    if (tensors.size() != o.tensors.size()) return false;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      if (tensors[i].rows() != o.tensors[i].rows() || tensors[i].cols() != o.tensors[i].cols()) return false;
      if (std::memcmp(tensors[i].data(), o.tensors[i].data(), sizeof(double) * static_cast<std::size_t>(tensors[i].size())) != 0) {
        return false;
      }
    }
    return true;
  }
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)); rows are outputs.
inline void glorot_uniform(Matrix& w, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = (2.0 * uniform01(rng) - 1.0) * limit;
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(const Params& params, AdamConfig cfg) : cfg_(cfg), m_(params.zeros_like()), v_(params.zeros_like()) {}

  void step(Params& params, const Params& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.tensors.size(); ++k) {
      auto& w = params.tensors[k];
      const auto& g = grads.tensors[k];
      auto& m = m_.tensors[k];
      auto& v = v_.tensors[k];
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      if (params.decay[k]) w *= 1.0 - cfg_.learning_rate * cfg_.weight_decay;
      w.array() -= cfg_.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.epsilon);
    }
  }

 private:
  AdamConfig cfg_;
  Params m_, v_;
  std::uint64_t t_ = 0;
};

// ReLU derivative policy. Swappable so gradient checks can prove they catch
// a wrong backward pass.
struct ReluGrad {
  static double apply(double pre_activation, double upstream) { return pre_activation > 0.0 ? upstream : 0.0; }
};

// ---------------------------------------------------------------------------
// Labeled-node split

struct LabeledNode {
  std::size_t node = 0;  // local lattice index
  Mask subset = 0;
  double target = 0.0;
};

struct Split {
  std::vector<LabeledNode> train;
  std::vector<LabeledNode> validation;
};

// Holds out round(fraction * total) nodes, apportioned across lattice levels
// by largest remainder so sparse levels are not starved.
inline Split stratified_split(std::vector<LabeledNode> nodes, double fraction, Rng& rng) {
  Split split;
  if (nodes.empty()) return split;
  std::map<int, std::vector<LabeledNode>> by_level;
  for (const auto& n : nodes) by_level[std::popcount(n.subset)].push_back(n);
  const auto total_val =
      static_cast<std::size_t>(std::max(1.0, std::floor(fraction * static_cast<double>(nodes.size()) + 0.5)));

  std::vector<std::pair<int, double>> remainders;
  std::map<int, std::size_t> quota;
  std::size_t assigned = 0;
  for (auto& [level, list] : by_level) {
    const double exact = fraction * static_cast<double>(list.size());
    quota[level] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[level];
    remainders.emplace_back(level, exact - std::floor(exact));
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (std::size_t k = 0; assigned < total_val && k < remainders.size(); ++k) {
    auto& q = quota[remainders[k].first];
    if (q < by_level[remainders[k].first].size()) {
      ++q;
      ++assigned;
    }
  }
  for (auto& [level, list] : by_level) {
    shuffle(list, rng);
    for (std::size_t k = 0; k < list.size(); ++k) {
      (k < quota[level] ? split.validation : split.train).push_back(list[k]);
    }
  }
  auto by_node = [](const LabeledNode& a, const LabeledNode& b) { return a.node < b.node; };
  std::sort(split.train.begin(), split.train.end(), by_node);
  std::sort(split.validation.begin(), split.validation.end(), by_node);
  return split;
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainHyper {
  int epochs = 1000;
  AdamConfig adam;
  double validation_fraction = 0.2;
};

struct TrainReport {
  int subgroup = 0;
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  int selected_epoch = -1;
  std::size_t train_count = 0;
  std::size_t validation_count = 0;

  double selected_train_loss() const { return train_loss.at(static_cast<std::size_t>(selected_epoch)); }
  double selected_validation_loss() const { return validation_loss.at(static_cast<std::size_t>(selected_epoch)); }
};

// Output of one full-batch evaluation: losses at the current parameters and
// gradient of the training loss.
struct EpochEval {
  double train_loss = 0.0;
  double validation_loss = 0.0;
  Params grads;
};

// Runs `epochs` full-batch Adam steps. Each epoch evaluates the current
// parameters (recording both losses) before stepping, and the parameters of
// the epoch with the lowest validation loss are restored at the end.
template <class EvalFn>
TrainReport fit(Params& params, const TrainHyper& hp, EvalFn&& eval) {
  TrainReport report;
  Adam adam(params, hp.adam);
  Params best = params;
  double best_val = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    EpochEval e = eval(params);
    if (!std::isfinite(e.train_loss) || !std::isfinite(e.validation_loss)) {
      throw RuntimeError("training diverged at epoch " + std::to_string(epoch) + " (loss is not finite)");
    }
    report.train_loss.push_back(e.train_loss);
    report.validation_loss.push_back(e.validation_loss);
    if (e.validation_loss < best_val) {
      best_val = e.validation_loss;
      best = params;
      report.selected_epoch = epoch;
    }
    adam.step(params, e.grads);
  }
  if (report.selected_epoch >= 0) params = best;
  return report;
}

inline nlohmann::json to_json(const TrainReport& r) {
  return {{"subgroup", r.subgroup},
          {"selected_epoch", r.selected_epoch},
          {"train_count", r.train_count},
          {"validation_count", r.validation_count},
          {"train_loss", r.train_loss},
          {"validation_loss", r.validation_loss}};
}

// ---------------------------------------------------------------------------
// Flat parameter arrays, in declaration order.

inline std::vector<double> flatten(const Params& p) {
  std::vector<double> out;
  out.reserve(p.scalar_count());
  for (const auto& t : p.tensors) out.insert(out.end(), t.data(), t.data() + t.size());
  return out;
}

inline void unflatten(Params& p, const std::vector<double>& flat) {
  if (flat.size() != p.scalar_count()) throw ValidationError("parameter array size does not match model shape");
  std::size_t off = 0;
  for (auto& t : p.tensors) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), t.size(), t.data());
    off += static_cast<std::size_t>(t.size());
  }
}

// Checkpoint layout: one JSON header line, then the parameters as raw
// little-endian float64 in declaration order.
inline void write_checkpoint(const std::string& path, const nlohmann::json& header, const Params& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write checkpoint " + path);
  nlohmann::json h = header;
  h["scalar_count"] = p.scalar_count();
  out << h.dump() << '\n';
  const auto flat = flatten(p);
  out.write(reinterpret_cast<const char*>(flat.data()), static_cast<std::streamsize>(flat.size() * sizeof(double)));
}

inline std::pair<nlohmann::json, std::vector<double>> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open checkpoint " + path);
  std::string line;
  std::getline(in, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("checkpoint " + path + ": bad header: " + e.what());
  }
  std::vector<double> flat(header.at("scalar_count").get<std::size_t>());
  in.read(reinterpret_cast<char*>(flat.data()), static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(flat.size() * sizeof(double))) {
    throw ValidationError("checkpoint " + path + " is truncated");
  }
  return {header, flat};
}

// Central finite differences against the analytic gradient. Entries where
// both magnitudes are below `floor` are skipped.
template <class LossFn, class GradFn>
double max_relative_gradient_error(Params& params, LossFn&& loss, GradFn&& grad, double epsilon,
                                   double floor = 1e-8) {
  const Params analytic = grad(params);
  double worst = 0.0;
  for (std::size_t k = 0; k < params.tensors.size(); ++k) {
    for (Eigen::Index i = 0; i < params.tensors[k].size(); ++i) {
      double& w = params.tensors[k].data()[i];
      const double saved = w;
      w = saved + epsilon;
      const double lp = loss(params);
      w = saved - epsilon;
      const double lm = loss(params);
      w = saved;
      const double numeric = (lp - lm) / (2.0 * epsilon);
      const double a = analytic.tensors[k].data()[i];
      const double scale = std::max(std::abs(a), std::abs(numeric));
      if (scale < floor) continue;
      worst = std::max(worst, std::abs(a - numeric) / scale);
    }
  }
  return worst;
}

}  // namespace misfeat
