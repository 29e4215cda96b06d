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

// misfeat command-line driver. Each subcommand is one pipeline stage that
// reads the artifacts of earlier stages from the output directory and
// writes its own, plus a manifest and a timing file:
//
//   synth   -> data/dataset.csv, data/schema.json, data/plant.json
//   prep    -> prep/subgroups.json
//   lattice -> lattice/graph.json
//   sample  -> sample/samples.json
//   mi      -> mi/store_<i>.json, mi/labels.json
//   train   -> train/model_<i>.bin, train/reports.json
//   rank    -> rank/topk.json
//   eval    -> eval/metrics.json, eval/metrics.csv
//   bench   -> bench/sharing.csv, bench/sweeps.csv
//
// Exit codes: 0 success, 1 validation error, 2 runtime error.

#include <openssl/evp.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "misfeat/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace misfeat::cli {
namespace {

constexpr int kStageVersion = 1;
constexpr std::uint64_t kInjectStream = 0x696e6aULL;  // same stream as synthgen's generate()

// ---------------------------------------------------------------------------
// Configuration

struct RunConfig {
  // [paths]
  std::string dataset, schema, out = "out";
  // [data]
  std::vector<std::string> subgroup_features{"group"};
  std::vector<std::pair<std::string, int>> discretize;
  // [synth]
  SynthConfig synth;
  // [missing]
  double p = 0.2;
  // [lattice]
  int level_min = 1, level_max = 0;
  // [sample]
  std::string sampler = "randwalk";
  double budget_rate = 1.0;
  // [query]
  int m = 3, k = 10;
  // [gnn]
  GnnConfig gnn;
  bool coupled = true;
  // [baselines]
  bool run_mlp = true, run_knn = true;
  int knn_k = 5, mlp_hidden = 64;
  // [run]
  std::uint64_t seed = 0;
  int n_seeds = 3;
  int workers = 1;
  // [bench]
  std::vector<int> sharing_features{8, 10, 12};
  std::size_t sharing_rows = 20'000;
  std::vector<int> sweep_features{6, 8, 10};
  std::vector<int> sweep_subgroups{2, 4, 6};
  std::vector<double> sweep_p{0.1, 0.2, 0.3};
  std::vector<double> sweep_budget{0.25, 0.5, 0.75, 1.0};
  std::size_t sweep_rows = 10'000;
  int sweep_epochs = 50;

  std::string dataset_path() const { return dataset.empty() ? (fs::path(out) / "data" / "dataset.csv").string() : dataset; }
  std::string schema_path() const { return schema.empty() ? (fs::path(out) / "data" / "schema.json").string() : schema; }
  LevelBounds bounds(int n) const { return {level_min, level_max == 0 ? n : level_max}; }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T v{};
  in >> v;
  if (in.fail() || !(in >> std::ws).eof()) throw ValidationError("config: " + key + " = '" + text + "' is not a number");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ValidationError("config: " + key + " = '" + text + "' is not a boolean");
}

template <class T>
std::vector<T> parse_numbers(const std::string& key, const std::string& text) {
  std::vector<T> out;
  for (const auto& s : split_list(text)) out.push_back(parse_number<T>(key, s));
  if (out.empty()) throw ValidationError("config: " + key + " is empty");
  return out;
}

// Applies one "section.key" setting.
void apply(RunConfig& c, const std::string& key, const std::string& v) {
  auto num = [&](auto& field) { field = parse_number<std::decay_t<decltype(field)>>(key, v); };
  auto flag = [&](bool& field) { field = parse_bool(key, v); };
  if (key == "paths.dataset") c.dataset = v;
  else if (key == "paths.schema") c.schema = v;
  else if (key == "paths.out") c.out = v;
  else if (key == "data.subgroup_features") c.subgroup_features = split_list(v);
  else if (key == "data.discretize") {
    c.discretize.clear();
    for (const auto& item : split_list(v)) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) throw ValidationError("config: data.discretize expects column:bins, got '" + item + "'");
      c.discretize.emplace_back(item.substr(0, colon), parse_number<int>(key, item.substr(colon + 1)));
    }
  }
  else if (key == "synth.rows") num(c.synth.n_rows);
  else if (key == "synth.subgroups") num(c.synth.n_subgroups);
  else if (key == "synth.bits") num(c.synth.bits);
  else if (key == "synth.relevant") num(c.synth.n_relevant);
  else if (key == "synth.correlated") num(c.synth.n_correlated);
  else if (key == "synth.redundant") num(c.synth.n_redundant);
  else if (key == "synth.irrelevant") num(c.synth.n_irrelevant);
  else if (key == "synth.formula") c.synth.formula = v;
  else if (key == "synth.flip_rate") num(c.synth.flip_rate);
  else if (key == "synth.noise_mean") num(c.synth.noise_mean);
  else if (key == "synth.noise_sd") num(c.synth.noise_sd);
  else if (key == "missing.p") num(c.p);
  else if (key == "lattice.level_min") num(c.level_min);
  else if (key == "lattice.level_max") num(c.level_max);
  else if (key == "sample.sampler") c.sampler = v;
  else if (key == "sample.budget_rate") num(c.budget_rate);
  else if (key == "query.m") num(c.m);
  else if (key == "query.k") num(c.k);
  else if (key == "gnn.layers") num(c.gnn.layers);
  else if (key == "gnn.hidden") num(c.gnn.hidden);
  else if (key == "gnn.epochs") num(c.gnn.train.epochs);
  else if (key == "gnn.learning_rate") num(c.gnn.train.adam.learning_rate);
  else if (key == "gnn.weight_decay") num(c.gnn.train.adam.weight_decay);
  else if (key == "gnn.validation_fraction") num(c.gnn.train.validation_fraction);
  else if (key == "gnn.coupled") flag(c.coupled);
  else if (key == "baselines.mlp") flag(c.run_mlp);
  else if (key == "baselines.knn") flag(c.run_knn);
  else if (key == "baselines.knn_k") num(c.knn_k);
  else if (key == "baselines.mlp_hidden") num(c.mlp_hidden);
  else if (key == "run.seed") num(c.seed);
  else if (key == "run.seeds") num(c.n_seeds);
  else if (key == "run.workers") num(c.workers);
  else if (key == "bench.sharing_features") c.sharing_features = parse_numbers<int>(key, v);
  else if (key == "bench.sharing_rows") num(c.sharing_rows);
  else if (key == "bench.sweep_features") c.sweep_features = parse_numbers<int>(key, v);
  else if (key == "bench.sweep_subgroups") c.sweep_subgroups = parse_numbers<int>(key, v);
  else if (key == "bench.sweep_p") c.sweep_p = parse_numbers<double>(key, v);
  else if (key == "bench.sweep_budget") c.sweep_budget = parse_numbers<double>(key, v);
  else if (key == "bench.sweep_rows") num(c.sweep_rows);
  else if (key == "bench.sweep_epochs") num(c.sweep_epochs);
  else throw ValidationError("config: unknown key '" + key + "'");
}

void load_ini(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path);
  CLI::ConfigINI ini;
  for (const auto& item : ini.from_config(in)) {
    if (item.name == "++" || item.name == "--") continue;
    if (item.parents.size() != 1) throw ValidationError("config: key '" + item.name + "' must sit in a [section]");
    std::string value;
    for (const auto& part : item.inputs) value += (value.empty() ? "" : " ") + part;
    apply(c, item.parents.front() + "." + item.name, value);
  }
}

void validate(const RunConfig& c) {
  if (!(c.budget_rate > 0.0 && c.budget_rate <= 1.0)) throw ValidationError("config: sample.budget_rate must lie in (0, 1]");
  if (!(c.p >= 0.0 && c.p < 1.0)) throw ValidationError("config: missing.p must lie in [0, 1)");
  if (c.k < 1) throw ValidationError("config: query.k must be >= 1");
  if (c.m < 1) throw ValidationError("config: query.m must be >= 1");
  if (c.level_min < 1 || c.level_max < 0 || (c.level_max != 0 && c.level_max < c.level_min)) {
    throw ValidationError("config: bad lattice level bounds");
  }
  if (c.level_max != 0 && (c.m < c.level_min || c.m > c.level_max)) {
    throw ValidationError("config: query.m lies outside the lattice level bounds");
  }
  if (c.n_seeds < 1) throw ValidationError("config: run.seeds must be >= 1");
  if (c.workers < 0) throw ValidationError("config: run.workers must be >= 0");
  if (c.subgroup_features.empty()) throw ValidationError("config: data.subgroup_features is empty");
  if (c.gnn.train.epochs < 1) throw ValidationError("config: gnn.epochs must be >= 1");
  if (!(c.gnn.train.validation_fraction >= 0.0 && c.gnn.train.validation_fraction < 1.0)) {
    throw ValidationError("config: gnn.validation_fraction must lie in [0, 1)");
  }
  if (c.knn_k < 1 || c.mlp_hidden < 1 || c.gnn.hidden < 1 || c.gnn.layers < 1) {
    throw ValidationError("config: model sizes must be positive");
  }
  parse_sampler(c.sampler);
}

json to_json(const RunConfig& c) {
  json disc = json::array();
  for (const auto& [col, bins] : c.discretize) disc.push_back({col, bins});
  const auto& s = c.synth;
  return {
      {"paths", {{"dataset", c.dataset_path()}, {"schema", c.schema_path()}, {"out", c.out}}},
      {"data", {{"subgroup_features", c.subgroup_features}, {"discretize", disc}}},
      {"synth",
       {{"rows", s.n_rows}, {"subgroups", s.n_subgroups}, {"bits", s.bits}, {"relevant", s.n_relevant},
        {"correlated", s.n_correlated}, {"redundant", s.n_redundant}, {"irrelevant", s.n_irrelevant},
        {"formula", s.formula}, {"flip_rate", s.flip_rate}, {"noise_mean", s.noise_mean}, {"noise_sd", s.noise_sd}}},
      {"missing", {{"p", c.p}}},
      {"lattice", {{"level_min", c.level_min}, {"level_max", c.level_max}}},
      {"sample", {{"sampler", c.sampler}, {"budget_rate", c.budget_rate}}},
      {"query", {{"m", c.m}, {"k", c.k}}},
      {"gnn",
       {{"layers", c.gnn.layers}, {"hidden", c.gnn.hidden}, {"epochs", c.gnn.train.epochs},
        {"learning_rate", c.gnn.train.adam.learning_rate}, {"weight_decay", c.gnn.train.adam.weight_decay},
        {"validation_fraction", c.gnn.train.validation_fraction}, {"coupled", c.coupled}}},
      {"baselines", {{"mlp", c.run_mlp}, {"knn", c.run_knn}, {"knn_k", c.knn_k}, {"mlp_hidden", c.mlp_hidden}}},
      {"run", {{"seed", c.seed}, {"seeds", c.n_seeds}}},
      {"bench",
       {{"sharing_features", c.sharing_features}, {"sharing_rows", c.sharing_rows},
        {"sweep_features", c.sweep_features}, {"sweep_subgroups", c.sweep_subgroups}, {"sweep_p", c.sweep_p},
        {"sweep_budget", c.sweep_budget}, {"sweep_rows", c.sweep_rows}, {"sweep_epochs", c.sweep_epochs}}},
  };
}

EvalConfig eval_config(const RunConfig& c) {
  EvalConfig e;
  e.bounds = {c.level_min, c.level_max};
  e.budget_rate = c.budget_rate;
  e.sampler = parse_sampler(c.sampler);
  e.m = c.m;
  e.k = c.k;
  e.gnn = c.gnn;
  e.mlp.hidden = c.mlp_hidden;
  e.mlp.train = c.gnn.train;
  e.knn.k = c.knn_k;
  e.run_mlp = c.run_mlp;
  e.run_knn = c.run_knn;
  e.coupled = c.coupled;
  return e;
}

// ---------------------------------------------------------------------------
// Files, hashes, manifests

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw RuntimeError("sha256 failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return out.str();
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Hash of the run settings. Paths are left out: inputs are recorded by
// content hash and the output location does not affect any artifact.
std::string config_hash(const RunConfig& c) {
  json j = to_json(c);
  j.erase("paths");
  return sha256_hex(j.dump());
}

class Stage {
 public:
  Stage(std::string name, const RunConfig& cfg)
      : name_(std::move(name)), cfg_(cfg), root_(cfg.out), start_(std::chrono::steady_clock::now()) {}

  fs::path path(const std::string& rel) const { return root_ / rel; }

  // Upstream artifact; its absence is reported as a validation error.
  fs::path input(const std::string& rel, const std::string& producer) {
    const fs::path p = rel.empty() ? fs::path() : path(rel);
    if (!fs::exists(p)) {
      throw ValidationError("missing upstream artifact " + p.string() + "; run `misfeat " + producer + "` first");
    }
    inputs_[rel] = sha256_hex(read_file(p));
    return p;
  }

  void external_input(const std::string& label, const std::string& file) {
    if (!fs::exists(file)) throw ValidationError("input file " + file + " does not exist");
    inputs_[label] = sha256_hex(read_file(file));
  }

  void write(const std::string& rel, const std::string& content) {
    write_raw(path(rel), content);
    outputs_[rel] = sha256_hex(content);
  }

  void write_json(const std::string& rel, const json& j) { write(rel, j.dump(2) + "\n"); }

  // Records a file written by library code.
  void record(const std::string& rel) { outputs_[rel] = sha256_hex(read_file(path(rel))); }

  void finish(std::uint64_t seed, json extra_timing = json::object()) {
    json manifest = {{"stage", name_},
                     {"stage_version", kStageVersion},
                     {"seed", seed},
                     {"config_sha256", config_hash(cfg_)},
                     {"inputs", inputs_},
                     {"outputs", outputs_}};
    write_raw(path("manifests/" + name_ + ".json"), manifest.dump(2) + "\n");
    extra_timing["seconds"] = seconds_since(start_);
    write_raw(path("timings/" + name_ + ".json"), extra_timing.dump(2) + "\n");
  }

  static void write_raw(const fs::path& p, const std::string& content) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    std::ofstream out(p, std::ios::binary);
    if (!out) throw RuntimeError("cannot write " + p.string());
    out << content;
    if (!out) throw RuntimeError("write failed for " + p.string());
  }

 private:
  std::string name_;
  const RunConfig& cfg_;
  fs::path root_;
  std::chrono::steady_clock::time_point start_;
  std::map<std::string, std::string> inputs_, outputs_;
};

// Runs fn(0..count-1) on up to `workers` threads; the first exception wins.
template <class Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t n_threads = std::min(count, workers == 0 ? hw : static_cast<std::size_t>(workers));
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n_threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Shared loaders

Dataset load_base_dataset(Stage& st, const RunConfig& c) {
  const std::string data = c.dataset_path(), schema = c.schema_path();
  if (!fs::exists(data) || !fs::exists(schema)) {
    throw ValidationError("dataset " + data + " or schema " + schema +
                          " not found; set [paths] dataset/schema or run `misfeat synth` first");
  }
  st.external_input("dataset", data);
  st.external_input("schema", schema);
  Dataset ds = load_dataset(data, load_schema(schema));
  for (const auto& [col, bins] : c.discretize) ds = discretize(ds, col, bins);
  return ds;
}

Partition base_partition(Stage& st, const RunConfig& c) {
  return partition_subgroups(load_base_dataset(st, c), c.subgroup_features);
}

void inject(Partition& part, double p, std::uint64_t seed) {
  if (part.subgroups.size() >= 2) {
    part.subgroups = inject_systematic_missingness(std::move(part.subgroups), p, derive_seed(seed, kInjectStream));
  }
}

Partition load_partition(Stage& st, const RunConfig& c) {
  Partition part = base_partition(st, c);
  apply_subgroup_masks(part, json::parse(read_file(st.input("prep/subgroups.json", "prep"))));
  return part;
}

std::vector<SampleSet> load_samples(Stage& st) {
  std::vector<SampleSet> out;
  for (const auto& j : json::parse(read_file(st.input("sample/samples.json", "sample")))) {
    out.push_back(sample_set_from_json(j));
  }
  return out;
}

std::vector<LabelMap> load_labels(Stage& st) {
  std::vector<LabelMap> out;
  for (const auto& j : json::parse(read_file(st.input("mi/labels.json", "mi")))) {
    LabelMap m;
    for (const auto& kv : j.at("labels")) m[kv.at(0).get<Mask>()] = kv.at(1).get<double>();
    out.push_back(std::move(m));
  }
  return out;
}

MultiplexGraph labeled_graph(const Partition& part, const std::vector<LabelMap>& labels, const RunConfig& c) {
  const int n = part.subgroups.front().n_features;
  MultiplexGraph g = build_multiplex(n, part.subgroups, c.bounds(n));
  if (labels.size() != part.subgroups.size()) throw ValidationError("label file does not match the partition");
  for (std::size_t i = 0; i < labels.size(); ++i) attach_labels(g, static_cast<int>(i), labels[i]);
  return g;
}

// ---------------------------------------------------------------------------
// Stages

void run_synth(const RunConfig& c) {
  Stage st("synth", c);
  SynthConfig s = c.synth;
  s.seed = c.seed;
  s.missing_p = c.p;
  std::vector<double> noise;
  const Dataset ds = generate_dataset(s, &noise);
  Stage::write_raw(st.path("data/dataset.csv"), "");
  save_dataset(st.path("data/dataset.csv").string(), st.path("data/schema.json").string(), ds);
  st.record("data/dataset.csv");
  st.record("data/schema.json");
  const Partition clean = partition_subgroups(ds, {"group"});
  json plant = to_json(plant_check(clean, s));
  plant["noise_rates"] = noise;
  st.write_json("data/plant.json", plant);
  st.finish(c.seed);
  std::cout << "synth: " << ds.n_rows() << " rows, " << s.n_features() << " features, " << s.n_subgroups
            << " subgroups -> " << st.path("data").string() << '\n';
}

void run_prep(const RunConfig& c) {
  Stage st("prep", c);
  Partition part = base_partition(st, c);
  inject(part, c.p, c.seed);
  st.write_json("prep/subgroups.json", to_json(part));
  st.finish(c.seed);
  for (const auto& sg : part.subgroups) {
    std::cout << "subgroup " << sg.index << ": " << sg.n_rows() << " rows, present "
              << FeatureSubset(sg.present).to_string(sg.n_features) << '\n';
  }
}

void run_lattice(const RunConfig& c) {
  Stage st("lattice", c);
  const Partition part = load_partition(st, c);
  const int n = part.subgroups.front().n_features;
  const MultiplexGraph g = build_multiplex(n, part.subgroups, c.bounds(n));
  st.write_json("lattice/graph.json", to_json(g));
  st.finish(c.seed);
  std::cout << "lattice: " << g.node_count() << " nodes, " << g.inter_level_edge_count() << " inter-level, "
            << g.intra_level_edge_count() << " intra-level, " << g.inter_lattice_edge_count() << " inter-lattice edges\n";
}

void run_sample(const RunConfig& c) {
  Stage st("sample", c);
  const Partition part = load_partition(st, c);
  const int n = part.subgroups.front().n_features;
  const LevelBounds bounds = c.bounds(n);
  std::vector<SampleSet> samples(part.subgroups.size());
  parallel_for(samples.size(), c.workers, [&](std::size_t i) {
    const auto& sg = part.subgroups[i];
    const auto budget = budget_from_rate(c.budget_rate, valid_state_count(sg.present, bounds));
    samples[i] = draw_sample(parse_sampler(c.sampler), sg.index, sg.present, budget, bounds, c.seed);
  });
  json out = json::array();
  for (const auto& s : samples) out.push_back(to_json(s));
  st.write_json("sample/samples.json", out);
  st.finish(c.seed);
  for (const auto& s : samples) std::cout << "subgroup " << s.subgroup << ": " << s.sampled.size() << " subsets\n";
}

void run_mi(const RunConfig& c) {
  Stage st("mi", c);
  const Partition part = load_partition(st, c);
  const auto samples = load_samples(st);
  if (samples.size() != part.subgroups.size()) throw ValidationError("sample file does not match the partition");
  const int n = part.subgroups.front().n_features;
  std::vector<EntropyStore> stores(part.subgroups.size());
  parallel_for(stores.size(), c.workers, [&](std::size_t i) { stores[i] = build_entropy_store(part.subgroups[i], c.bounds(n)); });
  json labels = json::array();
  for (std::size_t i = 0; i < stores.size(); ++i) {
    st.write_json("mi/store_" + std::to_string(i) + ".json", to_json(stores[i]));
    json pairs = json::array();
    for (const auto& [s, mi] : label_samples(stores[i], samples[i])) pairs.push_back({s, mi});
    labels.push_back({{"subgroup", i}, {"labels", pairs}});
  }
  st.write_json("mi/labels.json", labels);
  st.finish(c.seed);
  std::cout << "mi: " << stores.size() << " entropy stores\n";
}

void run_train(const RunConfig& c) {
  Stage st("train", c);
  const Partition part = load_partition(st, c);
  const MultiplexGraph g = labeled_graph(part, load_labels(st), c);
  std::vector<GnnModel> models;
  std::vector<TrainReport> reports;
  if (c.coupled) {
    auto t = train_coupled(g, c.gnn, c.seed);
    models = std::move(t.models);
    reports = std::move(t.reports);
  } else {
    for (int i = 0; i < g.n_subgroups(); ++i) {
      auto [m, r] = train_subgroup(g, i, c.gnn, c.seed);
      models.push_back(std::move(m));
      reports.push_back(std::move(r));
    }
  }
  json rj = json::array();
  for (std::size_t i = 0; i < models.size(); ++i) {
    const std::string rel = "train/model_" + std::to_string(i) + ".bin";
    Stage::write_raw(st.path(rel), "");
    save_model(st.path(rel).string(), models[i]);
    st.record(rel);
    rj.push_back(to_json(reports[i]));
    std::cout << "subgroup " << i << ": selected epoch " << reports[i].selected_epoch << ", train mse "
              << reports[i].selected_train_loss() << ", validation mse " << reports[i].selected_validation_loss() << '\n';
  }
  st.write_json("train/reports.json", rj);
  st.finish(c.seed);
}

void run_rank(const RunConfig& c) {
  Stage st("rank", c);
  const Partition part = load_partition(st, c);
  const MultiplexGraph g = labeled_graph(part, load_labels(st), c);
  const auto& names = part.spec.selection_features;
  json out = json::array();
  for (int i = 0; i < g.n_subgroups(); ++i) {
    const auto store =
        entropy_store_from_json(json::parse(read_file(st.input("mi/store_" + std::to_string(i) + ".json", "mi"))));
    const std::string model_rel = "train/model_" + std::to_string(i) + ".bin";
    std::optional<GnnModel> model;
    if (fs::exists(st.path(model_rel))) model = load_model(st.input(model_rel, "train").string());
    try {
      out.push_back(to_json(topk(g, store, model ? &*model : nullptr, i, c.m, c.k), names));
    } catch (const ValidationError& e) {
      if (model) throw;
      throw ValidationError(std::string(e.what()) + " (no model checkpoint at " + st.path(model_rel).string() + ")");
    }
  }
  st.write_json("rank/topk.json", out);
  st.finish(c.seed);
  for (const auto& r : out) {
    std::cout << "subgroup " << r["subgroup"] << ":";
    for (const auto& e : r["entries"]) std::cout << ' ' << e["bitmask"] << (e["provenance"] == "exact" ? "" : "*");
    std::cout << '\n';
  }
}

void run_eval(const RunConfig& c) {
  Stage st("eval", c);
  const Dataset ds = load_base_dataset(st, c);
  const EvalConfig ecfg = eval_config(c);
  MetricReport report;
  json per_seed = json::array();
  for (int s = 0; s < c.n_seeds; ++s) {
    const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(s);
    const auto t0 = std::chrono::steady_clock::now();
    Partition part = partition_subgroups(ds, c.subgroup_features);
    inject(part, c.p, seed);
    const EvalResult r = evaluate(part.subgroups, ecfg, seed);
    append(report, r);
    per_seed.push_back({{"seed", seed}, {"seconds", seconds_since(t0)}});
    std::cout << "seed " << seed << " done\n";
  }
  st.write_json("eval/metrics.json", to_json(report));
  std::ostringstream csv;
  write_csv(csv, report);
  st.write("eval/metrics.csv", csv.str());
  st.finish(c.seed, {{"per_seed", per_seed}});
  std::vector<std::string> methods{"misfeat"};
  if (c.run_mlp) methods.push_back("mlp");
  if (c.run_knn) methods.push_back("knn");
  for (const auto& m : methods) {
    std::cout << m << ": ndcg@" << c.k << " " << report.mean(m, "ndcg") << ", precision@" << c.k << " "
              << report.mean(m, "precision") << '\n';
  }
  std::cout << "misfeat closure accuracy " << report.mean("misfeat", "closure_accuracy") << '\n';
}

SynthConfig sweep_config(const RunConfig& c, int n, int subgroups, double p, std::uint64_t seed) {
  SynthConfig s;
  s.n_rows = c.sweep_rows;
  s.n_subgroups = subgroups;
  s.n_relevant = std::min(4, n);
  s.n_correlated = std::min(2, n - s.n_relevant);
  s.n_redundant = std::min(2, n - s.n_relevant - s.n_correlated);
  s.n_irrelevant = n - s.n_relevant - s.n_correlated - s.n_redundant;
  s.formula = s.n_relevant >= 4 ? c.synth.formula : "r0";
  s.missing_p = p;
  s.seed = seed;
  return s;
}

void run_bench(const RunConfig& c) {
  Stage st("bench", c);
  std::ostringstream sharing;
  sharing << "n,rows,naive_seconds,shared_seconds,speedup,max_abs_diff\n";
  for (int n : c.sharing_features) {
    const SharingTiming t = time_entropy_sharing(single_subgroup(n, c.sharing_rows, c.seed));
    sharing << t.n << ',' << t.rows << ',' << t.naive_seconds << ',' << t.shared_seconds << ',' << t.speedup() << ','
            << t.max_abs_diff << '\n';
    std::cout << "sharing n=" << n << ": naive " << t.naive_seconds << " s, shared " << t.shared_seconds << " s ("
              << t.speedup() << "x)\n";
  }
  Stage::write_raw(st.path("bench/sharing.csv"), sharing.str());

  std::ostringstream sweeps;
  sweeps << "sweep,value,entropy_seconds,sample_seconds,train_seconds,total_seconds\n";
  auto one = [&](const std::string& sweep, double value, int n, int subgroups, double p, double rate) {
    const SynthOutput data = generate(sweep_config(c, n, subgroups, p, c.seed));
    EvalConfig e = eval_config(c);
    e.budget_rate = rate;
    e.bounds = {1, 0};
    const LevelBounds bounds = LevelBounds::full(n);
    auto t0 = std::chrono::steady_clock::now();
    std::vector<EntropyStore> stores;
    for (const auto& sg : data.partition.subgroups) stores.push_back(build_entropy_store(sg, bounds));
    const double t_entropy = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    MultiplexGraph g = build_multiplex(n, data.partition.subgroups, bounds);
    for (std::size_t i = 0; i < stores.size(); ++i) {
      const auto& sg = data.partition.subgroups[i];
      const auto budget = budget_from_rate(rate, valid_state_count(sg.present, bounds));
      attach_labels(g, sg.index,
                    label_samples(stores[i], draw_sample(e.sampler, sg.index, sg.present, budget, bounds, c.seed)));
    }
    const double t_sample = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    GnnConfig gc = c.gnn;
    gc.train.epochs = c.sweep_epochs;
    train_coupled(g, gc, c.seed);
    const double t_train = seconds_since(t0);
    sweeps << sweep << ',' << value << ',' << t_entropy << ',' << t_sample << ',' << t_train << ','
           << t_entropy + t_sample + t_train << '\n';
    std::cout << "sweep " << sweep << "=" << value << ": " << t_entropy + t_sample + t_train << " s\n";
  };
  const int n0 = 8, g0 = 4;
  const double p0 = 0.2, b0 = 1.0;
  for (int n : c.sweep_features) one("features", n, n, g0, p0, b0);
  for (int s : c.sweep_subgroups) one("subgroups", s, n0, s, p0, b0);
  for (double p : c.sweep_p) one("p", p, n0, g0, p, b0);
  for (double b : c.sweep_budget) one("budget", b, n0, g0, p0, b);
  Stage::write_raw(st.path("bench/sweeps.csv"), sweeps.str());
  st.finish(c.seed);
}

int run(int argc, char** argv) {
  CLI::App app{"misfeat: feature-subset selection for subgroups with systematic missing data"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out;
  app.add_option("--config", config_path, "INI configuration file");
  app.add_option("--seed", seed, "base seed (overrides [run] seed and MISFEAT_SEED)");
  app.add_option("--workers", workers, "worker threads for per-subgroup work (0: all cores)");
  app.add_option("--out", out, "output directory (overrides [paths] out and MISFEAT_OUT)");

  const std::vector<std::pair<std::string, std::string>> stages{
      {"synth", "generate a synthetic dataset"},
      {"prep", "partition into subgroups and inject systematic missingness"},
      {"lattice", "build the multiplex lattice graph"},
      {"sample", "sample feature subsets for exact MI"},
      {"mi", "build entropy stores and label the samples"},
      {"train", "train the GNN"},
      {"rank", "answer top-K queries"},
      {"eval", "evaluate MISFEAT and baselines over seeds"},
      {"bench", "timing sweeps"}};
  for (const auto& [name, help] : stages) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  RunConfig cfg;
  if (!config_path.empty()) load_ini(cfg, config_path);
  if (const char* v = std::getenv("MISFEAT_SEED")) apply(cfg, "run.seed", v);
  if (const char* v = std::getenv("MISFEAT_OUT")) cfg.out = v;
  if (const char* v = std::getenv("MISFEAT_DATASET")) cfg.dataset = v;
  if (const char* v = std::getenv("MISFEAT_SCHEMA")) cfg.schema = v;
  if (seed) cfg.seed = *seed;
  if (workers) cfg.workers = *workers;
  if (out) cfg.out = *out;
  validate(cfg);

  const std::string cmd = app.get_subcommands().front()->get_name();
  if (cmd == "synth") run_synth(cfg);
  else if (cmd == "prep") run_prep(cfg);
  else if (cmd == "lattice") run_lattice(cfg);
  else if (cmd == "sample") run_sample(cfg);
  else if (cmd == "mi") run_mi(cfg);
  else if (cmd == "train") run_train(cfg);
  else if (cmd == "rank") run_rank(cfg);
  else if (cmd == "eval") run_eval(cfg);
  else if (cmd == "bench") run_bench(cfg);
  return 0;
}

}  // namespace
}  // namespace misfeat::cli

int main(int argc, char** argv) {
  try {
    return misfeat::cli::run(argc, argv);
  } catch (const misfeat::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed artifact: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return 2;
  }
}
