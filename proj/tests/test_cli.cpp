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

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "misfeat/data_model.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace misfeat {
namespace {

constexpr const char* kConfig = R"(# test scenario
[synth]
rows = 3000
subgroups = 3
relevant = 4
correlated = 1
redundant = 1
irrelevant = 0

[missing]
p = 0.2

[sample]
budget_rate = 0.75

[query]
m = 2
k = 3

[gnn]
hidden = 8
epochs = 20

[run]
seed = 7
seeds = 1

[bench]
sharing_features = 5
sharing_rows = 500
sweep_features = 5
sweep_subgroups = 2
sweep_p = 0.2
sweep_budget = 1.0
sweep_rows = 500
sweep_epochs = 2
)";

struct Result {
  int code = -1;
  std::string output;
};

Result run(const std::string& args, const std::string& env = "") {
  const fs::path log = testing::temp_dir("cli_log") / "out.txt";
  const std::string cmd = env + " " + MISFEAT_CLI + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream s;
  s << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, s.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path write_config(const std::string& name, const std::string& body) {
  static const fs::path dir = testing::temp_dir("cli_cfg");
  const fs::path p = dir / name;
  std::ofstream(p) << body;
  return p;
}

const fs::path& config() {
  static const fs::path p = write_config("test.ini", kConfig);
  return p;
}

std::string stage(const std::string& name, const fs::path& out, const std::string& extra = "") {
  return name + " --config " + config().string() + " --out " + out.string() + " " + extra;
}

void run_pipeline(const fs::path& out, const std::string& extra = "") {
  for (const char* s : {"synth", "prep", "lattice", "sample", "mi", "train", "rank"}) {
    const Result r = run(stage(s, out, extra));
    ASSERT_EQ(r.code, 0) << s << ": " << r.output;
  }
}

// Every artifact except timing logs, keyed by relative path.
std::map<std::string, std::string> artifacts(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), root).string();
    if (rel.rfind("timings/", 0) == 0) continue;
    out[rel] = slurp(e.path());
  }
  return out;
}

TEST(Cli, FullPipelineSucceeds) {
  const fs::path out = testing::temp_dir("cli_full");
  run_pipeline(out);
  for (const char* f : {"data/dataset.csv", "data/schema.json", "prep/subgroups.json", "lattice/graph.json",
                        "sample/samples.json", "mi/labels.json", "mi/store_0.json", "train/model_2.bin",
                        "train/reports.json", "rank/topk.json", "manifests/rank.json", "timings/rank.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const auto topk = nlohmann::json::parse(slurp(out / "rank/topk.json"));
  ASSERT_EQ(topk.size(), 3u);
  for (const auto& r : topk) EXPECT_EQ(r["entries"].size(), 3u);
  const auto manifest = nlohmann::json::parse(slurp(out / "manifests/rank.json"));
  EXPECT_EQ(manifest["seed"], 7);
  EXPECT_EQ(manifest["stage_version"], 1);
  EXPECT_EQ(manifest["config_sha256"].get<std::string>().size(), 64u);
  EXPECT_TRUE(manifest["inputs"].contains("train/model_0.bin"));
}

TEST(Cli, StagesAreDeterministic) {
  const fs::path a = testing::temp_dir("cli_det_a"), b = testing::temp_dir("cli_det_b");
  run_pipeline(a);
  run_pipeline(b, "--workers 2");
  ASSERT_EQ(run(stage("eval", a)).code, 0);
  ASSERT_EQ(run(stage("eval", b)).code, 0);
  const auto fa = artifacts(a), fb = artifacts(b);
  ASSERT_EQ(fa.size(), fb.size());
  for (const auto& [rel, bytes] : fa) EXPECT_TRUE(fb.count(rel) && fb.at(rel) == bytes) << rel;
}

TEST(Cli, EvalWritesJsonAndCsv) {
  const fs::path out = testing::temp_dir("cli_eval");
  ASSERT_EQ(run(stage("synth", out)).code, 0);
  const Result r = run(stage("eval", out));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto j = nlohmann::json::parse(slurp(out / "eval/metrics.json"));
  EXPECT_TRUE(j["averages"].contains("misfeat"));
  EXPECT_TRUE(j["averages"].contains("mlp"));
  EXPECT_TRUE(j["averages"].contains("knn"));
  EXPECT_EQ(slurp(out / "eval/metrics.csv").rfind("method,seed,subgroup,metric,value\n", 0), 0u);
}

TEST(Cli, RankWithoutModelFails) {
  const fs::path out = testing::temp_dir("cli_nomodel");
  for (const char* s : {"synth", "prep", "sample", "mi"}) ASSERT_EQ(run(stage(s, out)).code, 0) << s;
  const Result r = run(stage("rank", out));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("model"), std::string::npos) << r.output;
}

TEST(Cli, MissingUpstreamArtifactFails) {
  const fs::path out = testing::temp_dir("cli_upstream");
  ASSERT_EQ(run(stage("synth", out)).code, 0);
  const Result r = run(stage("sample", out));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("misfeat prep"), std::string::npos) << r.output;
}

TEST(Cli, ValidationErrorsExitOne) {
  const fs::path out = testing::temp_dir("cli_bad");
  EXPECT_EQ(run("synth --config " + write_config("unknown.ini", "[gnn]\nwidth = 3\n").string()).code, 1);
  EXPECT_EQ(run("synth --config " + write_config("rate.ini", "[sample]\nbudget_rate = 1.5\n").string()).code, 1);
  EXPECT_EQ(run("synth --config " + write_config("nan.ini", "[query]\nk = ten\n").string()).code, 1);
  EXPECT_EQ(run("synth --config " + write_config("k.ini", "[query]\nk = 0\n").string()).code, 1);
  EXPECT_EQ(run("synth --config /nonexistent/file.ini").code, 1);
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("--help").code, 0);
}

TEST(Cli, RuntimeErrorsExitTwo) {
  const fs::path blocker = testing::temp_dir("cli_runtime") / "file";
  std::ofstream(blocker) << "x";
  const Result r = run(stage("synth", blocker / "sub"));
  EXPECT_EQ(r.code, 2) << r.output;
}

TEST(Cli, EnvironmentOverridesAndFlagPrecedence) {
  const fs::path env_out = testing::temp_dir("cli_env");
  Result r = run("synth --config " + config().string(), "MISFEAT_OUT=" + env_out.string() + " MISFEAT_SEED=11");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(nlohmann::json::parse(slurp(env_out / "manifests/synth.json"))["seed"], 11);
  r = run("synth --seed 12 --config " + config().string(), "MISFEAT_OUT=" + env_out.string() + " MISFEAT_SEED=11");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(nlohmann::json::parse(slurp(env_out / "manifests/synth.json"))["seed"], 12);
  // Dataset paths from the environment feed later stages.
  const fs::path other = testing::temp_dir("cli_env_other");
  r = run(stage("prep", other),
          "MISFEAT_DATASET=" + (env_out / "data/dataset.csv").string() +
              " MISFEAT_SCHEMA=" + (env_out / "data/schema.json").string());
  EXPECT_EQ(r.code, 0) << r.output;
}

TEST(Cli, ExternalDatasetWithDiscretization) {
  const fs::path out = testing::temp_dir("cli_table1");
  const fs::path cfg = write_config("table1.ini", "[paths]\ndataset = " + testing::fixture("table1.csv") +
                                                      "\nschema = " + testing::fixture("table1.schema.json") +
                                                      "\n[data]\nsubgroup_features = Ethnicity\n"
                                                      "discretize = Age:2\n[missing]\np = 0.0\n");
  Result r = run("prep --config " + cfg.string() + " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  r = run("lattice --config " + cfg.string() + " --out " + out.string());
  EXPECT_EQ(r.code, 0) << r.output;
}

TEST(Cli, BenchWritesTimingCsv) {
  const fs::path out = testing::temp_dir("cli_bench");
  const Result r = run(stage("bench", out));
  ASSERT_EQ(r.code, 0) << r.output;
  const std::string sharing = slurp(out / "bench/sharing.csv");
  EXPECT_EQ(sharing.rfind("n,rows,naive_seconds,shared_seconds,speedup,max_abs_diff\n", 0), 0u);
  EXPECT_NE(slurp(out / "bench/sweeps.csv").find("budget,1,"), std::string::npos);
}

}  // namespace
}  // namespace misfeat
