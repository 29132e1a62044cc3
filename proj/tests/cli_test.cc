// Copyright 2026 The NoiseLab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "json.hpp"
#include "noiselab/config.h"
#include "noiselab/corpus.h"

namespace noiselab {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code = -1;
  std::string output;
};

// Runs the CLI and captures stdout and stderr together.
CliRun run_cli(const std::string& args) {
  const std::string cmd = std::string(NOISELAB_CLI) + " " + args + " 2>&1";
  CliRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "noiselab_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// A small, fast configuration over the shipped data files.
std::string tiny_config(const fs::path& out) {
  RunConfig c = RunConfig::defaults();
  c.data_dir = NOISELAB_DATA_DIR;
  c.output_dir = out.string();
  c.train_size = 24;
  c.test_size = 12;
  c.encoder.dim = 16;
  c.encoder.heads = 2;
  c.encoder.layers = 1;
  c.encoder.ffn_dim = 16;
  c.encoder.proj_dim = 8;
  c.pretrain.epochs = 1;
  c.finetune.epochs = 1;
  c.finetune.epsilon = 0.1;
  c.ablate_variants = {"full", "-adv"};
  return c.serialize();
}

nlohmann::json last_json_line(const std::string& text) {
  auto end = text.find_last_not_of('\n');
  auto start = text.rfind('\n', end);
  return nlohmann::json::parse(text.substr(start == std::string::npos ? 0 : start + 1, end + 1));
}

TEST(CliTest, MissingConfigIsUsageError) {
  CliRun r = run_cli("all");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(last_json_line(r.output)["error"], "usage");
  EXPECT_EQ(run_cli("all --config /nonexistent/x.conf").code, 2);
  EXPECT_EQ(run_cli("").code, 2);
  EXPECT_EQ(run_cli("frobnicate --config x").code, 2);
}

TEST(CliTest, InvalidConfigListsViolations) {
  fs::path dir = scratch("invalid");
  write_file(dir / "bad.conf", std::string(NOISELAB_DATA_DIR).insert(0, "paths.data_dir = ") +
                                   "\npretrain.alpha = 2\nfinetune.tau = 0\n");
  CliRun r = run_cli("all --config " + (dir / "bad.conf").string());
  EXPECT_EQ(r.code, 3);
  auto j = last_json_line(r.output);
  EXPECT_EQ(j["error"], "validation");
  EXPECT_EQ(j["exit"], 3);
  const std::string msg = j["message"];
  EXPECT_NE(msg.find("alpha"), std::string::npos);
  EXPECT_NE(msg.find("tau"), std::string::npos);
}

TEST(CliTest, FinetuneWithoutCheckpointIsValidationError) {
  fs::path dir = scratch("nockpt");
  write_file(dir / "run.conf", tiny_config(dir / "out"));
  const std::string base = " --quiet --config " + (dir / "run.conf").string();
  ASSERT_EQ(run_cli("gen-data" + base).code, 0);
  ASSERT_EQ(run_cli("perturb" + base).code, 0);
  CliRun r = run_cli("finetune" + base);
  EXPECT_EQ(r.code, 3) << r.output;
  EXPECT_NE(r.output.find("pretrain"), std::string::npos);
}

TEST(CliTest, StageWithoutInputsFails) {
  fs::path dir = scratch("noinputs");
  write_file(dir / "run.conf", tiny_config(dir / "out"));
  CliRun r = run_cli("perturb --quiet --config " + (dir / "run.conf").string());
  EXPECT_NE(r.code, 0);
}

TEST(CliTest, AllIsReproducibleAndWritesManifests) {
  fs::path dir = scratch("all");
  write_file(dir / "run.conf", tiny_config(dir / "out"));
  const std::string args = "all --quiet --seed 5 --config " + (dir / "run.conf").string();
  CliRun first = run_cli(args + " --output " + (dir / "a").string());
  ASSERT_EQ(first.code, 0) << first.output;
  CliRun second = run_cli(args + " --output " + (dir / "b").string());
  ASSERT_EQ(second.code, 0) << second.output;

  const std::string report = read_file(dir / "a" / "eval" / "report.json");
  EXPECT_EQ(report, read_file(dir / "b" / "eval" / "report.json"));
  auto j = nlohmann::json::parse(report);
  EXPECT_EQ(j["seed"], 5);
  EXPECT_TRUE(j["results"].contains("clean"));
  EXPECT_TRUE(j["results"].contains("overall"));
  EXPECT_EQ(j["results"].size(), 7u);

  for (const char* stage : {"data", "perturb", "pretrain", "finetune", "eval"}) {
    const fs::path m = dir / "a" / stage / "manifest.json";
    ASSERT_TRUE(fs::exists(m)) << m;
    auto mj = nlohmann::json::parse(read_file(m));
    EXPECT_EQ(mj["config_hash"], j["config_hash"]);
    for (const auto& [rel, hash] : mj["outputs"].items()) {
      EXPECT_EQ(hash, git_blob_sha1(read_file(dir / "a" / rel))) << rel;
    }
  }
  EXPECT_EQ(read_file(dir / "a" / "eval" / "embeddings.tsv"),
            read_file(dir / "b" / "eval" / "embeddings.tsv"));
}

TEST(CliTest, AblateWritesSummary) {
  fs::path dir = scratch("ablate");
  write_file(dir / "run.conf", tiny_config(dir / "out"));
  const std::string base = " --quiet --config " + (dir / "run.conf").string();
  ASSERT_EQ(run_cli("gen-data" + base).code, 0);
  ASSERT_EQ(run_cli("perturb" + base).code, 0);
  CliRun r = run_cli("ablate" + base);
  ASSERT_EQ(r.code, 0) << r.output;
  auto j = nlohmann::json::parse(read_file(dir / "out" / "ablate" / "summary.json"));
  EXPECT_EQ(j.dump().find("-adv") != std::string::npos, true);
  EXPECT_TRUE(fs::exists(dir / "out" / "ablate" / "summary.txt"));
}

}  // namespace
}  // namespace noiselab
