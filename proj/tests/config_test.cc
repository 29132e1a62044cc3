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

#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "noiselab/config.h"
#include "noiselab/corpus.h"
#include "noiselab/errors.h"

namespace noiselab {
namespace {

namespace fs = std::filesystem;

RunConfig shipped() {
  RunConfig c = RunConfig::defaults();
  c.data_dir = NOISELAB_DATA_DIR;
  return c;
}

TEST(ConfigTest, DefaultsValidate) {
  EXPECT_NO_THROW(shipped().validate());
  RunConfig c = RunConfig::defaults();
  EXPECT_EQ(c.pretrain.alpha, 0.6);
  EXPECT_EQ(c.finetune.beta, 0.3);
  EXPECT_EQ(c.single.size(), 5u);
  EXPECT_EQ(c.mixed.size(), 4u);
  EXPECT_EQ(c.ablate_variants, default_ablation_variants());
}

TEST(ConfigTest, SerializeParseRoundTrip) {
  RunConfig c = shipped();
  c.finetune.tau = 0.123456789;
  c.finetune.flags.use_adversarial = false;
  c.encoder.dim = 32;
  c.single = {{"odd", {"char_delete:0.3:99"}}};
  RunConfig back = parse_config(c.serialize());
  EXPECT_EQ(back, c);
  EXPECT_EQ(back.serialize(), c.serialize());
  EXPECT_EQ(parse_config(back.serialize()).serialize(), back.serialize());
}

TEST(ConfigTest, CommentsAndDefaults) {
  RunConfig c = parse_config("# just a comment\n\nrun.seed = 11\n");
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.finetune.beta, 0.3);
  EXPECT_TRUE(c.single.empty());
}

TEST(ConfigTest, ParseErrorsAreAllListed) {
  try {
    parse_config("run.seed = x\nbogus.key = 1\nrun.seed = 3\nno equals sign\n");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("4 violation"), std::string::npos) << what;
    EXPECT_NE(what.find("line 1"), std::string::npos);
    EXPECT_NE(what.find("unknown key 'bogus.key'"), std::string::npos);
    EXPECT_NE(what.find("duplicate"), std::string::npos);
  }
}

TEST(ConfigTest, ValidationListsEveryViolation) {
  RunConfig c = shipped();
  c.pretrain.alpha = 1.5;
  c.finetune.beta = -1;
  c.finetune.tau = 0;
  c.finetune.epsilon = 0;
  c.values = "missing.tsv";
  c.single.push_back({"clean", {"char_delete:0.1"}});
  c.mixed.push_back({"bad", {"char_swap:0.1"}});
  c.ablate_variants = {"full", "full"};
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    for (const char* needle : {"alpha", "beta", "tau", "epsilon", "missing.tsv", "clean", "char_swap",
                               "listed twice"}) {
      EXPECT_NE(what.find(needle), std::string::npos) << needle << " in " << what;
    }
  }
}

TEST(ConfigTest, SeedOverrideAndHash) {
  RunConfig a = shipped();
  RunConfig b = shipped();
  b.output_dir = "elsewhere";
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_EQ(a.hash().size(), 40u);
  b.set_seed(11);
  EXPECT_EQ(b.finetune.seed, 11u);
  EXPECT_EQ(b.pretrain.seed, 11u);
  EXPECT_EQ(b.data_seed, 11u);
  EXPECT_NE(a.hash(), b.hash());
}

TEST(ConfigTest, Sha1KnownValues) {
  EXPECT_EQ(sha1_hex("abc"), "a9993e364706816aba3e25717850c26c9cd0d89d");
  // `git hash-object` of an empty file.
  EXPECT_EQ(git_blob_sha1(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST(ConfigTest, PathsResolveAgainstConfigDir) {
  const fs::path dir = fs::temp_directory_path() / "noiselab_config_test";
  fs::create_directories(dir);
  write_file(dir / "run.conf", "paths.data_dir = ../data\npaths.output_dir = out\n");
  RunConfig c = load_config(dir / "run.conf");
  EXPECT_EQ(c.output_path(), dir / "out");
  EXPECT_EQ(c.data_path("values.tsv"), dir / "../data" / "values.tsv");
  EXPECT_THROW(load_config(dir / "absent.conf"), IoError);
}

TEST(ConfigTest, ResolvePlanFillsSeeds) {
  ChainList chains{{"typos", {"char_delete:0.1", "char_insert:0.2:5"}}};
  SuitePlan a = resolve_plan(chains, 7, "single");
  SuitePlan b = resolve_plan(chains, 7, "single");
  EXPECT_EQ(a, b);
  EXPECT_EQ(a[0].second[1].seed, 5u);
  EXPECT_NE(resolve_plan(chains, 8, "single")[0].second[0].seed, a[0].second[0].seed);
}

}  // namespace
}  // namespace noiselab
