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

// Run configuration: flat "section.key = value" text.
//
//   # comment
//   run.seed = 7
//   encoder.dim = 64
//   finetune.use_adversarial = true
//   single.typos = char_substitute:0.15
//   mixed.char+word = char_substitute:0.15, word_homophone:0.1
//
// Lists are comma separated. Keys under single./mixed./augment. name
// perturbation chains (none unless listed); every other key is fixed and
// falls back to its default when absent. Relative paths resolve
// against the directory of the config file.

#ifndef NOISELAB_CONFIG_H_
#define NOISELAB_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "noiselab/encoder.h"
#include "noiselab/finetune.h"
#include "noiselab/perturb.h"
#include "noiselab/pretrain.h"

namespace noiselab {

// Named chain of raw spec strings ("op:rate[:seed]"); seeds are filled in
// when the plan is resolved.
using ChainList = std::vector<std::pair<std::string, std::vector<std::string>>>;

struct RunConfig {
  std::filesystem::path base_dir;  // not serialized

  std::string data_dir = "data";
  std::string output_dir = "out";
  std::string templates = "templates.txt";
  std::string values = "values.tsv";
  std::string homophones = "homophones.tsv";
  std::string synonyms = "synonyms.tsv";
  std::string fillers = "fillers.txt";
  std::string stopwords = "stopwords.txt";
  std::string keyboard = "keyboard.tsv";

  std::uint64_t seed = 7;  // model initialisation and report metadata
  std::size_t train_size = 500;
  std::size_t test_size = 200;
  std::size_t min_freq = 1;
  std::uint64_t data_seed = 7;
  std::uint64_t perturb_seed = 7;

  EncoderConfig encoder;  // vocab_size and num_tags come from the data
  PretrainConfig pretrain;
  FinetuneConfig finetune;

  ChainList single;
  ChainList mixed;
  ChainList augment;

  std::vector<std::string> ablate_variants = default_ablation_variants();
  bool ablate_in_all = false;

  // Default hyperparameters and the stock suites.
  static RunConfig defaults();

  // Sets every seed.
  void set_seed(std::uint64_t s);

  // Throws ConfigError naming every violated invariant.
  void validate() const;

  std::filesystem::path resolve(const std::string& path) const;
  std::filesystem::path data_path(const std::string& file) const;
  std::filesystem::path output_path() const { return resolve(output_dir); }
  LexiconPaths lexicon_paths() const;

  // Canonical text; parse(serialize()) == *this.
  std::string serialize(bool include_output = true) const;
  // SHA-1 of the canonical text without paths.output_dir.
  std::string hash() const;

  bool operator==(const RunConfig& o) const;
};

// ConfigError listing every bad line (unknown key, bad value, duplicate).
RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
// IoError if the file cannot be read.
RunConfig load_config(const std::filesystem::path& path);

// "blob <size>\0<contents>" hashed with SHA-1, hex encoded.
std::string git_blob_sha1(std::string_view contents);
std::string sha1_hex(std::string_view contents);

// Resolves raw spec strings; missing seeds derive from (seed, purpose:name).
SuitePlan resolve_plan(const ChainList& chains, std::uint64_t seed, const std::string& purpose);

}  // namespace noiselab

#endif  // NOISELAB_CONFIG_H_
