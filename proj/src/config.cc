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

#include "noiselab/config.h"

#include <openssl/evp.h>

#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "noiselab/corpus.h"
#include "noiselab/errors.h"
#include "noiselab/rng.h"

namespace noiselab {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto comma = s.find(',', start);
    if (comma == std::string_view::npos) comma = s.size();
    std::string item = trim(s.substr(start, comma - start));
    if (!item.empty()) out.push_back(item);
    start = comma + 1;
  }
  return out;
}

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& i : items) out += (out.empty() ? "" : ", ") + i;
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

bool parse_double(const std::string& s, double& out) {
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

template <typename T>
bool parse_uint(const std::string& s, T& out) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return false;
  out = static_cast<T>(v);
  return true;
}

bool parse_bool(const std::string& s, bool& out) {
  if (s == "true") {
    out = true;
  } else if (s == "false") {
    out = false;
  } else {
    return false;
  }
  return true;
}

// get: canonical text; set: returns an error message or "".
struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<std::string(RunConfig&, const std::string&)> set;
};

template <typename Member>
Field str_field(Member m) {
  return {[m](const RunConfig& c) { return c.*m; },
          [m](RunConfig& c, const std::string& v) {
            c.*m = v;
            return std::string();
          }};
}

template <typename Access>
Field size_field(Access a) {
  return {[a](const RunConfig& c) { return std::to_string(a(const_cast<RunConfig&>(c))); },
          [a](RunConfig& c, const std::string& v) {
            return parse_uint(v, a(c)) ? std::string() : "expected a non-negative integer";
          }};
}

template <typename Access>
Field double_field(Access a) {
  return {[a](const RunConfig& c) { return fmt_double(a(const_cast<RunConfig&>(c))); },
          [a](RunConfig& c, const std::string& v) {
            return parse_double(v, a(c)) ? std::string() : "expected a number";
          }};
}

template <typename Access>
Field bool_field(Access a) {
  return {[a](const RunConfig& c) { return std::string(a(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [a](RunConfig& c, const std::string& v) {
            return parse_bool(v, a(c)) ? std::string() : "expected true or false";
          }};
}

template <typename Access>
Field text_field(Access a) {
  return {[a](const RunConfig& c) { return a(const_cast<RunConfig&>(c)); },
          [a](RunConfig& c, const std::string& v) {
            a(c) = v;
            return std::string();
          }};
}

#define NL_REF(expr) [](RunConfig& c) -> auto& { return expr; }

// Ordered as serialized.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> kFields = {
      {"paths.data_dir", str_field(&RunConfig::data_dir)},
      {"paths.output_dir", str_field(&RunConfig::output_dir)},
      {"paths.templates", str_field(&RunConfig::templates)},
      {"paths.values", str_field(&RunConfig::values)},
      {"paths.homophones", str_field(&RunConfig::homophones)},
      {"paths.synonyms", str_field(&RunConfig::synonyms)},
      {"paths.fillers", str_field(&RunConfig::fillers)},
      {"paths.stopwords", str_field(&RunConfig::stopwords)},
      {"paths.keyboard", str_field(&RunConfig::keyboard)},
      {"run.seed", size_field(NL_REF(c.seed))},
      {"data.train_size", size_field(NL_REF(c.train_size))},
      {"data.test_size", size_field(NL_REF(c.test_size))},
      {"data.min_freq", size_field(NL_REF(c.min_freq))},
      {"data.seed", size_field(NL_REF(c.data_seed))},
      {"perturb.seed", size_field(NL_REF(c.perturb_seed))},
      {"encoder.dim", size_field(NL_REF(c.encoder.dim))},
      {"encoder.heads", size_field(NL_REF(c.encoder.heads))},
      {"encoder.layers", size_field(NL_REF(c.encoder.layers))},
      {"encoder.ffn_dim", size_field(NL_REF(c.encoder.ffn_dim))},
      {"encoder.max_len", size_field(NL_REF(c.encoder.max_len))},
      {"encoder.dropout", double_field(NL_REF(c.encoder.dropout))},
      {"encoder.proj_dim", size_field(NL_REF(c.encoder.proj_dim))},
      {"encoder.init_std", double_field(NL_REF(c.encoder.init_std))},
      {"pretrain.epochs", size_field(NL_REF(c.pretrain.epochs))},
      {"pretrain.lr", double_field(NL_REF(c.pretrain.lr))},
      {"pretrain.batch", size_field(NL_REF(c.pretrain.batch_size))},
      {"pretrain.k", size_field(NL_REF(c.pretrain.k))},
      {"pretrain.alpha", double_field(NL_REF(c.pretrain.alpha))},
      {"pretrain.seed", size_field(NL_REF(c.pretrain.seed))},
      {"pretrain.optimizer", text_field(NL_REF(c.pretrain.optimizer))},
      {"pretrain.clip_norm", double_field(NL_REF(c.pretrain.clip_norm))},
      {"pretrain.normalize_smp", bool_field(NL_REF(c.pretrain.normalize_smp))},
      {"finetune.epochs", size_field(NL_REF(c.finetune.epochs))},
      {"finetune.lr", double_field(NL_REF(c.finetune.lr))},
      {"finetune.batch", size_field(NL_REF(c.finetune.batch_size))},
      {"finetune.tau", double_field(NL_REF(c.finetune.tau))},
      {"finetune.epsilon", double_field(NL_REF(c.finetune.epsilon))},
      {"finetune.beta", double_field(NL_REF(c.finetune.beta))},
      {"finetune.seed", size_field(NL_REF(c.finetune.seed))},
      {"finetune.optimizer", text_field(NL_REF(c.finetune.optimizer))},
      {"finetune.clip_norm", double_field(NL_REF(c.finetune.clip_norm))},
      {"finetune.per_token_norm", bool_field(NL_REF(c.finetune.per_token_norm))},
      {"finetune.use_pretrained", bool_field(NL_REF(c.finetune.flags.use_pretrained))},
      {"finetune.use_smp", bool_field(NL_REF(c.finetune.flags.use_smp))},
      {"finetune.use_snd", bool_field(NL_REF(c.finetune.flags.use_snd))},
      {"finetune.use_contrastive", bool_field(NL_REF(c.finetune.flags.use_contrastive))},
      {"finetune.use_adversarial", bool_field(NL_REF(c.finetune.flags.use_adversarial))},
      {"ablate.variants",
       {[](const RunConfig& c) { return join_list(c.ablate_variants); },
        [](RunConfig& c, const std::string& v) {
          c.ablate_variants = split_list(v);
          return std::string();
        }}},
      {"ablate.in_all", bool_field(NL_REF(c.ablate_in_all))},
  };
  return kFields;
}

#undef NL_REF

void check_chains(const ChainList& chains, const std::string& section,
                  std::vector<std::string>& problems) {
  std::set<std::string> seen;
  for (const auto& [name, specs] : chains) {
    if (!seen.insert(name).second) problems.push_back(section + "." + name + ": duplicate chain name");
    if (name == "clean" || name == "overall") {
      problems.push_back(section + "." + name + ": reserved suite name");
    }
    if (specs.empty()) problems.push_back(section + "." + name + ": empty chain");
    for (const auto& s : specs) {
      try {
        PerturbationSpec::parse(s, 0).validate();
      } catch (const Error& e) {
        problems.push_back(section + "." + name + ": " + e.what());
      }
    }
  }
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  // Test suites are harsher than the training augmentation so that
  // evaluation measures robustness to noise levels not seen in training.
  c.single = {
      {"typos", {"char_insert:0.1", "char_delete:0.1", "char_substitute:0.1"}},
      {"speech", {"word_homophone:0.5", "word_delete:0.15", "word_insert:0.1"}},
      {"paraphrase", {"sent_paraphrase:1"}},
      {"simplification", {"sent_simplify:1"}},
      {"verbose", {"sent_verbose:1", "sent_verbose:1"}},
  };
  c.mixed = {
      {"char+word", {"char_substitute:0.2", "word_homophone:0.5"}},
      {"char+sen", {"char_substitute:0.2", "sent_verbose:1"}},
      {"word+sen", {"word_homophone:0.5", "sent_paraphrase:1"}},
      {"char+word+sen", {"char_substitute:0.2", "word_homophone:0.5", "sent_verbose:1"}},
  };
  c.augment = {
      {"typos", {"char_insert:0.05", "char_delete:0.05", "char_substitute:0.05"}},
      {"speech", {"word_homophone:0.1", "word_delete:0.1", "word_insert:0.1"}},
      {"paraphrase", {"sent_paraphrase:1"}},
      {"simplification", {"sent_simplify:1"}},
      {"verbose", {"sent_verbose:1"}},
  };
  return c;
}

void RunConfig::set_seed(std::uint64_t s) {
  seed = data_seed = perturb_seed = pretrain.seed = finetune.seed = s;
}

std::filesystem::path RunConfig::resolve(const std::string& path) const {
  std::filesystem::path p(path);
  if (p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

std::filesystem::path RunConfig::data_path(const std::string& file) const {
  std::filesystem::path p(file);
  if (p.is_absolute()) return p;
  return resolve(data_dir) / p;
}

LexiconPaths RunConfig::lexicon_paths() const {
  return {data_path(homophones), data_path(synonyms), data_path(fillers), data_path(stopwords),
          data_path(keyboard)};
}

void RunConfig::validate() const {
  std::vector<std::string> problems;
  for (const auto& [key, file] :
       std::vector<std::pair<std::string, std::string>>{{"paths.templates", templates},
                                                        {"paths.values", values},
                                                        {"paths.homophones", homophones},
                                                        {"paths.synonyms", synonyms},
                                                        {"paths.fillers", fillers},
                                                        {"paths.stopwords", stopwords},
                                                        {"paths.keyboard", keyboard}}) {
    if (!std::filesystem::is_regular_file(data_path(file))) {
      problems.push_back(key + ": file not found: " + data_path(file).string());
    }
  }
  if (output_dir.empty()) problems.push_back("paths.output_dir must not be empty");
  if (train_size == 0) problems.push_back("data.train_size must be >= 1");
  if (test_size == 0) problems.push_back("data.test_size must be >= 1");

  EncoderConfig enc = encoder;
  enc.vocab_size = Vocab::kNumReserved + 1;
  enc.num_tags = 1;
  try {
    enc.validate();
  } catch (const Error& e) {
    problems.push_back(e.what());
  }
  try {
    pretrain.validate();
  } catch (const Error& e) {
    problems.push_back(e.what());
  }
  try {
    finetune.validate();
  } catch (const Error& e) {
    problems.push_back(e.what());
  }
  if (pretrain.use_smp != finetune.flags.use_smp || pretrain.use_snd != finetune.flags.use_snd) {
    problems.push_back("pretrain.use_smp/use_snd must mirror finetune.use_smp/use_snd");
  }
  check_chains(single, "single", problems);
  check_chains(mixed, "mixed", problems);
  check_chains(augment, "augment", problems);
  if (augment.empty()) problems.push_back("augment: at least one chain is required");
  std::set<std::string> variants;
  for (const auto& v : ablate_variants) {
    if (!variants.insert(v).second) problems.push_back("ablate.variants: '" + v + "' listed twice");
    try {
      ablation_variant(v);
    } catch (const Error& e) {
      problems.push_back(std::string("ablate.variants: ") + e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = std::to_string(problems.size()) + " violation(s): ";
    for (std::size_t i = 0; i < problems.size(); ++i) msg += (i ? "; " : "") + problems[i];
    throw ConfigError(msg);
  }
}

std::string RunConfig::serialize(bool include_output) const {
  std::string out;
  for (const auto& [key, field] : fields()) {
    if (!include_output && key == "paths.output_dir") continue;
    out += key + " = " + field.get(*this) + "\n";
  }
  for (const auto& [section, chains] :
       std::vector<std::pair<std::string, const ChainList*>>{{"single", &single}, {"mixed", &mixed}, {"augment", &augment}}) {
    for (const auto& [name, specs] : *chains) out += section + "." + name + " = " + join_list(specs) + "\n";
  }
  return out;
}

std::string RunConfig::hash() const { return sha1_hex(serialize(false)); }

bool RunConfig::operator==(const RunConfig& o) const { return serialize() == o.serialize(); }

RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  RunConfig c;
  c.base_dir = base_dir;
  std::vector<std::string> problems;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) {
      problems.push_back(where + "expected 'section.key = value'");
      continue;
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (!seen.insert(key).second) {
      problems.push_back(where + "duplicate key '" + key + "'");
      continue;
    }
    const auto dot = key.find('.');
    const std::string section = dot == std::string::npos ? "" : key.substr(0, dot);
    if (section == "single" || section == "mixed" || section == "augment") {
      const std::string name = key.substr(dot + 1);
      if (name.empty()) {
        problems.push_back(where + "missing chain name");
        continue;
      }
      ChainList& list = section == "single" ? c.single : section == "mixed" ? c.mixed : c.augment;
      list.emplace_back(name, split_list(value));
      continue;
    }
    bool found = false;
    for (const auto& [k, field] : fields()) {
      if (k != key) continue;
      found = true;
      const std::string err = field.set(c, value);
      if (!err.empty()) problems.push_back(where + key + ": " + err + ", got '" + value + "'");
    }
    if (!found) problems.push_back(where + "unknown key '" + key + "'");
  }
  if (!problems.empty()) {
    std::string msg = std::to_string(problems.size()) + " violation(s): ";
    for (std::size_t i = 0; i < problems.size(); ++i) msg += (i ? "; " : "") + problems[i];
    throw ConfigError(msg);
  }
  // Pre-training follows the ablation flags of the fine-tuning block.
  c.pretrain.use_smp = c.finetune.flags.use_smp;
  c.pretrain.use_snd = c.finetune.flags.use_snd;
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  return parse_config(text, path.parent_path());
}

std::string sha1_hex(std::string_view contents) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(contents.data(), contents.size(), md, &len, EVP_sha1(), nullptr) != 1) {
    throw IoError("SHA-1 digest failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

std::string git_blob_sha1(std::string_view contents) {
  std::string blob = "blob " + std::to_string(contents.size());
  blob.push_back('\0');
  blob.append(contents);
  return sha1_hex(blob);
}

SuitePlan resolve_plan(const ChainList& chains, std::uint64_t seed, const std::string& purpose) {
  SuitePlan plan;
  for (const auto& [name, specs] : chains) {
    const std::uint64_t chain_seed = Rng(seed, purpose + ":" + name).next_u64();
    std::vector<PerturbationSpec> resolved;
    for (const auto& s : specs) resolved.push_back(PerturbationSpec::parse(s, chain_seed));
    plan.emplace_back(name, std::move(resolved));
  }
  return plan;
}

}  // namespace noiselab
