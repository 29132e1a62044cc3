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

// Rule-based multi-level text perturbation with BIO realignment.
//
// Character ops edit one character inside a token (tokens of length 1 are
// never touched). Word ops delete or insert whole tokens or swap in a
// homophone. Sentence ops fire once per sentence with probability `rate`:
// paraphrase swaps every non-entity word that has a synonym, simplify drops
// every non-entity stopword, verbose inserts one filler phrase. Deletions
// never remove tokens of a gold entity and insertions never land inside one.

#ifndef NOISELAB_PERTURB_H_
#define NOISELAB_PERTURB_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "noiselab/corpus.h"

namespace noiselab {

enum class PerturbLevel { kCharacter, kWord, kSentence };

enum class PerturbOp {
  kCharInsert,
  kCharDelete,
  kCharSubstitute,
  kWordDelete,
  kWordInsert,
  kWordHomophone,
  kSentParaphrase,
  kSentSimplify,
  kSentVerbose,
};

std::string_view op_name(PerturbOp op);
PerturbOp parse_op(std::string_view name);  // throws ConfigError
PerturbLevel op_level(PerturbOp op);
NoiseFamily op_family(PerturbOp op);

struct PerturbationSpec {
  PerturbLevel level = PerturbLevel::kCharacter;
  PerturbOp op = PerturbOp::kCharSubstitute;
  double rate = 0.0;  // per eligible unit, in [0, 1]
  std::uint64_t seed = 0;

  static PerturbationSpec make(PerturbOp op, double rate, std::uint64_t seed);
  // "op:rate" or "op:rate:seed"; `default_seed` fills a missing seed.
  static PerturbationSpec parse(std::string_view text, std::uint64_t default_seed);
  std::string to_string() const;
  void validate() const;  // throws ConfigError

  bool operator==(const PerturbationSpec&) const = default;
};

struct Lexicons {
  std::map<std::string, std::vector<std::string>> homophones;
  std::map<std::string, std::vector<std::string>> synonyms;  // values may be multi-word
  std::vector<std::vector<std::string>> fillers;              // tokenized phrases
  std::vector<std::string> stopwords;                         // sorted, unique
  std::map<char, std::string> keyboard;                       // char -> neighbours

  // Lowercase entries, no self-replacement, single-token homophones.
  void validate() const;  // throws ValidationError
  bool is_stopword(std::string_view word) const;

  // Word list: "word<TAB>r1,r2". Phrase/word lists: one entry per line.
  static std::map<std::string, std::vector<std::string>> read_map(
      const std::filesystem::path& path);
  static std::vector<std::string> read_list(const std::filesystem::path& path);
  static std::map<char, std::string> read_keyboard(const std::filesystem::path& path);
};

struct LexiconPaths {
  std::filesystem::path homophones, synonyms, fillers, stopwords, keyboard;
};
Lexicons load_lexicons(const LexiconPaths& paths);

struct TokenEdit {
  enum class Kind { kKeep, kDelete, kInsert, kSubstitute };
  Kind kind = Kind::kKeep;
  std::string token;  // for insert / substitute

  static TokenEdit keep() { return {Kind::kKeep, {}}; }
  static TokenEdit del() { return {Kind::kDelete, {}}; }
  static TokenEdit insert(std::string t) { return {Kind::kInsert, std::move(t)}; }
  static TokenEdit substitute(std::string t) { return {Kind::kSubstitute, std::move(t)}; }
  bool consumes() const { return kind != Kind::kInsert; }
};
using EditScript = std::vector<TokenEdit>;

// Tags for the edited token sequence: kept/substituted tokens keep their tag,
// inserted tokens get O, and an I-X left without a B-X/I-X predecessor is
// promoted to B-X. Throws ContractError if the script does not consume
// exactly original.size() tokens.
std::vector<std::string> realign_tags(const std::vector<std::string>& original,
                                      const EditScript& script);
std::vector<std::string> apply_script_tokens(const std::vector<std::string>& original,
                                             const EditScript& script);

// Character primitives (byte positions, 0-based).
std::string delete_char_at(std::string_view token, std::size_t pos);
std::string insert_char_at(std::string_view token, std::size_t pos, char c);
std::string substitute_char_at(std::string_view token, std::size_t pos, char c);

struct PerturbResult {
  Sentence sentence;
  EditScript script;
  std::size_t units_changed = 0;
};

PerturbResult apply_with_script(const PerturbationSpec& spec, const Sentence& sentence,
                                const Lexicons& lexicons);
Sentence apply(const PerturbationSpec& spec, const Sentence& sentence,
               const Lexicons& lexicons);
// Left-to-right fold of apply. A chain touching more than one family gets a
// mixed provenance listing the distinct families in first-use order.
Sentence compose(const std::vector<PerturbationSpec>& specs, const Sentence& sentence,
                 const Lexicons& lexicons);

Corpus perturb_corpus(const std::vector<PerturbationSpec>& specs, const Corpus& corpus,
                      const Lexicons& lexicons);

// Ordered name -> chain. "clean" is reserved.
using SuitePlan = std::vector<std::pair<std::string, std::vector<PerturbationSpec>>>;

// One perturbed copy per plan entry plus the untouched "clean" suite.
std::map<std::string, Corpus> build_suite(const Corpus& corpus, const SuitePlan& plan,
                                          const Lexicons& lexicons);

// Augmented training copy aligned 1:1 with `corpus`: sentence i is perturbed by
// one chain drawn from `chains` with a stream keyed by (seed, sentence hash).
Corpus augment_corpus(const Corpus& corpus, const SuitePlan& chains, const Lexicons& lexicons,
                      std::uint64_t seed);

void write_suites(const std::map<std::string, Corpus>& suites,
                  const std::filesystem::path& dir);
std::map<std::string, Corpus> read_suites(const std::filesystem::path& dir);

}  // namespace noiselab

#endif  // NOISELAB_PERTURB_H_
