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

#ifndef NOISELAB_CORPUS_H_
#define NOISELAB_CORPUS_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace noiselab {

// Where a sentence came from. A mixed provenance lists the perturbation
// families applied, in order.
enum class NoiseFamily { kClean, kTypos, kSpeech, kParaphrase, kSimplification, kVerbose };

std::string_view family_name(NoiseFamily family);
// Throws ValidationError on unknown names.
NoiseFamily parse_family(std::string_view name);

struct Provenance {
  NoiseFamily family = NoiseFamily::kClean;
  // Non-empty iff the provenance is mixed; then `family` is unused.
  std::vector<NoiseFamily> mixed;

  bool is_clean() const { return mixed.empty() && family == NoiseFamily::kClean; }
  bool is_mixed() const { return !mixed.empty(); }
  // "clean", "typos", ... or "mixed:typos+speech".
  std::string name() const;
  static Provenance parse(std::string_view name);

  bool operator==(const Provenance&) const = default;
};

struct Sentence {
  std::vector<std::string> tokens;
  std::vector<std::string> tags;  // BIO, same length as tokens
  int noisiness = 0;              // 0 clean, 1 perturbed
  Provenance provenance;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const Sentence&) const = default;
};

// Half-open token range [start, end) labelled with a slot type.
struct SlotSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string label;

  bool operator==(const SlotSpan&) const = default;
  auto operator<=>(const SlotSpan&) const = default;
};

enum class Split { kTrain, kDev, kTest };

struct Corpus {
  std::vector<Sentence> sentences;
  std::set<std::string> slot_types;
  Split split = Split::kTrain;

  std::size_t size() const { return sentences.size(); }
  bool operator==(const Corpus&) const = default;
};

// "O", "B-x" or "I-x"; returns the slot type for B/I tags, empty for O.
// Throws ValidationError on anything else.
std::string tag_type(std::string_view tag);
bool is_begin(std::string_view tag);
bool is_inside(std::string_view tag);

// True if every I-X follows B-X or I-X of the same type.
bool is_well_formed_bio(const std::vector<std::string>& tags);

// Checks length, BIO and noisiness/provenance consistency.
void validate_sentence(const Sentence& sentence);

// Maximal B-X (I-X)* runs, ordered by start. Throws ValidationError on
// ill-formed BIO.
std::vector<SlotSpan> extract_spans(const std::vector<std::string>& tags);
inline std::vector<SlotSpan> extract_spans(const Sentence& s) {
  return extract_spans(s.tags);
}
// Inverse of extract_spans for non-overlapping spans.
std::vector<std::string> spans_to_tags(const std::vector<SlotSpan>& spans,
                                       std::size_t length);

// Stable content hash of tokens and tags.
std::uint64_t sentence_hash(const Sentence& sentence);

// ---- CoNLL-style TSV ------------------------------------------------------
//
// One "token<TAB>tag" per line, blank line between sentences. Each sentence
// may be preceded by "# noisiness=<0|1> provenance=<name>"; other "#" lines
// are ignored.

Corpus parse_conll(std::string_view text, Split split = Split::kTrain);
Corpus read_conll(const std::filesystem::path& path, Split split = Split::kTrain);
std::string format_conll(const Corpus& corpus);
void write_conll(const Corpus& corpus, const std::filesystem::path& path);

// ---- synthetic generation ---------------------------------------------------

// Utterance templates: whitespace-separated tokens, placeholders "{slot}".
using TemplateBank = std::vector<std::string>;
// slot type -> candidate values (each value may span several tokens).
using ValueBank = std::map<std::string, std::vector<std::string>>;

TemplateBank read_templates(const std::filesystem::path& path);
// "slot<TAB>value" per line.
ValueBank read_values(const std::filesystem::path& path);

// Pure function of its arguments. Slot inventory = value bank keys.
Corpus generate_synthetic(std::size_t n, const TemplateBank& templates,
                          const ValueBank& values, std::uint64_t seed,
                          Split split = Split::kTrain);

// ---- vocabulary -------------------------------------------------------------

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kMask = 2;
  static constexpr int kCls = 3;
  static constexpr int kNumReserved = 4;

  Vocab();
  // Tokens are lowercased; each distinct one becomes an id in first-seen
  // order of the sorted list.
  explicit Vocab(const std::vector<std::string>& tokens);

  int id(std::string_view token) const;  // kUnk when absent
  const std::string& token(int id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }
  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  // One token per line, reserved entries included.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

std::string to_lower(std::string_view s);

// Lowercased tokens with frequency >= min_freq, sorted.
Vocab build_vocab(const Corpus& corpus, std::size_t min_freq);
Vocab build_vocab(const std::vector<const Corpus*>& corpora, std::size_t min_freq);

// ---- tag inventory ----------------------------------------------------------

// "O" followed by B-/I- pairs for each slot type in sorted order.
class TagSet {
 public:
  TagSet() : tags_{"O"} { index_["O"] = 0; }
  explicit TagSet(const std::set<std::string>& slot_types);

  int id(std::string_view tag) const;  // throws ValidationError if unknown
  const std::string& tag(int id) const { return tags_.at(id); }
  std::size_t size() const { return tags_.size(); }
  std::vector<int> encode(const std::vector<std::string>& tags) const;
  const std::vector<std::string>& tags() const { return tags_; }

  void save(const std::filesystem::path& path) const;
  static TagSet load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tags_;
  std::unordered_map<std::string, int> index_;
};

// Fixed-size batches over [0, n) in the given order; the last may be short.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order,
                                                   std::size_t batch_size);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace noiselab

#endif  // NOISELAB_CORPUS_H_
