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

#include "noiselab/perturb.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

#include "noiselab/errors.h"
#include "noiselab/rng.h"

namespace noiselab {

namespace {

struct OpInfo {
  PerturbOp op;
  std::string_view name;
  PerturbLevel level;
  NoiseFamily family;
};

constexpr OpInfo kOps[] = {
    {PerturbOp::kCharInsert, "char_insert", PerturbLevel::kCharacter, NoiseFamily::kTypos},
    {PerturbOp::kCharDelete, "char_delete", PerturbLevel::kCharacter, NoiseFamily::kTypos},
    {PerturbOp::kCharSubstitute, "char_substitute", PerturbLevel::kCharacter, NoiseFamily::kTypos},
    {PerturbOp::kWordDelete, "word_delete", PerturbLevel::kWord, NoiseFamily::kSpeech},
    {PerturbOp::kWordInsert, "word_insert", PerturbLevel::kWord, NoiseFamily::kSpeech},
    {PerturbOp::kWordHomophone, "word_homophone", PerturbLevel::kWord, NoiseFamily::kSpeech},
    {PerturbOp::kSentParaphrase, "sent_paraphrase", PerturbLevel::kSentence, NoiseFamily::kParaphrase},
    {PerturbOp::kSentSimplify, "sent_simplify", PerturbLevel::kSentence, NoiseFamily::kSimplification},
    {PerturbOp::kSentVerbose, "sent_verbose", PerturbLevel::kSentence, NoiseFamily::kVerbose},
};

const OpInfo& info(PerturbOp op) { return kOps[static_cast<int>(op)]; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::vector<std::string> split_on(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t next = s.find(sep, pos);
    if (next == std::string_view::npos) next = s.size();
    out.emplace_back(trim(s.substr(pos, next - pos)));
    pos = next + 1;
  }
  return out;
}

std::vector<std::string> lines_of(const std::filesystem::path& path) {
  std::vector<std::string> out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

bool is_lower(std::string_view s) { return to_lower(s) == s; }

char random_letter(Rng& rng, char avoid) {
  char c;
  do {
    c = static_cast<char>('a' + rng.uniform_index(26));
  } while (c == avoid);
  return c;
}

// A keyboard neighbour of `c`, or a random letter when the table has none.
char neighbour(const Lexicons& lex, char c, Rng& rng) {
  auto it = lex.keyboard.find(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (it != lex.keyboard.end() && !it->second.empty()) {
    return it->second[rng.uniform_index(it->second.size())];
  }
  return random_letter(rng, c);
}

// Gap g sits before token g; it is inside an entity iff token g continues one.
bool gap_inside_entity(const std::vector<std::string>& tags, std::size_t g) {
  return g > 0 && g < tags.size() && is_inside(tags[g]);
}

// Reverts the last deletion if the script would delete every token.
void keep_one(EditScript& script) {
  bool any_left = false;
  for (const auto& e : script) {
    if (e.kind != TokenEdit::Kind::kDelete) any_left = true;
  }
  if (any_left) return;
  for (auto it = script.rbegin(); it != script.rend(); ++it) {
    if (it->kind == TokenEdit::Kind::kDelete) {
      *it = TokenEdit::keep();
      return;
    }
  }
}

}  // namespace

std::string_view op_name(PerturbOp op) { return info(op).name; }
PerturbLevel op_level(PerturbOp op) { return info(op).level; }
NoiseFamily op_family(PerturbOp op) { return info(op).family; }

PerturbOp parse_op(std::string_view name) {
  for (const auto& o : kOps) {
    if (o.name == name) return o.op;
  }
  throw ConfigError("unknown perturbation op '" + std::string(name) + "'");
}

PerturbationSpec PerturbationSpec::make(PerturbOp op, double rate, std::uint64_t seed) {
  PerturbationSpec spec{op_level(op), op, rate, seed};
  spec.validate();
  return spec;
}

PerturbationSpec PerturbationSpec::parse(std::string_view text, std::uint64_t default_seed) {
  const auto parts = split_on(trim(text), ':');
  if (parts.size() < 2 || parts.size() > 3) {
    throw ConfigError("perturbation spec '" + std::string(text) + "' must be op:rate[:seed]");
  }
  double rate = 0.0;
  auto [p, ec] = std::from_chars(parts[1].data(), parts[1].data() + parts[1].size(), rate);
  if (ec != std::errc() || p != parts[1].data() + parts[1].size()) {
    throw ConfigError("bad rate in perturbation spec '" + std::string(text) + "'");
  }
  std::uint64_t seed = default_seed;
  if (parts.size() == 3) {
    auto [q, ec2] = std::from_chars(parts[2].data(), parts[2].data() + parts[2].size(), seed);
    if (ec2 != std::errc() || q != parts[2].data() + parts[2].size()) {
      throw ConfigError("bad seed in perturbation spec '" + std::string(text) + "'");
    }
  }
  return make(parse_op(parts[0]), rate, seed);
}

std::string PerturbationSpec::to_string() const {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, rate);
  (void)ec;
  return std::string(op_name(op)) + ":" + std::string(buf, p) + ":" + std::to_string(seed);
}

void PerturbationSpec::validate() const {
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw ConfigError("perturbation rate must lie in [0,1], got " + std::to_string(rate));
  }
  if (op_level(op) != level) {
    throw ConfigError("op " + std::string(op_name(op)) + " does not belong to the given level");
  }
}

// ---- lexicons ---------------------------------------------------------------

bool Lexicons::is_stopword(std::string_view word) const {
  return std::binary_search(stopwords.begin(), stopwords.end(), to_lower(word));
}

void Lexicons::validate() const {
  auto check_map = [](const auto& map, const char* what, bool single_token) {
    for (const auto& [word, reps] : map) {
      if (!is_lower(word)) throw ValidationError(std::string(what) + " entry '" + word + "' is not lowercase");
      for (const auto& r : reps) {
        if (r.empty() || !is_lower(r)) {
          throw ValidationError(std::string(what) + " replacement '" + r + "' is empty or not lowercase");
        }
        if (r == word) throw ValidationError(std::string(what) + " maps '" + word + "' to itself");
        if (single_token && split_ws(r).size() != 1) {
          throw ValidationError(std::string(what) + " replacement '" + r + "' must be one token");
        }
      }
    }
  };
  check_map(homophones, "homophone", true);
  check_map(synonyms, "synonym", false);
  for (const auto& w : stopwords) {
    if (!is_lower(w)) throw ValidationError("stopword '" + w + "' is not lowercase");
  }
  if (!std::is_sorted(stopwords.begin(), stopwords.end())) {
    throw ValidationError("stopword list must be sorted");
  }
  for (const auto& f : fillers) {
    if (f.empty()) throw ValidationError("empty filler phrase");
    for (const auto& t : f) {
      if (!is_lower(t)) throw ValidationError("filler token '" + t + "' is not lowercase");
    }
  }
}

std::map<std::string, std::vector<std::string>> Lexicons::read_map(
    const std::filesystem::path& path) {
  std::map<std::string, std::vector<std::string>> map;
  const auto lines = lines_of(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view line = trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw ParseError(static_cast<int>(i) + 1, "expected word<TAB>replacements");
    }
    std::string word(trim(line.substr(0, tab)));
    for (auto& r : split_on(line.substr(tab + 1), ',')) {
      if (!r.empty()) map[word].push_back(std::move(r));
    }
  }
  return map;
}

std::vector<std::string> Lexicons::read_list(const std::filesystem::path& path) {
  std::vector<std::string> out;
  for (const auto& l : lines_of(path)) {
    std::string_view line = trim(l);
    if (line.empty() || line.front() == '#') continue;
    out.emplace_back(line);
  }
  return out;
}

std::map<char, std::string> Lexicons::read_keyboard(const std::filesystem::path& path) {
  std::map<char, std::string> table;
  const auto lines = lines_of(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view line = trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    const std::size_t tab = line.find('\t');
    if (tab != 1) throw ParseError(static_cast<int>(i) + 1, "expected char<TAB>neighbours");
    table[line[0]] = std::string(trim(line.substr(tab + 1)));
  }
  return table;
}

Lexicons load_lexicons(const LexiconPaths& paths) {
  Lexicons lex;
  lex.homophones = Lexicons::read_map(paths.homophones);
  lex.synonyms = Lexicons::read_map(paths.synonyms);
  for (const auto& phrase : Lexicons::read_list(paths.fillers)) {
    lex.fillers.push_back(split_ws(phrase));
  }
  lex.stopwords = Lexicons::read_list(paths.stopwords);
  std::sort(lex.stopwords.begin(), lex.stopwords.end());
  lex.stopwords.erase(std::unique(lex.stopwords.begin(), lex.stopwords.end()),
                      lex.stopwords.end());
  lex.keyboard = Lexicons::read_keyboard(paths.keyboard);
  lex.validate();
  return lex;
}

// ---- edit scripts -----------------------------------------------------------

std::vector<std::string> realign_tags(const std::vector<std::string>& original,
                                      const EditScript& script) {
  std::vector<std::string> out;
  std::size_t src = 0;
  for (const auto& e : script) {
    if (e.consumes() && src >= original.size()) {
      throw ContractError("edit script consumes more tokens than the original has");
    }
    switch (e.kind) {
      case TokenEdit::Kind::kKeep:
      case TokenEdit::Kind::kSubstitute:
        out.push_back(original[src++]);
        break;
      case TokenEdit::Kind::kDelete:
        ++src;
        break;
      case TokenEdit::Kind::kInsert:
        out.emplace_back("O");
        break;
    }
  }
  if (src != original.size()) {
    throw ContractError("edit script consumes " + std::to_string(src) + " of " +
                        std::to_string(original.size()) + " tokens");
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!is_inside(out[i])) continue;
    const std::string type = tag_type(out[i]);
    if (i == 0 || out[i - 1] == "O" || tag_type(out[i - 1]) != type) out[i] = "B-" + type;
  }
  return out;
}

std::vector<std::string> apply_script_tokens(const std::vector<std::string>& original,
                                             const EditScript& script) {
  std::vector<std::string> out;
  std::size_t src = 0;
  for (const auto& e : script) {
    if (e.consumes() && src >= original.size()) {
      throw ContractError("edit script consumes more tokens than the original has");
    }
    switch (e.kind) {
      case TokenEdit::Kind::kKeep:
        out.push_back(original[src++]);
        break;
      case TokenEdit::Kind::kSubstitute:
        out.push_back(e.token);
        ++src;
        break;
      case TokenEdit::Kind::kDelete:
        ++src;
        break;
      case TokenEdit::Kind::kInsert:
        out.push_back(e.token);
        break;
    }
  }
  if (src != original.size()) throw ContractError("edit script length mismatch");
  return out;
}

std::string delete_char_at(std::string_view token, std::size_t pos) {
  std::string s(token);
  s.erase(pos, 1);
  return s;
}

std::string insert_char_at(std::string_view token, std::size_t pos, char c) {
  std::string s(token);
  s.insert(s.begin() + static_cast<std::ptrdiff_t>(pos), c);
  return s;
}

std::string substitute_char_at(std::string_view token, std::size_t pos, char c) {
  std::string s(token);
  s[pos] = c;
  return s;
}

// ---- operators --------------------------------------------------------------

PerturbResult apply_with_script(const PerturbationSpec& spec, const Sentence& sentence,
                                const Lexicons& lex) {
  spec.validate();
  PerturbResult result;
  const std::size_t n = sentence.size();
  if (spec.rate == 0.0) {
    result.sentence = sentence;
    result.script.assign(n, TokenEdit::keep());
    return result;
  }

  if (n == 0) {
    result.sentence = sentence;
    result.sentence.noisiness = 1;
    result.sentence.provenance = Provenance{op_family(spec.op), {}};
    return result;
  }

  const auto& toks = sentence.tokens;
  const auto& tags = sentence.tags;
  Rng rng(spec.seed, op_name(spec.op), sentence_hash(sentence));
  EditScript script;
  std::size_t changed = 0;

  switch (spec.op) {
    case PerturbOp::kCharInsert:
    case PerturbOp::kCharDelete:
    case PerturbOp::kCharSubstitute:
      for (std::size_t i = 0; i < n; ++i) {
        const std::string& t = toks[i];
        if (t.size() < 2 || !rng.bernoulli(spec.rate)) {
          script.push_back(TokenEdit::keep());
          continue;
        }
        std::string edited;
        if (spec.op == PerturbOp::kCharDelete) {
          edited = delete_char_at(t, rng.uniform_index(t.size()));
        } else if (spec.op == PerturbOp::kCharInsert) {
          const std::size_t pos = rng.uniform_index(t.size() + 1);
          edited = insert_char_at(t, pos, neighbour(lex, t[std::min(pos, t.size() - 1)], rng));
        } else {
          const std::size_t pos = rng.uniform_index(t.size());
          char c = neighbour(lex, t[pos], rng);
          if (c == t[pos]) c = random_letter(rng, t[pos]);
          edited = substitute_char_at(t, pos, c);
        }
        script.push_back(TokenEdit::substitute(std::move(edited)));
        ++changed;
      }
      break;

    case PerturbOp::kWordHomophone:
      for (std::size_t i = 0; i < n; ++i) {
        auto it = lex.homophones.find(to_lower(toks[i]));
        if (it == lex.homophones.end() || it->second.empty() || !rng.bernoulli(spec.rate)) {
          script.push_back(TokenEdit::keep());
          continue;
        }
        script.push_back(TokenEdit::substitute(it->second[rng.uniform_index(it->second.size())]));
        ++changed;
      }
      break;

    case PerturbOp::kWordDelete:
      for (std::size_t i = 0; i < n; ++i) {
        if (tags[i] == "O" && rng.bernoulli(spec.rate)) {
          script.push_back(TokenEdit::del());
        } else {
          script.push_back(TokenEdit::keep());
        }
      }
      keep_one(script);
      break;

    case PerturbOp::kWordInsert:
      for (std::size_t g = 0; g <= n; ++g) {
        if (!lex.stopwords.empty() && !gap_inside_entity(tags, g) && rng.bernoulli(spec.rate)) {
          script.push_back(TokenEdit::insert(lex.stopwords[rng.uniform_index(lex.stopwords.size())]));
          ++changed;
        }
        if (g < n) script.push_back(TokenEdit::keep());
      }
      break;

    case PerturbOp::kSentParaphrase: {
      const bool fire = rng.bernoulli(spec.rate);
      for (std::size_t i = 0; i < n; ++i) {
        auto it = lex.synonyms.find(to_lower(toks[i]));
        if (!fire || tags[i] != "O" || it == lex.synonyms.end() || it->second.empty()) {
          script.push_back(TokenEdit::keep());
          continue;
        }
        auto words = split_ws(it->second[rng.uniform_index(it->second.size())]);
        script.push_back(TokenEdit::substitute(words[0]));
        for (std::size_t w = 1; w < words.size(); ++w) script.push_back(TokenEdit::insert(words[w]));
        ++changed;
      }
      break;
    }

    case PerturbOp::kSentSimplify: {
      const bool fire = rng.bernoulli(spec.rate);
      for (std::size_t i = 0; i < n; ++i) {
        if (fire && tags[i] == "O" && lex.is_stopword(toks[i])) {
          script.push_back(TokenEdit::del());
        } else {
          script.push_back(TokenEdit::keep());
        }
      }
      keep_one(script);
      break;
    }

    case PerturbOp::kSentVerbose: {
      std::vector<std::size_t> gaps;
      for (std::size_t g = 0; g <= n; ++g) {
        if (!gap_inside_entity(tags, g)) gaps.push_back(g);
      }
      const bool fire = rng.bernoulli(spec.rate) && !lex.fillers.empty() && n > 0;
      std::size_t at = n + 1;
      const std::vector<std::string>* phrase = nullptr;
      if (fire) {
        phrase = &lex.fillers[rng.uniform_index(lex.fillers.size())];
        at = gaps[rng.uniform_index(gaps.size())];
        ++changed;
      }
      for (std::size_t g = 0; g <= n; ++g) {
        if (g == at) {
          for (const auto& w : *phrase) script.push_back(TokenEdit::insert(w));
        }
        if (g < n) script.push_back(TokenEdit::keep());
      }
      break;
    }
  }
  for (const auto& e : script) {
    if (e.kind == TokenEdit::Kind::kDelete) ++changed;
  }

  result.sentence.tokens = apply_script_tokens(toks, script);
  result.sentence.tags = realign_tags(tags, script);
  result.sentence.noisiness = 1;
  result.sentence.provenance = Provenance{op_family(spec.op), {}};
  result.script = std::move(script);
  result.units_changed = changed;
  return result;
}

Sentence apply(const PerturbationSpec& spec, const Sentence& sentence, const Lexicons& lex) {
  return apply_with_script(spec, sentence, lex).sentence;
}

Sentence compose(const std::vector<PerturbationSpec>& specs, const Sentence& sentence,
                 const Lexicons& lex) {
  if (specs.empty()) throw ContractError("compose: empty perturbation chain");
  Sentence current = sentence;
  std::vector<NoiseFamily> families;
  for (const auto& spec : specs) {
    current = apply(spec, current, lex);
    if (spec.rate > 0.0 &&
        std::find(families.begin(), families.end(), op_family(spec.op)) == families.end()) {
      families.push_back(op_family(spec.op));
    }
  }
  if (families.empty()) return current;
  current.noisiness = 1;
  current.provenance = families.size() == 1 ? Provenance{families[0], {}}
                                            : Provenance{NoiseFamily::kClean, families};
  return current;
}

Corpus perturb_corpus(const std::vector<PerturbationSpec>& specs, const Corpus& corpus,
                      const Lexicons& lex) {
  Corpus out;
  out.split = corpus.split;
  out.slot_types = corpus.slot_types;
  out.sentences.reserve(corpus.size());
  for (const auto& s : corpus.sentences) out.sentences.push_back(compose(specs, s, lex));
  return out;
}

std::map<std::string, Corpus> build_suite(const Corpus& corpus, const SuitePlan& plan,
                                          const Lexicons& lex) {
  std::map<std::string, Corpus> suites;
  suites["clean"] = corpus;
  for (const auto& [name, chain] : plan) {
    if (name == "clean") throw ConfigError("suite name 'clean' is reserved");
    if (suites.contains(name)) throw ConfigError("duplicate suite name '" + name + "'");
    suites[name] = perturb_corpus(chain, corpus, lex);
  }
  return suites;
}

Corpus augment_corpus(const Corpus& corpus, const SuitePlan& chains, const Lexicons& lex,
                      std::uint64_t seed) {
  if (chains.empty()) throw ConfigError("augmentation needs at least one chain");
  Corpus out;
  out.split = corpus.split;
  out.slot_types = corpus.slot_types;
  for (const auto& s : corpus.sentences) {
    Rng rng(seed, "augment-choice", sentence_hash(s));
    out.sentences.push_back(compose(chains[rng.uniform_index(chains.size())].second, s, lex));
  }
  return out;
}

void write_suites(const std::map<std::string, Corpus>& suites, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, corpus] : suites) write_conll(corpus, dir / (name + ".conll"));
}

std::map<std::string, Corpus> read_suites(const std::filesystem::path& dir) {
  std::map<std::string, Corpus> suites;
  if (!std::filesystem::is_directory(dir)) throw IoError("no suite directory '" + dir.string() + "'");
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".conll") continue;
    suites[entry.path().stem().string()] = read_conll(entry.path(), Split::kTest);
  }
  return suites;
}

}  // namespace noiselab
