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

#include "noiselab/corpus.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "noiselab/errors.h"
#include "noiselab/rng.h"

namespace noiselab {

namespace {

constexpr std::string_view kFamilyNames[] = {
    "clean", "typos", "speech", "paraphrase", "simplification", "verbose"};

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = nl + 1;
  }
  return lines;
}

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

bool valid_tag(std::string_view tag) {
  if (tag == "O") return true;
  return tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-';
}

}  // namespace

std::string_view family_name(NoiseFamily family) {
  return kFamilyNames[static_cast<int>(family)];
}

NoiseFamily parse_family(std::string_view name) {
  for (int i = 0; i < 6; ++i) {
    if (kFamilyNames[i] == name) return static_cast<NoiseFamily>(i);
  }
  throw ValidationError("unknown provenance '" + std::string(name) + "'");
}

std::string Provenance::name() const {
  if (!is_mixed()) return std::string(family_name(family));
  std::string s = "mixed:";
  for (std::size_t i = 0; i < mixed.size(); ++i) {
    if (i) s += "+";
    s += family_name(mixed[i]);
  }
  return s;
}

Provenance Provenance::parse(std::string_view name) {
  Provenance p;
  if (name.starts_with("mixed:")) {
    name.remove_prefix(6);
    std::size_t pos = 0;
    while (pos <= name.size()) {
      std::size_t plus = name.find('+', pos);
      if (plus == std::string_view::npos) plus = name.size();
      p.mixed.push_back(parse_family(name.substr(pos, plus - pos)));
      pos = plus + 1;
    }
    return p;
  }
  p.family = parse_family(name);
  return p;
}

std::string tag_type(std::string_view tag) {
  if (tag == "O") return {};
  if (!valid_tag(tag)) throw ValidationError("malformed tag '" + std::string(tag) + "'");
  return std::string(tag.substr(2));
}

bool is_begin(std::string_view tag) { return tag.size() > 2 && tag.starts_with("B-"); }
bool is_inside(std::string_view tag) { return tag.size() > 2 && tag.starts_with("I-"); }

bool is_well_formed_bio(const std::vector<std::string>& tags) {
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (!valid_tag(tags[i])) return false;
    if (is_inside(tags[i])) {
      if (i == 0 || tags[i - 1] == "O") return false;
      if (tag_type(tags[i - 1]) != tag_type(tags[i])) return false;
    }
  }
  return true;
}

void validate_sentence(const Sentence& s) {
  if (s.tokens.size() != s.tags.size()) {
    throw ValidationError("sentence has " + std::to_string(s.tokens.size()) +
                          " tokens but " + std::to_string(s.tags.size()) + " tags");
  }
  if (!is_well_formed_bio(s.tags)) throw ValidationError("ill-formed BIO tag sequence");
  if ((s.noisiness == 0) != s.provenance.is_clean()) {
    throw ValidationError("noisiness " + std::to_string(s.noisiness) +
                          " inconsistent with provenance " + s.provenance.name());
  }
}

std::vector<SlotSpan> extract_spans(const std::vector<std::string>& tags) {
  if (!is_well_formed_bio(tags)) throw ValidationError("ill-formed BIO tag sequence");
  std::vector<SlotSpan> spans;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (!is_begin(tags[i])) continue;
    SlotSpan span{i, i + 1, tag_type(tags[i])};
    while (span.end < tags.size() && is_inside(tags[span.end])) ++span.end;
    spans.push_back(std::move(span));
  }
  return spans;
}

std::vector<std::string> spans_to_tags(const std::vector<SlotSpan>& spans,
                                       std::size_t length) {
  std::vector<std::string> tags(length, "O");
  for (const auto& s : spans) {
    if (s.start >= s.end || s.end > length) throw ValidationError("span out of range");
    tags[s.start] = "B-" + s.label;
    for (std::size_t i = s.start + 1; i < s.end; ++i) tags[i] = "I-" + s.label;
  }
  return tags;
}

std::uint64_t sentence_hash(const Sentence& s) {
  std::string buf;
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    buf += s.tokens[i];
    buf += '\t';
    buf += s.tags[i];
    buf += '\n';
  }
  return fnv1a64(buf);
}

// ---- CoNLL ------------------------------------------------------------------

Corpus parse_conll(std::string_view text, Split split) {
  Corpus corpus;
  corpus.split = split;
  Sentence current;
  bool have_header = false;
  int header_noisiness = 0;
  Provenance header_provenance;

  auto flush = [&] {
    if (current.tokens.empty()) return;
    if (have_header) {
      current.noisiness = header_noisiness;
      current.provenance = header_provenance;
    }
    const std::size_t index = corpus.sentences.size();
    try {
      validate_sentence(current);
    } catch (const ValidationError& e) {
      throw ValidationError("sentence " + std::to_string(index) + ": " + e.what());
    }
    for (const auto& t : current.tags) {
      if (t != "O") corpus.slot_types.insert(tag_type(t));
    }
    corpus.sentences.push_back(std::move(current));
    current = Sentence{};
    have_header = false;
  };

  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const int line_no = static_cast<int>(i) + 1;
    std::string_view line = lines[i];
    if (trim(line).empty()) {
      flush();
      continue;
    }
    if (line.front() == '#') {
      const auto fields = split_ws(line.substr(1));
      if (!fields.empty() && fields[0].starts_with("noisiness=")) {
        flush();
        if (fields.size() != 2 || !fields[1].starts_with("provenance=")) {
          throw ParseError(line_no, "malformed header comment");
        }
        const std::string n = fields[0].substr(10);
        if (n != "0" && n != "1") throw ParseError(line_no, "noisiness must be 0 or 1");
        header_noisiness = n == "1" ? 1 : 0;
        try {
          header_provenance = Provenance::parse(fields[1].substr(11));
        } catch (const ValidationError& e) {
          throw ParseError(line_no, e.what());
        }
        have_header = true;
      }
      continue;
    }
    const std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos) throw ParseError(line_no, "expected token<TAB>tag");
    std::string_view token = line.substr(0, tab);
    std::string_view tag = line.substr(tab + 1);
    if (token.empty()) throw ParseError(line_no, "empty token");
    if (!valid_tag(tag)) throw ParseError(line_no, "malformed tag '" + std::string(tag) + "'");
    current.tokens.emplace_back(token);
    current.tags.emplace_back(tag);
  }
  flush();
  return corpus;
}

Corpus read_conll(const std::filesystem::path& path, Split split) {
  return parse_conll(read_file(path), split);
}

std::string format_conll(const Corpus& corpus) {
  std::string out;
  for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
    const Sentence& s = corpus.sentences[i];
    if (i) out += '\n';
    out += "# noisiness=" + std::to_string(s.noisiness) +
           " provenance=" + s.provenance.name() + "\n";
    for (std::size_t t = 0; t < s.tokens.size(); ++t) {
      out += s.tokens[t];
      out += '\t';
      out += s.tags[t];
      out += '\n';
    }
  }
  return out;
}

void write_conll(const Corpus& corpus, const std::filesystem::path& path) {
  write_file(path, format_conll(corpus));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// ---- synthetic --------------------------------------------------------------

TemplateBank read_templates(const std::filesystem::path& path) {
  TemplateBank bank;
  const std::string text = read_file(path);
  for (auto line : split_lines(text)) {
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    bank.emplace_back(line);
  }
  return bank;
}

ValueBank read_values(const std::filesystem::path& path) {
  ValueBank bank;
  const std::string text = read_file(path);
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view line = trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw ParseError(static_cast<int>(i) + 1, "expected slot<TAB>value");
    }
    std::string slot(trim(line.substr(0, tab)));
    std::string value(trim(line.substr(tab + 1)));
    if (slot.empty() || value.empty()) {
      throw ParseError(static_cast<int>(i) + 1, "empty slot or value");
    }
    bank[slot].push_back(std::move(value));
  }
  return bank;
}

Corpus generate_synthetic(std::size_t n, const TemplateBank& templates,
                          const ValueBank& values, std::uint64_t seed, Split split) {
  // Validate every placeholder up front so errors do not depend on sampling.
  std::vector<std::vector<std::string>> parsed;
  for (const auto& t : templates) {
    parsed.push_back(split_ws(t));
    for (const auto& tok : parsed.back()) {
      if (tok.size() > 2 && tok.front() == '{' && tok.back() == '}') {
        const std::string slot = tok.substr(1, tok.size() - 2);
        auto it = values.find(slot);
        if (it == values.end() || it->second.empty()) {
          throw ConfigError("template '" + t + "' uses unknown placeholder {" + slot + "}");
        }
      }
    }
  }
  Corpus corpus;
  corpus.split = split;
  for (const auto& [slot, vals] : values) corpus.slot_types.insert(slot);
  if (n > 0 && parsed.empty()) throw ConfigError("template bank is empty");

  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(seed, "synthetic", i);
    const auto& tmpl = parsed[rng.uniform_index(parsed.size())];
    Sentence s;
    for (const auto& tok : tmpl) {
      if (tok.size() > 2 && tok.front() == '{' && tok.back() == '}') {
        const std::string slot = tok.substr(1, tok.size() - 2);
        const auto& vals = values.at(slot);
        const auto words = split_ws(vals[rng.uniform_index(vals.size())]);
        for (std::size_t w = 0; w < words.size(); ++w) {
          s.tokens.push_back(words[w]);
          s.tags.push_back((w == 0 ? "B-" : "I-") + slot);
        }
      } else {
        s.tokens.push_back(tok);
        s.tags.push_back("O");
      }
    }
    corpus.sentences.push_back(std::move(s));
  }
  return corpus;
}

// ---- vocabulary -------------------------------------------------------------

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(const std::vector<std::string>& tokens)
    : tokens_{"[PAD]", "[UNK]", "[MASK]", "[CLS]"} {
  for (int i = 0; i < kNumReserved; ++i) index_[tokens_[i]] = i;
  for (const auto& t : tokens) {
    std::string lower = to_lower(t);
    if (index_.contains(lower)) continue;
    index_[lower] = static_cast<int>(tokens_.size());
    tokens_.push_back(std::move(lower));
  }
}

int Vocab::id(std::string_view token) const {
  auto it = index_.find(to_lower(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }

bool Vocab::contains(std::string_view token) const { return index_.contains(to_lower(token)); }

std::vector<int> Vocab::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::string out;
  for (const auto& t : tokens_) out += t + "\n";
  write_file(path, out);
}

Vocab Vocab::load(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const auto lines = split_lines(text);
  const std::vector<std::string> reserved{"[PAD]", "[UNK]", "[MASK]", "[CLS]"};
  if (lines.size() < reserved.size()) throw ParseError(1, "vocabulary missing reserved entries");
  for (std::size_t i = 0; i < reserved.size(); ++i) {
    if (lines[i] != reserved[i]) {
      throw ParseError(static_cast<int>(i) + 1, "expected reserved token " + reserved[i]);
    }
  }
  std::vector<std::string> rest;
  for (std::size_t i = reserved.size(); i < lines.size(); ++i) {
    if (!lines[i].empty()) rest.emplace_back(lines[i]);
  }
  return Vocab(rest);
}

Vocab build_vocab(const std::vector<const Corpus*>& corpora, std::size_t min_freq) {
  std::map<std::string, std::size_t> freq;
  for (const Corpus* c : corpora)
    for (const auto& s : c->sentences)
      for (const auto& t : s.tokens) ++freq[to_lower(t)];
  std::vector<std::string> kept;
  for (const auto& [tok, n] : freq) {
    if (n >= min_freq) kept.push_back(tok);
  }
  return Vocab(kept);
}

Vocab build_vocab(const Corpus& corpus, std::size_t min_freq) {
  return build_vocab(std::vector<const Corpus*>{&corpus}, min_freq);
}

// ---- tags -------------------------------------------------------------------

TagSet::TagSet(const std::set<std::string>& slot_types) : TagSet() {
  for (const auto& t : slot_types) {
    for (const char* prefix : {"B-", "I-"}) {
      index_[prefix + t] = static_cast<int>(tags_.size());
      tags_.push_back(prefix + t);
    }
  }
}

int TagSet::id(std::string_view tag) const {
  auto it = index_.find(std::string(tag));
  if (it == index_.end()) throw ValidationError("tag '" + std::string(tag) + "' not in tag set");
  return it->second;
}

std::vector<int> TagSet::encode(const std::vector<std::string>& tags) const {
  std::vector<int> ids;
  ids.reserve(tags.size());
  for (const auto& t : tags) ids.push_back(id(t));
  return ids;
}

void TagSet::save(const std::filesystem::path& path) const {
  std::string out;
  for (const auto& t : tags_) out += t + "\n";
  write_file(path, out);
}

TagSet TagSet::load(const std::filesystem::path& path) {
  std::set<std::string> types;
  const std::string text = read_file(path);
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty() || lines[i] == "O") continue;
    if (!valid_tag(lines[i])) throw ParseError(static_cast<int>(i) + 1, "malformed tag");
    types.insert(tag_type(lines[i]));
  }
  return TagSet(types);
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order,
                                                   std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> batches;
  if (batch_size == 0) batch_size = 1;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace noiselab
