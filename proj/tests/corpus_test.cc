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
#include <vector>

#include <gtest/gtest.h>

#include "noiselab/corpus.h"
#include "noiselab/errors.h"
#include "noiselab/rng.h"

namespace noiselab {
namespace {

namespace fs = std::filesystem;

fs::path temp_path(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "noiselab_corpus_test";
  fs::create_directories(dir);
  return dir / name;
}

TEST(CorpusTest, ParsesSimpleFile) {
  Corpus c = parse_conll("book\tO\nparis\tB-city\n\n");
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.sentences[0].tokens, (std::vector<std::string>{"book", "paris"}));
  EXPECT_EQ(c.sentences[0].tags, (std::vector<std::string>{"O", "B-city"}));
  EXPECT_EQ(c.sentences[0].noisiness, 0);
  EXPECT_TRUE(c.sentences[0].provenance.is_clean());
}

TEST(CorpusTest, EmptyFileHasNoSentences) { EXPECT_EQ(parse_conll("").size(), 0u); }

TEST(CorpusTest, MissingTabReportsLine) {
  try {
    parse_conll("paris\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1);
  }
}

TEST(CorpusTest, OrphanInsideIsValidationErrorWithIndex) {
  try {
    parse_conll("a\tO\n\nb\tO\nc\tI-city\n");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("sentence 1"), std::string::npos) << e.what();
  }
}

TEST(CorpusTest, WriteReadRoundTrip) {
  Corpus c;
  Sentence a{{"fly", "to", "new", "york"}, {"O", "O", "B-city", "I-city"}, 0, {}};
  Sentence b{{"fyl", "to", "rome"}, {"O", "O", "B-city"}, 1, Provenance{NoiseFamily::kTypos, {}}};
  Sentence m{{"x"}, {"O"}, 1, Provenance{NoiseFamily::kClean, {NoiseFamily::kTypos, NoiseFamily::kSpeech}}};
  c.sentences = {a, b, m};
  c.slot_types = {"city"};
  const fs::path p = temp_path("round.conll");
  write_conll(c, p);
  Corpus back = read_conll(p);
  EXPECT_EQ(back.sentences, c.sentences);
  const std::string text = read_file(p);
  EXPECT_NE(text.find("# noisiness=1 provenance=typos"), std::string::npos);
  EXPECT_NE(text.find("provenance=mixed:typos+speech"), std::string::npos);
}

TEST(CorpusTest, OneBlankLineBetweenSentences) {
  Corpus c;
  c.sentences = {Sentence{{"a"}, {"O"}, 0, {}}, Sentence{{"b"}, {"O"}, 0, {}}};
  const std::string text = format_conll(c);
  EXPECT_EQ(text.find("\n\n\n"), std::string::npos);
  std::size_t blanks = 0;
  for (std::size_t i = 1; i < text.size(); ++i) blanks += text[i] == '\n' && text[i - 1] == '\n';
  EXPECT_EQ(blanks, 1u);
}

TEST(CorpusTest, UnwritablePathIsIoError) {
  Corpus c;
  EXPECT_THROW(write_conll(c, "/nonexistent_dir_for_noiselab/x.conll"), IoError);
}

TEST(CorpusTest, GeneratesTemplateExpansion) {
  TemplateBank templates{"book a flight to {city}"};
  ValueBank values{{"city", {"new york"}}};
  Corpus c = generate_synthetic(1, templates, values, 9);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.sentences[0].tokens, (std::vector<std::string>{"book", "a", "flight", "to", "new", "york"}));
  EXPECT_EQ(c.sentences[0].tags, (std::vector<std::string>{"O", "O", "O", "O", "B-city", "I-city"}));
}

TEST(CorpusTest, GeneratorIsDeterministicAndHandlesZero) {
  TemplateBank templates{"play {song} by {artist}", "wake me at {time}"};
  ValueBank values{{"song", {"let it be", "help"}}, {"artist", {"queen", "the beatles"}}, {"time", {"noon"}}};
  EXPECT_EQ(generate_synthetic(0, templates, values, 1).size(), 0u);
  EXPECT_EQ(generate_synthetic(50, templates, values, 3), generate_synthetic(50, templates, values, 3));
  EXPECT_NE(generate_synthetic(50, templates, values, 3), generate_synthetic(50, templates, values, 4));
}

TEST(CorpusTest, UnknownPlaceholderIsConfigError) {
  EXPECT_THROW(generate_synthetic(1, {"go to {place}"}, {{"city", {"rome"}}}, 1), ConfigError);
}

TEST(CorpusTest, VocabThreshold) {
  Corpus c;
  c.sentences = {Sentence{{"a", "a", "b"}, {"O", "O", "O"}, 0, {}}};
  Vocab v = build_vocab(c, 2);
  EXPECT_TRUE(v.contains("a"));
  EXPECT_FALSE(v.contains("b"));
  EXPECT_EQ(v.id("b"), Vocab::kUnk);
  Vocab all = build_vocab(c, 1);
  EXPECT_EQ(all.size(), 2u + Vocab::kNumReserved);
  EXPECT_EQ(build_vocab(Corpus{}, 1).size(), static_cast<std::size_t>(Vocab::kNumReserved));
}

TEST(CorpusTest, VocabIsLowercaseAndReservedIdsAreStable) {
  Corpus c;
  c.sentences = {Sentence{{"Paris", "paris"}, {"B-city", "B-city"}, 0, {}}};
  Vocab v = build_vocab(c, 1);
  EXPECT_EQ(v.token(Vocab::kPad), "[PAD]");
  EXPECT_EQ(v.token(Vocab::kUnk), "[UNK]");
  EXPECT_EQ(v.token(Vocab::kMask), "[MASK]");
  EXPECT_EQ(v.token(Vocab::kCls), "[CLS]");
  EXPECT_EQ(v.id("PARIS"), v.id("paris"));
  const fs::path p = temp_path("vocab.txt");
  v.save(p);
  EXPECT_EQ(Vocab::load(p), v);
}

TEST(CorpusTest, ExtractSpansExamples) {
  EXPECT_EQ(extract_spans(std::vector<std::string>{"O", "B-city", "I-city", "O"}),
            (std::vector<SlotSpan>{{1, 3, "city"}}));
  EXPECT_EQ(extract_spans(std::vector<std::string>{"B-a", "B-b"}),
            (std::vector<SlotSpan>{{0, 1, "a"}, {1, 2, "b"}}));
  EXPECT_TRUE(extract_spans(std::vector<std::string>{"O", "O"}).empty());
  EXPECT_THROW(extract_spans(std::vector<std::string>{"O", "I-a"}), ValidationError);
}

TEST(CorpusTest, SpanTagRoundTripOnRandomSequences) {
  const std::vector<std::string> types{"a", "b", "c"};
  for (std::uint64_t i = 0; i < 10000; ++i) {
    Rng rng(17, "bio", i);
    const std::size_t n = rng.uniform_index(12);
    std::vector<std::string> tags;
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t pick = rng.uniform_index(7);
      if (pick == 0 || (pick >= 4 && (tags.empty() || tags.back() == "O"))) {
        tags.push_back("O");
      } else if (pick <= 3) {
        tags.push_back("B-" + types[pick - 1]);
      } else {
        tags.push_back("I-" + tag_type(tags.back()));
      }
    }
    ASSERT_TRUE(is_well_formed_bio(tags));
    ASSERT_EQ(spans_to_tags(extract_spans(tags), n), tags);
  }
}

TEST(CorpusTest, TagSetOrderAndRoundTrip) {
  TagSet t({"city", "date"});
  EXPECT_EQ(t.tags(), (std::vector<std::string>{"O", "B-city", "I-city", "B-date", "I-date"}));
  EXPECT_THROW(t.id("B-time"), ValidationError);
  const fs::path p = temp_path("tags.txt");
  t.save(p);
  EXPECT_EQ(TagSet::load(p).tags(), t.tags());
}

TEST(CorpusTest, BatchesCoverOrder) {
  std::vector<std::size_t> order{4, 2, 0, 1, 3};
  auto b = make_batches(order, 2);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[2], (std::vector<std::size_t>{3}));
}

}  // namespace
}  // namespace noiselab
