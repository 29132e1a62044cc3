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

// Shared fixtures and independent oracles for the test binaries.

#ifndef NOISELAB_TESTS_TEST_UTIL_H_
#define NOISELAB_TESTS_TEST_UTIL_H_

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "noiselab/corpus.h"
#include "noiselab/perturb.h"
#include "noiselab/rng.h"

namespace noiselab::testing {

// Small in-memory lexicons covering every op.
inline Lexicons toy_lexicons() {
  Lexicons lex;
  lex.homophones = {{"to", {"two", "too"}}, {"for", {"four"}}, {"new", {"knew"}},
                    {"rome", {"roam"}}, {"see", {"sea"}}};
  lex.synonyms = {{"book", {"reserve"}}, {"find", {"look for"}}, {"flight", {"plane ticket"}},
                  {"show", {"display"}}};
  lex.fillers = {{"um", "please"}, {"like"}, {"you", "know"}};
  lex.stopwords = {"a", "me", "the", "to"};
  lex.keyboard = {{'a', "qs"}, {'e', "wr"}, {'o', "ip"}, {'t', "ry"}};
  return lex;
}

// Random well-formed sentence drawn from a mix of lexicon words and fresh
// tokens, with zero or more entity spans.
inline Sentence random_sentence(Rng& rng) {
  static const std::vector<std::string> words{"book", "a",    "flight", "to",   "new",
                                              "york", "rome", "show",   "me",   "the",
                                              "find", "see",  "for",    "x",    "weather"};
  static const std::vector<std::string> types{"city", "date", "song"};
  Sentence s;
  const std::size_t n = rng.uniform_index(12);
  while (s.tokens.size() < n) {
    if (rng.bernoulli(0.3)) {
      const std::string& type = types[rng.uniform_index(types.size())];
      const std::size_t len = 1 + rng.uniform_index(3);
      for (std::size_t i = 0; i < len; ++i) {
        s.tokens.push_back(words[rng.uniform_index(words.size())]);
        s.tags.push_back((i == 0 ? "B-" : "I-") + type);
      }
    } else {
      s.tokens.push_back(words[rng.uniform_index(words.size())]);
      s.tags.push_back("O");
    }
  }
  return s;
}

// Every gold span whose tokens survive with no insertion inside it must come
// out as an identical-label span at the mapped position. Returns "" or a
// description of the first violation.
inline std::string check_supervision(const Sentence& before, const Sentence& after,
                                     const EditScript& script) {
  std::vector<long> out_index(before.size(), -1);
  std::vector<bool> insert_before(before.size() + 1, false);
  std::size_t src = 0, dst = 0;
  for (const auto& e : script) {
    switch (e.kind) {
      case TokenEdit::Kind::kKeep:
      case TokenEdit::Kind::kSubstitute:
        out_index[src++] = static_cast<long>(dst++);
        break;
      case TokenEdit::Kind::kDelete:
        ++src;
        break;
      case TokenEdit::Kind::kInsert:
        insert_before[src] = true;
        ++dst;
        break;
    }
  }
  if (src != before.size() || dst != after.size()) return "script does not match sentences";
  const auto out_spans = extract_spans(after.tags);
  for (const auto& span : extract_spans(before.tags)) {
    bool intact = true;
    for (std::size_t t = span.start; t < span.end; ++t) {
      if (out_index[t] < 0) intact = false;
      if (t > span.start && insert_before[t]) intact = false;
    }
    if (!intact) continue;
    SlotSpan mapped{static_cast<std::size_t>(out_index[span.start]),
                    static_cast<std::size_t>(out_index[span.end - 1]) + 1, span.label};
    if (std::find(out_spans.begin(), out_spans.end(), mapped) == out_spans.end()) {
      return "span " + span.label + "@" + std::to_string(span.start) + " lost";
    }
  }
  return "";
}

// Exact-match span F1 by enumerating every (gold, pred) pair. Span lists
// must not repeat a span.
struct OracleScore {
  double p = 0.0, r = 0.0, f1 = 0.0;
};

inline OracleScore brute_force_f1(const std::vector<std::vector<SlotSpan>>& gold,
                                  const std::vector<std::vector<SlotSpan>>& pred) {
  double g = 0, p = 0, c = 0;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    g += static_cast<double>(gold[s].size());
    p += static_cast<double>(pred[s].size());
    for (std::size_t i = 0; i < pred[s].size(); ++i) {
      for (const auto& gs : gold[s]) {
        if (gs.start == pred[s][i].start && gs.end == pred[s][i].end &&
            gs.label == pred[s][i].label) {
          c += 1;
          break;
        }
      }
    }
  }
  OracleScore o;
  o.p = p > 0 ? c / p : 0.0;
  o.r = g > 0 ? c / g : 0.0;
  o.f1 = o.p + o.r > 0 ? 2 * o.p * o.r / (o.p + o.r) : 0.0;
  return o;
}

}  // namespace noiselab::testing

#endif  // NOISELAB_TESTS_TEST_UTIL_H_
