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

#include "noiselab/eval.h"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "noiselab/errors.h"

namespace noiselab {

std::vector<std::string> repair_bio(std::vector<std::string> tags) {
  std::string prev_type;
  for (auto& tag : tags) {
    if (is_inside(tag) && tag_type(tag) != prev_type) tag = "B-" + tag_type(tag);
    prev_type = tag == "O" ? "" : tag_type(tag);
  }
  return tags;
}

std::vector<SlotSpan> decode_spans(const Value& tag_logits, const TagSet& tagset) {
  if (tag_logits.rank() != 2 || tag_logits.cols() != tagset.size()) {
    throw ShapeError("decode_spans: logits " + shape_string(tag_logits.shape()) + " for " +
                     std::to_string(tagset.size()) + " tags");
  }
  const std::size_t n = tag_logits.rows(), k = tag_logits.cols();
  std::vector<std::string> tags(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (tag_logits.at(i, j) > tag_logits.at(i, best)) best = j;
    }
    tags[i] = tagset.tag(static_cast<int>(best));
  }
  return extract_spans(repair_bio(std::move(tags)));
}

SpanScore span_f1(const std::vector<std::vector<SlotSpan>>& gold,
                  const std::vector<std::vector<SlotSpan>>& pred) {
  if (gold.size() != pred.size()) {
    throw ContractError("span_f1: " + std::to_string(gold.size()) + " gold vs " +
                        std::to_string(pred.size()) + " predicted sentences");
  }
  SpanScore s;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    std::set<SlotSpan> g(gold[i].begin(), gold[i].end());
    std::set<SlotSpan> p(pred[i].begin(), pred[i].end());
    s.gold += g.size();
    s.pred += p.size();
    for (const auto& span : p) s.correct += g.count(span);
  }
  s.precision = s.pred == 0 ? 0.0 : static_cast<double>(s.correct) / static_cast<double>(s.pred);
  s.recall = s.gold == 0 ? 0.0 : static_cast<double>(s.correct) / static_cast<double>(s.gold);
  const double pr = s.precision + s.recall;
  s.f1 = pr == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / pr;
  return s;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["ablation"] = {{"use_pretrained", flags.use_pretrained},
                   {"use_smp", flags.use_smp},
                   {"use_snd", flags.use_snd},
                   {"use_contrastive", flags.use_contrastive},
                   {"use_adversarial", flags.use_adversarial}};
  nlohmann::ordered_json results = nlohmann::ordered_json::object();
  for (const auto& [name, s] : suites) {
    results[name] = {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1},
                     {"gold", s.gold},           {"pred", s.pred},     {"correct", s.correct}};
  }
  results["overall"] = {{"f1", overall}};
  j["results"] = results;
  return j.dump(2) + "\n";
}

std::string EvalReport::to_table() const {
  std::size_t width = std::string("overall").size();
  for (const auto& [name, s] : suites) width = std::max(width, name.size());
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-*s %8s %8s %8s %7s %7s %8s\n", static_cast<int>(width), "suite",
                "P", "R", "F1", "#gold", "#pred", "#correct");
  out << buf;
  for (const auto& [name, s] : suites) {
    std::snprintf(buf, sizeof(buf), "%-*s %8.2f %8.2f %8.2f %7zu %7zu %8zu\n", static_cast<int>(width),
                  name.c_str(), 100.0 * s.precision, 100.0 * s.recall, 100.0 * s.f1, s.gold, s.pred,
                  s.correct);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "%-*s %8s %8s %8.2f\n", static_cast<int>(width), "overall", "", "",
                100.0 * overall);
  out << buf;
  return out.str();
}

std::vector<std::vector<SlotSpan>> predict_spans(const EncoderModel& model, const Vocab& vocab,
                                                 const TagSet& tagset, const Corpus& corpus) {
  NoGradGuard no_grad;
  std::vector<std::vector<SlotSpan>> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus.sentences) {
    if (s.tokens.empty()) {
      out.emplace_back();
      continue;
    }
    Encoding enc = model.encode(vocab.encode(s.tokens));
    // Truncated tail decodes as O, which adds no spans.
    out.push_back(decode_spans(model.tag_logits(enc.token_states()), tagset));
  }
  return out;
}

EvalReport evaluate(const EncoderModel& model, const Vocab& vocab, const TagSet& tagset,
                    const std::map<std::string, Corpus>& suites, std::size_t threads) {
  if (!suites.count("clean")) throw ContractError("evaluate: suites must include 'clean'");
  if (suites.count("overall")) throw ContractError("evaluate: 'overall' is a reserved suite name");

  std::vector<const std::pair<const std::string, Corpus>*> items;
  for (const auto& kv : suites) items.push_back(&kv);
  std::vector<SpanScore> scores(items.size());
  auto score = [&](std::size_t i) {
    const Corpus& c = items[i]->second;
    std::vector<std::vector<SlotSpan>> gold;
    gold.reserve(c.size());
    for (const auto& s : c.sentences) gold.push_back(extract_spans(s));
    scores[i] = span_f1(gold, predict_spans(model, vocab, tagset, c));
  };

  const std::size_t workers = std::clamp<std::size_t>(threads, 1, items.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < items.size(); ++i) score(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < items.size(); i += workers) score(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  EvalReport report;
  double total = 0.0;
  std::size_t noisy = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    report.suites[items[i]->first] = scores[i];
    if (items[i]->first != "clean") {
      total += scores[i].f1;
      ++noisy;
    }
  }
  report.overall = noisy == 0 ? 0.0 : total / static_cast<double>(noisy);
  return report;
}

std::string export_embeddings(const EncoderModel& model, const Vocab& vocab,
                              const Corpus& corpus) {
  NoGradGuard no_grad;
  const std::size_t d = model.config().dim;
  std::string out;
  char buf[40];
  for (const auto& s : corpus.sentences) {
    if (s.tokens.empty()) continue;
    Encoding enc = model.encode(vocab.encode(s.tokens));
    const std::size_t n = enc.hidden.rows() - 1;
    for (const auto& span : extract_spans(s)) {
      if (span.end > n) continue;
      std::vector<double> mean(d, 0.0);
      for (std::size_t t = span.start; t < span.end; ++t) {
        for (std::size_t c = 0; c < d; ++c) mean[c] += enc.hidden.at(t + 1, c);
      }
      const double inv = 1.0 / static_cast<double>(span.end - span.start);
      for (std::size_t c = 0; c < d; ++c) {
        std::snprintf(buf, sizeof(buf), "%.9g\t", mean[c] * inv);
        out += buf;
      }
      out += span.label + "\n";
    }
  }
  return out;
}

}  // namespace noiselab
