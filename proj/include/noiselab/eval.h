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

// Span decoding, exact-match span F1 and robustness reports.

#ifndef NOISELAB_EVAL_H_
#define NOISELAB_EVAL_H_

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "noiselab/corpus.h"
#include "noiselab/encoder.h"
#include "noiselab/finetune.h"
#include "noiselab/tensor.h"

namespace noiselab {

// Promotes every I-X that does not follow B-X or I-X to B-X.
std::vector<std::string> repair_bio(std::vector<std::string> tags);

// Per-row argmax (lowest tag id on ties), repaired, then extracted.
std::vector<SlotSpan> decode_spans(const Value& tag_logits, const TagSet& tagset);

struct SpanScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t gold = 0;
  std::size_t pred = 0;
  std::size_t correct = 0;
  bool operator==(const SpanScore&) const = default;
};

// Micro-averaged over sentences. ContractError when the lists differ in size.
SpanScore span_f1(const std::vector<std::vector<SlotSpan>>& gold,
                  const std::vector<std::vector<SlotSpan>>& pred);

struct EvalReport {
  std::uint64_t seed = 0;
  std::string config_hash;
  AblationFlags flags;
  std::map<std::string, SpanScore> suites;
  double overall = 0.0;  // mean F1 over the non-clean suites

  // {"seed","config_hash","ablation":{...},"results":{<suite>:{...},"overall":{"f1"}}}
  std::string to_json() const;
  // Aligned plain-text table, F1 values in percent.
  std::string to_table() const;
};

// Predicted spans for every sentence; tokens past the encoder length are O.
std::vector<std::vector<SlotSpan>> predict_spans(const EncoderModel& model, const Vocab& vocab,
                                                 const TagSet& tagset, const Corpus& corpus);

// Dropout off, no gradient recording. `threads` caps concurrent suites.
// ContractError unless a "clean" suite is present; "overall" is reserved.
EvalReport evaluate(const EncoderModel& model, const Vocab& vocab, const TagSet& tagset,
                    const std::map<std::string, Corpus>& suites, std::size_t threads = 1);

// One row per gold entity: mean final hidden state over its tokens, then the
// label. Entities cut off by truncation are skipped.
std::string export_embeddings(const EncoderModel& model, const Vocab& vocab,
                              const Corpus& corpus);

}  // namespace noiselab

#endif  // NOISELAB_EVAL_H_
