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

// Noise alignment pre-training: slot masked prediction (SMP) plus sentence
// noisiness discrimination (SND), combined as alpha * SMP + (1 - alpha) * SND.

#ifndef NOISELAB_PRETRAIN_H_
#define NOISELAB_PRETRAIN_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "noiselab/corpus.h"
#include "noiselab/encoder.h"
#include "noiselab/rng.h"
#include "noiselab/tensor.h"

namespace noiselab {

struct MaskedExample {
  std::vector<int> original_ids;
  std::vector<int> masked_ids;
  std::vector<std::size_t> mask_positions;  // token indices, ascending
  std::size_t entities_masked = 0;
  int noisiness = 0;
};
using MaskedBatch = std::vector<MaskedExample>;

// Picks min(k, #spans) gold spans uniformly without replacement and replaces
// every token of each with [MASK]. A sentence without spans comes back
// unmasked with no mask positions.
MaskedExample mask_entities(const Sentence& sentence, const Vocab& vocab, std::size_t k, Rng& rng);

// Sum over masked tokens of -log softmax(logits)[target]. With `normalize`
// the sum is divided by the number of masked tokens. No rows -> exact 0.
Value smp_loss(const Value& logits_at_mask, std::span<const int> targets, bool normalize = false);

// Binary cross-entropy; label 1 = noisy.
Value snd_loss(const Value& prob, int label);

// alpha * l_smp + (1 - alpha) * l_snd. ConfigError unless 0 <= alpha <= 1.
Value joint_pretrain_loss(const Value& l_smp, const Value& l_snd, double alpha);

struct PretrainConfig {
  std::size_t epochs = 20;
  double lr = 0.05;
  std::size_t batch_size = 16;
  std::size_t k = 1;
  double alpha = 0.6;
  std::uint64_t seed = 7;
  std::string optimizer = "sgd";
  double clip_norm = 0.0;
  bool normalize_smp = false;
  bool use_smp = true;
  bool use_snd = true;

  // Weight actually placed on SMP once disabled terms are dropped.
  double effective_alpha() const;
  void validate() const;  // throws ConfigError
  bool operator==(const PretrainConfig&) const = default;
};

struct PretrainEpoch {
  std::size_t epoch = 0;
  double l_smp = 0.0;
  double l_snd = 0.0;
  double joint = 0.0;
};

struct PretrainLosses {
  Value l_smp, l_snd, joint;
};

// Batch objective: per-example losses averaged over the batch. Dropout is
// active when `dropout_rng` is non-null.
PretrainLosses pretrain_objective(const EncoderModel& model, const MaskedBatch& batch,
                                  const PretrainConfig& config, Rng* dropout_rng);

// Clean sentences (label 0) and their aligned augmented copies (label 1) are
// shuffled together each epoch. Deterministic given config.seed.
std::vector<PretrainEpoch> run_pretraining(
    EncoderModel& model, const Corpus& clean, const Corpus& augmented, const Vocab& vocab,
    const PretrainConfig& config,
    const std::function<void(const PretrainEpoch&)>& on_epoch = {});

// One JSON object per line: {"epoch","l_smp","l_snd","joint"}.
std::string pretrain_trace_jsonl(const std::vector<PretrainEpoch>& trace);

}  // namespace noiselab

#endif  // NOISELAB_PRETRAIN_H_
