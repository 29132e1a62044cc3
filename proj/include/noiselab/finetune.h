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

// Noise adaptation fine-tuning.
//
// Objective per batch of clean sentences and their augmented copies:
//
//   L      = beta * L_cl + (1 - beta) * L_adv
//   L_adv  = L_slot + L'_slot
//   L_cl   = mean_q -log softmax_j(cos(q, k_j) / tau)[q's own copy]
//
// L_slot is token-level tag cross-entropy averaged per sentence and then over
// every clean and augmented sentence in the batch. L'_slot is the same loss
// after adding eps * g / ||g|| to each sentence's input embeddings, where g
// is the gradient of L_slot with respect to those embeddings. The noise is a
// constant in the second pass.

#ifndef NOISELAB_FINETUNE_H_
#define NOISELAB_FINETUNE_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "noiselab/corpus.h"
#include "noiselab/encoder.h"
#include "noiselab/rng.h"
#include "noiselab/tensor.h"

namespace noiselab {

// Which framework components are active. The pre-training flags only matter
// to the pipeline that decides whether and how to pre-train.
struct AblationFlags {
  bool use_pretrained = true;
  bool use_smp = true;
  bool use_snd = true;
  bool use_contrastive = true;
  bool use_adversarial = true;

  bool operator==(const AblationFlags&) const = default;
};

// Named variants: "full", "-pretraining", "-smp", "-snd", "-con", "-adv",
// "baseline" (no pre-training, contrastive or adversarial term).
AblationFlags ablation_variant(const std::string& name);
const std::vector<std::string>& default_ablation_variants();

struct FinetuneConfig {
  std::size_t epochs = 20;
  double lr = 0.05;
  std::size_t batch_size = 16;
  double tau = 0.07;
  double epsilon = 1.0;
  double beta = 0.3;
  std::uint64_t seed = 7;
  std::string optimizer = "sgd";
  double clip_norm = 0.0;
  bool per_token_norm = false;
  AblationFlags flags;

  // Weight on L_cl after dropping disabled terms (the rest goes to L_adv).
  double effective_beta() const;
  void validate() const;  // throws ConfigError
  bool operator==(const FinetuneConfig&) const = default;
};

// Mean over tokens of tag cross-entropy.
Value slot_loss(const Value& tag_logits, std::span<const int> gold);

struct ContrastiveBatch {
  Value queries;    // [B, p]
  Value positives;  // [B, p]; row i pairs with query i, the rows form the pool
  double tau = 0.07;
};

// InfoNCE with cosine similarity; the pool contains the positive.
Value contrastive_loss(const ContrastiveBatch& batch);

struct FgvNoise {
  std::vector<double> noise;  // same layout as the gradient
  bool skipped = false;       // gradient norm below 1e-12
};

// eps * g / ||g||_2 over the whole matrix (or per row with per_row set, rows of
// width `cols`). A zero gradient yields a zero vector and skipped = true.
FgvNoise fgv_perturbation(std::span<const double> grad, double epsilon, bool per_row = false,
                          std::size_t cols = 0);

// beta * l_cl + (1 - beta) * l_adv. ConfigError unless 0 <= beta <= 1.
Value joint_finetune_loss(const Value& l_cl, const Value& l_adv, double beta);

struct TaggedExample {
  std::vector<int> ids;
  std::vector<int> tags;
};

struct AdversarialResult {
  Value l_slot;
  Value l_slot_adv;
  Value l_adv;
  std::vector<Encoding> clean_pass;          // one per example, reusable by L_cl
  std::vector<std::vector<double>> noise;    // v_noise per example
  std::size_t skips = 0;
};

// Runs the clean pass, backpropagates L_slot to the input embeddings (the
// parameter gradients of that backward are reset), builds v_noise and runs the
// second pass. Pass `fixed_noise` to reuse a previously computed v_noise
// instead (no first backward). `dropout_key` (if set) seeds per-example
// dropout identically in both passes.
AdversarialResult adversarial_loss(const EncoderModel& model,
                                   const std::vector<TaggedExample>& examples, double epsilon,
                                   bool per_token_norm, const std::optional<Rng>& dropout_key,
                                   const std::vector<std::vector<double>>* fixed_noise = nullptr);

struct FinetuneBatch {
  std::vector<TaggedExample> clean;
  std::vector<TaggedExample> augmented;  // aligned with clean
};

struct FinetuneLosses {
  Value l_cl, l_slot, l_slot_adv, l_adv, joint;
  std::size_t skips = 0;
  std::vector<std::vector<double>> noise;
};

// The full (or ablated) objective for one batch.
FinetuneLosses finetune_objective(const EncoderModel& model, const FinetuneBatch& batch,
                                  const FinetuneConfig& config,
                                  const std::optional<Rng>& dropout_key,
                                  const std::vector<std::vector<double>>* fixed_noise = nullptr);

struct FinetuneEpoch {
  std::size_t epoch = 0;
  double l_cl = 0.0;
  double l_slot = 0.0;
  double l_slot_adv = 0.0;
  double joint = 0.0;
  std::size_t fgv_skips = 0;
};

FinetuneBatch make_finetune_batch(const std::vector<std::size_t>& indices, const Corpus& clean,
                                  const Corpus& augmented, const Vocab& vocab,
                                  const TagSet& tagset);

std::vector<FinetuneEpoch> run_finetuning(
    EncoderModel& model, const Corpus& clean, const Corpus& augmented, const Vocab& vocab,
    const TagSet& tagset, const FinetuneConfig& config,
    const std::function<void(const FinetuneEpoch&)>& on_epoch = {});

// One JSON object per line:
// {"epoch","l_cl","l_slot","l_slot_adv","joint","fgv_skips"}.
std::string finetune_trace_jsonl(const std::vector<FinetuneEpoch>& trace);

}  // namespace noiselab

#endif  // NOISELAB_FINETUNE_H_
