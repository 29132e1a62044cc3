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

// End-to-end pipeline: data generation, perturbation, pre-training,
// fine-tuning, evaluation and ablation. Each stage reads and writes files
// under the output directory and records a manifest.json with the config
// hash and git-style blob hashes of its inputs and outputs.
//
//   data/      train.conll test.conll
//   perturb/   train_aug.conll vocab.txt tags.txt suites/{single,mixed}/*.conll
//   pretrain/  model.ckpt trace.jsonl
//   finetune/  model.ckpt trace.jsonl
//   eval/      report.json report.txt report_mixed.json report_mixed.txt embeddings.tsv
//   ablate/    <variant>/report*.json summary.json summary.txt

#ifndef NOISELAB_PIPELINE_H_
#define NOISELAB_PIPELINE_H_

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "noiselab/config.h"
#include "noiselab/corpus.h"
#include "noiselab/encoder.h"
#include "noiselab/eval.h"
#include "noiselab/finetune.h"
#include "noiselab/perturb.h"
#include "noiselab/pretrain.h"

namespace noiselab {

struct StageContext {
  bool quiet = false;
  std::size_t threads = 1;
  std::ostream* log = nullptr;  // progress lines unless quiet; stderr when null
};

// NOISELAB_THREADS, default 1. ConfigError on a malformed value.
std::size_t threads_from_env();

struct PreparedData {
  Corpus train, test, train_aug;
  std::map<std::string, Corpus> single, mixed;
  Vocab vocab;
  TagSet tagset;
};

// The data and perturb stages computed in memory.
PreparedData prepare_data(const RunConfig& config);

// Vocabulary over the clean and augmented training text.
Vocab vocab_for(const Corpus& train, const Corpus& train_aug, std::size_t min_freq);
// Tag set over the slot types occurring in either corpus.
TagSet tagset_for(const Corpus& train, const Corpus& test);

EncoderConfig encoder_config_for(const RunConfig& config, const PreparedData& data);

EncoderModel pretrain_model(const RunConfig& config, const PreparedData& data, bool use_smp,
                            bool use_snd, std::vector<PretrainEpoch>* trace = nullptr,
                            const StageContext& ctx = {});

// Starts from a clone of `pretrained` or from a fresh initialisation.
EncoderModel finetune_model(const RunConfig& config, const PreparedData& data,
                            const AblationFlags& flags, const EncoderModel* pretrained,
                            std::vector<FinetuneEpoch>* trace = nullptr,
                            const StageContext& ctx = {});

struct VariantResult {
  std::string name;
  AblationFlags flags;
  EvalReport single;
  EvalReport mixed;
};

// Trains and evaluates each variant on the same data and seeds. Variants
// sharing a pre-training objective share one pre-trained model. ConfigError
// on a repeated or unknown variant.
std::vector<VariantResult> run_ablation(const RunConfig& config, const PreparedData& data,
                                        const std::vector<std::string>& variants,
                                        const StageContext& ctx = {});

std::string ablation_table(const std::vector<VariantResult>& results);
std::string ablation_json(const std::vector<VariantResult>& results);

void stage_gen_data(const RunConfig& config, const StageContext& ctx);
void stage_perturb(const RunConfig& config, const StageContext& ctx);
void stage_pretrain(const RunConfig& config, const StageContext& ctx);
void stage_finetune(const RunConfig& config, const StageContext& ctx);
void stage_evaluate(const RunConfig& config, const StageContext& ctx);
void stage_ablate(const RunConfig& config, const StageContext& ctx);
void stage_all(const RunConfig& config, const StageContext& ctx);

}  // namespace noiselab

#endif  // NOISELAB_PIPELINE_H_
