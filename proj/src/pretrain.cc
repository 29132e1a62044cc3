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

#include "noiselab/pretrain.h"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "noiselab/errors.h"

namespace noiselab {

MaskedExample mask_entities(const Sentence& sentence, const Vocab& vocab, std::size_t k,
                            Rng& rng) {
  MaskedExample ex;
  ex.original_ids = vocab.encode(sentence.tokens);
  ex.masked_ids = ex.original_ids;
  ex.noisiness = sentence.noisiness;
  std::vector<SlotSpan> spans = extract_spans(sentence);
  if (spans.empty() || k == 0) return ex;

  // Partial Fisher-Yates: the first `take` entries are a uniform sample.
  std::vector<std::size_t> order(spans.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t take = std::min(k, spans.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::swap(order[i], order[i + rng.uniform_index(order.size() - i)]);
  }
  for (std::size_t i = 0; i < take; ++i) {
    const SlotSpan& s = spans[order[i]];
    for (std::size_t t = s.start; t < s.end; ++t) {
      ex.masked_ids[t] = Vocab::kMask;
      ex.mask_positions.push_back(t);
    }
  }
  std::sort(ex.mask_positions.begin(), ex.mask_positions.end());
  ex.entities_masked = take;
  return ex;
}

Value smp_loss(const Value& logits_at_mask, std::span<const int> targets, bool normalize) {
  if (targets.empty()) return Value::scalar(0.0);
  return cross_entropy(logits_at_mask, targets, normalize ? Reduction::kMean : Reduction::kSum);
}

Value snd_loss(const Value& prob, int label) {
  if (label != 0 && label != 1) throw ContractError("snd_loss: label must be 0 or 1");
  return binary_cross_entropy(prob, static_cast<double>(label));
}

Value joint_pretrain_loss(const Value& l_smp, const Value& l_snd, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("alpha must lie in [0,1], got " + std::to_string(alpha));
  }
  if (alpha == 1.0) return l_smp;
  if (alpha == 0.0) return l_snd;
  return add(scale(l_smp, alpha), scale(l_snd, 1.0 - alpha));
}

double PretrainConfig::effective_alpha() const {
  if (use_smp && use_snd) return alpha;
  return use_smp ? 1.0 : 0.0;
}

void PretrainConfig::validate() const {
  std::vector<std::string> problems;
  if (!(alpha >= 0.0 && alpha <= 1.0)) problems.push_back("pretrain.alpha must lie in [0,1]");
  if (!(lr > 0.0)) problems.push_back("pretrain.lr must be > 0");
  if (batch_size == 0) problems.push_back("pretrain.batch must be >= 1");
  if (k == 0) problems.push_back("pretrain.k must be >= 1");
  if (!use_smp && !use_snd) problems.push_back("pre-training needs at least one of use_smp/use_snd");
  if (optimizer != "sgd" && optimizer != "adam") problems.push_back("pretrain.optimizer must be sgd or adam");
  if (clip_norm < 0.0) problems.push_back("pretrain.clip_norm must be >= 0");
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
    throw ConfigError(msg);
  }
}

PretrainLosses pretrain_objective(const EncoderModel& model, const MaskedBatch& batch,
                                  const PretrainConfig& config, Rng* dropout_rng) {
  if (batch.empty()) throw ContractError("pretrain_objective: empty batch");
  const double alpha = config.effective_alpha();
  Value smp_total = Value::scalar(0.0);
  Value snd_total = Value::scalar(0.0);
  for (const auto& ex : batch) {
    Encoding enc = model.encode(ex.masked_ids, {dropout_rng, {}});
    if (alpha > 0.0) {
      const std::size_t n = enc.hidden.rows() - 1;
      std::vector<int> rows, targets;
      for (auto p : ex.mask_positions) {
        if (p < n) {
          rows.push_back(static_cast<int>(p));
          targets.push_back(ex.original_ids[p]);
        }
      }
      if (!rows.empty()) {
        Value at_mask = embedding_lookup(enc.token_states(), rows);
        smp_total = add(smp_total, smp_loss(model.vocab_logits(at_mask), targets, config.normalize_smp));
      }
    }
    if (alpha < 1.0) {
      snd_total = add(snd_total, snd_loss(model.noisiness_prob(enc.sentence), ex.noisiness));
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  PretrainLosses out;
  out.l_smp = scale(smp_total, inv);
  out.l_snd = scale(snd_total, inv);
  out.joint = joint_pretrain_loss(out.l_smp, out.l_snd, alpha);
  return out;
}

std::vector<PretrainEpoch> run_pretraining(EncoderModel& model, const Corpus& clean,
                                           const Corpus& augmented, const Vocab& vocab,
                                           const PretrainConfig& config,
                                           const std::function<void(const PretrainEpoch&)>& on_epoch) {
  config.validate();
  if (clean.sentences.empty()) throw ConfigError("pre-training corpus is empty");
  if (augmented.size() != clean.size()) {
    throw ConfigError("augmented corpus is not aligned with the clean corpus");
  }
  // Example e < n is clean sentence e; e >= n is augmented sentence e - n.
  const std::size_t n = clean.size();
  auto sentence_of = [&](std::size_t e) -> const Sentence& {
    return e < n ? clean.sentences[e] : augmented.sentences[e - n];
  };
  for (std::size_t e = 0; e < n; ++e) {
    if (clean.sentences[e].noisiness != 0) {
      throw ValidationError("clean pre-training sentence " + std::to_string(e) + " is labelled noisy");
    }
  }

  Optimizer opt(parse_optimizer(config.optimizer), config.lr, config.clip_norm);
  std::vector<PretrainEpoch> trace;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(2 * n);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(config.seed, "pretrain-shuffle", epoch);
    shuffle_rng.shuffle(order);

    PretrainEpoch rec;
    rec.epoch = epoch;
    std::size_t batches = 0;
    for (const auto& idx : make_batches(order, config.batch_size)) {
      MaskedBatch batch;
      for (auto e : idx) {
        Rng mask_rng(config.seed, "pretrain-mask", epoch * 2 * n + e);
        batch.push_back(mask_entities(sentence_of(e), vocab, config.k, mask_rng));
      }
      Rng dropout_rng(config.seed, "pretrain-dropout", step++);
      model.zero_grad();
      PretrainLosses losses = pretrain_objective(model, batch, config, &dropout_rng);
      backward(losses.joint);
      opt.step(model);
      rec.l_smp += losses.l_smp.item();
      rec.l_snd += losses.l_snd.item();
      rec.joint += losses.joint.item();
      ++batches;
    }
    rec.l_smp /= static_cast<double>(batches);
    rec.l_snd /= static_cast<double>(batches);
    rec.joint /= static_cast<double>(batches);
    trace.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  model.zero_grad();
  return trace;
}

std::string pretrain_trace_jsonl(const std::vector<PretrainEpoch>& trace) {
  std::string out;
  for (const auto& r : trace) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["l_smp"] = r.l_smp;
    j["l_snd"] = r.l_snd;
    j["joint"] = r.joint;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace noiselab
