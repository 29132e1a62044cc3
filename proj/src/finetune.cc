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

#include "noiselab/finetune.h"

#include <cmath>

#include "json.hpp"
#include "noiselab/errors.h"

namespace noiselab {

namespace {
constexpr double kZeroGradNorm = 1e-12;
}

AblationFlags ablation_variant(const std::string& name) {
  AblationFlags f;
  if (name == "full") return f;
  if (name == "-pretraining") {
    f.use_pretrained = false;
  } else if (name == "-smp") {
    f.use_smp = false;
  } else if (name == "-snd") {
    f.use_snd = false;
  } else if (name == "-con") {
    f.use_contrastive = false;
  } else if (name == "-adv") {
    f.use_adversarial = false;
  } else if (name == "baseline") {
    f.use_pretrained = false;
    f.use_contrastive = false;
    f.use_adversarial = false;
  } else {
    throw ConfigError("unknown ablation variant '" + name + "'");
  }
  return f;
}

const std::vector<std::string>& default_ablation_variants() {
  static const std::vector<std::string> kVariants{"full", "-pretraining", "-smp",
                                                  "-snd", "-con",         "-adv"};
  return kVariants;
}

double FinetuneConfig::effective_beta() const {
  return flags.use_contrastive ? beta : 0.0;
}

void FinetuneConfig::validate() const {
  std::vector<std::string> problems;
  if (!(beta >= 0.0 && beta <= 1.0)) problems.push_back("finetune.beta must lie in [0,1]");
  if (!(tau > 0.0)) problems.push_back("finetune.tau must be > 0");
  if (!(epsilon > 0.0)) problems.push_back("finetune.epsilon must be > 0");
  if (!(lr > 0.0)) problems.push_back("finetune.lr must be > 0");
  if (batch_size == 0) problems.push_back("finetune.batch must be >= 1");
  if (optimizer != "sgd" && optimizer != "adam") problems.push_back("finetune.optimizer must be sgd or adam");
  if (clip_norm < 0.0) problems.push_back("finetune.clip_norm must be >= 0");
  if (flags.use_pretrained && !flags.use_smp && !flags.use_snd) {
    problems.push_back("use_pretrained requires use_smp or use_snd (pre-training objective would be empty)");
  }
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
    throw ConfigError(msg);
  }
}

Value slot_loss(const Value& tag_logits, std::span<const int> gold) {
  if (tag_logits.rows() != gold.size() || tag_logits.rank() != 2) {
    throw ShapeError("slot_loss: logits " + shape_string(tag_logits.shape()) + " vs " +
                     std::to_string(gold.size()) + " gold tags");
  }
  return cross_entropy(tag_logits, gold, Reduction::kMean);
}

Value contrastive_loss(const ContrastiveBatch& batch) {
  if (!(batch.tau > 0.0)) throw ConfigError("contrastive temperature must be > 0");
  if (batch.queries.rank() != 2 || batch.queries.shape() != batch.positives.shape()) {
    throw ShapeError("contrastive_loss: queries " + shape_string(batch.queries.shape()) +
                     " vs positives " + shape_string(batch.positives.shape()));
  }
  const std::size_t b = batch.queries.rows();
  std::vector<int> targets(b);
  for (std::size_t i = 0; i < b; ++i) targets[i] = static_cast<int>(i);
  Value logits = scale(pairwise_cosine(batch.queries, batch.positives), 1.0 / batch.tau);
  return cross_entropy(logits, targets, Reduction::kMean);
}

FgvNoise fgv_perturbation(std::span<const double> grad, double epsilon, bool per_row,
                          std::size_t cols) {
  FgvNoise out;
  out.noise.assign(grad.size(), 0.0);
  if (per_row && cols > 0) {
    bool any = false;
    for (std::size_t r = 0; r * cols < grad.size(); ++r) {
      double sq = 0.0;
      for (std::size_t j = 0; j < cols; ++j) sq += grad[r * cols + j] * grad[r * cols + j];
      const double norm = std::sqrt(sq);
      if (norm < kZeroGradNorm) continue;
      any = true;
      for (std::size_t j = 0; j < cols; ++j) out.noise[r * cols + j] = epsilon * grad[r * cols + j] / norm;
    }
    out.skipped = !any;
    return out;
  }
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm < kZeroGradNorm) {
    out.skipped = true;
    return out;
  }
  for (std::size_t i = 0; i < grad.size(); ++i) out.noise[i] = epsilon * grad[i] / norm;
  return out;
}

Value joint_finetune_loss(const Value& l_cl, const Value& l_adv, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw ConfigError("beta must lie in [0,1], got " + std::to_string(beta));
  }
  if (beta == 0.0) return l_adv;
  if (beta == 1.0) return l_cl;
  return add(scale(l_cl, beta), scale(l_adv, 1.0 - beta));
}

namespace {

struct SlotPass {
  std::vector<Encoding> encodings;
  Value loss;  // mean of per-sentence slot losses
};

SlotPass slot_pass(const EncoderModel& model, const std::vector<TaggedExample>& examples,
                   const std::optional<Rng>& dropout_key,
                   const std::vector<std::vector<double>>* noise) {
  SlotPass pass;
  Value total = Value::scalar(0.0);
  for (std::size_t j = 0; j < examples.size(); ++j) {
    std::optional<Rng> rng;
    if (dropout_key) rng = dropout_key->derive("example", j);
    EncodeOptions opts;
    opts.dropout_rng = rng ? &*rng : nullptr;
    if (noise) {
      const std::size_t n = std::min(examples[j].ids.size(), model.config().max_len - 1) + 1;
      opts.noise = Value::constant({n, model.config().dim}, (*noise)[j]);
    }
    Encoding enc = model.encode(examples[j].ids, opts);
    const std::size_t n = enc.hidden.rows() - 1;
    std::span<const int> gold(examples[j].tags.data(), n);
    total = add(total, slot_loss(model.tag_logits(enc.token_states()), gold));
    pass.encodings.push_back(std::move(enc));
  }
  pass.loss = scale(total, 1.0 / static_cast<double>(std::max<std::size_t>(1, examples.size())));
  return pass;
}

}  // namespace

AdversarialResult adversarial_loss(const EncoderModel& model,
                                   const std::vector<TaggedExample>& examples, double epsilon,
                                   bool per_token_norm, const std::optional<Rng>& dropout_key,
                                   const std::vector<std::vector<double>>* fixed_noise) {
  AdversarialResult out;
  SlotPass first = slot_pass(model, examples, dropout_key, nullptr);
  out.l_slot = first.loss;

  if (fixed_noise) {
    if (fixed_noise->size() != examples.size()) throw ContractError("adversarial_loss: noise/example count mismatch");
    out.noise = *fixed_noise;
  } else {
    if (!grad_recording_enabled()) {
      throw ContractError("adversarial_loss: gradient recording is disabled and no noise was supplied");
    }
    // Snapshot parameter gradients; the first backward only feeds v_noise.
    std::vector<std::vector<double>> saved;
    for (const auto& [name, v] : model.parameters()) {
      saved.emplace_back(v.grad().begin(), v.grad().end());
    }
    backward(out.l_slot);
    const std::size_t d = model.config().dim;
    for (const auto& enc : first.encodings) {
      std::vector<double> g(enc.embeddings.numel(), 0.0);
      if (!enc.embeddings.grad().empty()) {
        std::copy(enc.embeddings.grad().begin(), enc.embeddings.grad().end(), g.begin());
      }
      FgvNoise fgv = fgv_perturbation(g, epsilon, per_token_norm, d);
      if (fgv.skipped) ++out.skips;
      out.noise.push_back(std::move(fgv.noise));
    }
    const auto& params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      Value v = params[i].second;
      if (saved[i].empty()) {
        v.zero_grad();
      } else {
        std::copy(saved[i].begin(), saved[i].end(), v.mutable_grad().begin());
      }
    }
  }

  SlotPass second = slot_pass(model, examples, dropout_key, &out.noise);
  out.l_slot_adv = second.loss;
  out.l_adv = add(out.l_slot, out.l_slot_adv);
  out.clean_pass = std::move(first.encodings);
  return out;
}

FinetuneLosses finetune_objective(const EncoderModel& model, const FinetuneBatch& batch,
                                  const FinetuneConfig& config,
                                  const std::optional<Rng>& dropout_key,
                                  const std::vector<std::vector<double>>* fixed_noise) {
  if (batch.clean.empty() || batch.clean.size() != batch.augmented.size()) {
    throw ContractError("finetune_objective: batch must hold aligned clean/augmented examples");
  }
  std::vector<TaggedExample> examples = batch.clean;
  examples.insert(examples.end(), batch.augmented.begin(), batch.augmented.end());

  FinetuneLosses out;
  std::vector<Encoding> encodings;
  if (config.flags.use_adversarial) {
    AdversarialResult adv =
        adversarial_loss(model, examples, config.epsilon, config.per_token_norm, dropout_key, fixed_noise);
    out.l_slot = adv.l_slot;
    out.l_slot_adv = adv.l_slot_adv;
    out.l_adv = adv.l_adv;
    out.skips = adv.skips;
    out.noise = std::move(adv.noise);
    encodings = std::move(adv.clean_pass);
  } else {
    SlotPass pass = slot_pass(model, examples, dropout_key, nullptr);
    out.l_slot = pass.loss;
    out.l_adv = pass.loss;
    encodings = std::move(pass.encodings);
  }

  if (config.flags.use_contrastive) {
    const std::size_t b = batch.clean.size();
    std::vector<Value> q, k;
    for (std::size_t i = 0; i < b; ++i) {
      q.push_back(encodings[i].sentence);
      k.push_back(encodings[b + i].sentence);
    }
    ContrastiveBatch cb{model.project(concat(q, 0)), model.project(concat(k, 0)), config.tau};
    out.l_cl = contrastive_loss(cb);
  } else {
    out.l_cl = Value::scalar(0.0);
  }
  out.joint = joint_finetune_loss(out.l_cl, out.l_adv, config.effective_beta());
  return out;
}

FinetuneBatch make_finetune_batch(const std::vector<std::size_t>& indices, const Corpus& clean,
                                  const Corpus& augmented, const Vocab& vocab,
                                  const TagSet& tagset) {
  FinetuneBatch batch;
  for (auto i : indices) {
    const Sentence& c = clean.sentences.at(i);
    const Sentence& a = augmented.sentences.at(i);
    batch.clean.push_back({vocab.encode(c.tokens), tagset.encode(c.tags)});
    batch.augmented.push_back({vocab.encode(a.tokens), tagset.encode(a.tags)});
  }
  return batch;
}

std::vector<FinetuneEpoch> run_finetuning(EncoderModel& model, const Corpus& clean,
                                          const Corpus& augmented, const Vocab& vocab,
                                          const TagSet& tagset, const FinetuneConfig& config,
                                          const std::function<void(const FinetuneEpoch&)>& on_epoch) {
  config.validate();
  if (clean.sentences.empty()) throw ConfigError("fine-tuning corpus is empty");
  if (augmented.size() != clean.size()) {
    throw ConfigError("augmented corpus is not aligned with the clean corpus");
  }
  if (tagset.size() != model.config().num_tags) {
    throw ConfigError("tag set size " + std::to_string(tagset.size()) + " does not match model tag head " +
                      std::to_string(model.config().num_tags));
  }
  Optimizer opt(parse_optimizer(config.optimizer), config.lr, config.clip_norm);
  std::vector<FinetuneEpoch> trace;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(clean.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(config.seed, "finetune-shuffle", epoch);
    shuffle_rng.shuffle(order);

    FinetuneEpoch rec;
    rec.epoch = epoch;
    std::size_t batches = 0;
    for (const auto& idx : make_batches(order, config.batch_size)) {
      FinetuneBatch batch = make_finetune_batch(idx, clean, augmented, vocab, tagset);
      std::optional<Rng> key(Rng(config.seed, "finetune-dropout", step++));
      model.zero_grad();
      FinetuneLosses losses = finetune_objective(model, batch, config, key);
      backward(losses.joint);
      opt.step(model);
      rec.l_cl += losses.l_cl.item();
      rec.l_slot += losses.l_slot.item();
      rec.l_slot_adv += losses.l_slot_adv.defined() ? losses.l_slot_adv.item() : 0.0;
      rec.joint += losses.joint.item();
      rec.fgv_skips += losses.skips;
      ++batches;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    rec.l_cl *= inv;
    rec.l_slot *= inv;
    rec.l_slot_adv *= inv;
    rec.joint *= inv;
    trace.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  model.zero_grad();
  return trace;
}

std::string finetune_trace_jsonl(const std::vector<FinetuneEpoch>& trace) {
  std::string out;
  for (const auto& r : trace) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["l_cl"] = r.l_cl;
    j["l_slot"] = r.l_slot;
    j["l_slot_adv"] = r.l_slot_adv;
    j["joint"] = r.joint;
    j["fgv_skips"] = r.fgv_skips;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace noiselab
