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

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "noiselab/corpus.h"
#include "noiselab/errors.h"
#include "noiselab/pretrain.h"
#include "noiselab/rng.h"

namespace noiselab {
namespace {

// Logit rows equal to log-probabilities, so softmax returns them exactly.
Value log_prob_rows(const std::vector<std::vector<double>>& probs) {
  std::vector<std::vector<double>> rows = probs;
  for (auto& r : rows) {
    for (auto& v : r) v = std::log(v);
  }
  return Value::matrix(rows);
}

Sentence flight() {
  return Sentence{{"book", "a", "flight", "to", "new", "york", "on", "monday"},
                  {"O", "O", "O", "O", "B-city", "I-city", "O", "B-date"}, 0, {}};
}

Vocab flight_vocab() { return Vocab(flight().tokens); }

TEST(PretrainTest, MaskMultiTokenSpan) {
  Sentence s{{"book", "a", "flight", "to", "new", "york"}, {"O", "O", "O", "O", "B-city", "I-city"}, 0, {}};
  Vocab v(s.tokens);
  Rng rng(1, "mask");
  MaskedExample ex = mask_entities(s, v, 1, rng);
  EXPECT_EQ(ex.mask_positions, (std::vector<std::size_t>{4, 5}));
  EXPECT_EQ(ex.masked_ids[4], Vocab::kMask);
  EXPECT_EQ(ex.masked_ids[5], Vocab::kMask);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(ex.masked_ids[i], ex.original_ids[i]);
  EXPECT_EQ(ex.entities_masked, 1u);
}

TEST(PretrainTest, MaskSaturatesAndHandlesNoEntities) {
  Vocab v = flight_vocab();
  Rng rng(1, "mask");
  MaskedExample all = mask_entities(flight(), v, 5, rng);
  EXPECT_EQ(all.mask_positions, (std::vector<std::size_t>{4, 5, 7}));
  Sentence none{{"hello", "there"}, {"O", "O"}, 0, {}};
  MaskedExample ex = mask_entities(none, v, 1, rng);
  EXPECT_TRUE(ex.mask_positions.empty());
  EXPECT_EQ(ex.masked_ids, ex.original_ids);
}

TEST(PretrainTest, MaskOnlyTouchesWholeGoldSpans) {
  Vocab v = flight_vocab();
  for (std::uint64_t i = 0; i < 200; ++i) {
    Rng rng(2, "mask", i);
    MaskedExample ex = mask_entities(flight(), v, 1, rng);
    ASSERT_TRUE(ex.mask_positions == std::vector<std::size_t>({4, 5}) ||
                ex.mask_positions == std::vector<std::size_t>({7}));
    for (std::size_t t = 0; t < ex.masked_ids.size(); ++t) {
      const bool masked = ex.masked_ids[t] == Vocab::kMask;
      ASSERT_EQ(masked, std::count(ex.mask_positions.begin(), ex.mask_positions.end(), t) == 1);
    }
  }
}

TEST(PretrainTest, SmpLossExamples) {
  const double want = -std::log(0.5) - std::log(0.25);
  EXPECT_NEAR(smp_loss(log_prob_rows({{0.5, 0.25, 0.25}, {0.25, 0.5, 0.25}}), std::vector<int>{0, 0}).item(), want, 1e-12);
  EXPECT_NEAR(want, 2.0794, 1e-4);
  EXPECT_NEAR(smp_loss(log_prob_rows({{0.5, 0.25, 0.25}, {0.25, 0.5, 0.25}}), std::vector<int>{0, 0}, true).item(),
              want / 2, 1e-12);
  EXPECT_NEAR(smp_loss(Value::matrix({{60.0, 0.0}}), std::vector<int>{0}).item(), 0.0, 1e-12);
  EXPECT_EQ(smp_loss(Value::zeros({0, 3}), std::vector<int>{}).item(), 0.0);
}

TEST(PretrainTest, SndLossExamples) {
  EXPECT_NEAR(snd_loss(Value::scalar(0.9), 1).item(), -std::log(0.9), 1e-12);
  EXPECT_NEAR(snd_loss(Value::scalar(0.9), 1).item(), 0.1054, 1e-4);
  EXPECT_NEAR(snd_loss(Value::scalar(0.5), 0).item(), 0.6931, 1e-4);
  EXPECT_THROW(snd_loss(Value::scalar(0.5), 2), ContractError);
  double prev = 1e9;
  for (double p : {0.6, 0.9, 0.99, 0.999999}) {
    const double l = snd_loss(Value::scalar(p), 1).item();
    EXPECT_LT(l, prev);
    EXPECT_NEAR(l, snd_loss(Value::scalar(1.0 - p), 0).item(), 1e-9);
    prev = l;
  }
}

TEST(PretrainTest, JointLoss) {
  EXPECT_NEAR(joint_pretrain_loss(Value::scalar(2.0), Value::scalar(1.0), 0.6).item(), 1.6, 1e-12);
  EXPECT_EQ(joint_pretrain_loss(Value::scalar(2.0), Value::scalar(1.0), 1.0).item(), 2.0);
  EXPECT_EQ(joint_pretrain_loss(Value::scalar(2.0), Value::scalar(1.0), 0.0).item(), 1.0);
  EXPECT_THROW(joint_pretrain_loss(Value::scalar(2.0), Value::scalar(1.0), 1.1), ConfigError);
}

TEST(PretrainTest, EffectiveAlphaAndValidation) {
  PretrainConfig c;
  EXPECT_EQ(c.effective_alpha(), 0.6);
  c.use_snd = false;
  EXPECT_EQ(c.effective_alpha(), 1.0);
  c.use_snd = true;
  c.use_smp = false;
  EXPECT_EQ(c.effective_alpha(), 0.0);
  c.use_snd = false;
  c.alpha = 2.0;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("alpha"), std::string::npos);
    EXPECT_NE(what.find("use_smp"), std::string::npos);
  }
}

struct Toy {
  Corpus clean, aug;
  Vocab vocab;
};

Toy toy_corpus() {
  Toy t;
  const std::vector<std::string> cities{"paris", "rome", "oslo", "lima", "kyiv"};
  const std::vector<std::string> days{"monday", "friday", "sunday"};
  for (std::size_t i = 0; i < 50; ++i) {
    Sentence s{{"fly", "to", cities[i % 5], "on", days[i % 3]}, {"O", "O", "B-city", "O", "B-date"}, 0, {}};
    t.clean.sentences.push_back(s);
    Sentence n = s;
    n.tokens[0] = "fyl";
    n.tokens.insert(n.tokens.begin(), "um");
    n.tags.insert(n.tags.begin(), "O");
    n.noisiness = 1;
    n.provenance = Provenance{NoiseFamily::kTypos, {}};
    t.aug.sentences.push_back(n);
  }
  t.vocab = build_vocab(std::vector<const Corpus*>{&t.clean, &t.aug}, 1);
  return t;
}

EncoderConfig toy_encoder(std::size_t vocab) {
  EncoderConfig c;
  c.vocab_size = vocab;
  c.dim = 16;
  c.heads = 2;
  c.layers = 1;
  c.ffn_dim = 32;
  c.max_len = 16;
  c.proj_dim = 8;
  return c;
}

TEST(PretrainTest, ToyLossDecreasesAndIsDeterministic) {
  Toy t = toy_corpus();
  PretrainConfig c;
  c.epochs = 8;
  c.optimizer = "adam";
  c.lr = 3e-3;
  for (std::uint64_t seed : {1, 2, 3}) {
    c.seed = seed;
    EncoderModel m(toy_encoder(t.vocab.size()), seed);
    auto trace = run_pretraining(m, t.clean, t.aug, t.vocab, c);
    ASSERT_EQ(trace.size(), 8u);
    for (const auto& r : trace) ASSERT_TRUE(std::isfinite(r.joint));
    EXPECT_LT(trace.back().joint, trace.front().joint) << "seed " << seed;
  }
  c.epochs = 2;
  EncoderModel a(toy_encoder(t.vocab.size()), 4), b(toy_encoder(t.vocab.size()), 4);
  EXPECT_EQ(pretrain_trace_jsonl(run_pretraining(a, t.clean, t.aug, t.vocab, c)),
            pretrain_trace_jsonl(run_pretraining(b, t.clean, t.aug, t.vocab, c)));
}

TEST(PretrainTest, RejectsBadCorpora) {
  Toy t = toy_corpus();
  PretrainConfig c;
  EncoderModel m(toy_encoder(t.vocab.size()), 1);
  EXPECT_THROW(run_pretraining(m, Corpus{}, Corpus{}, t.vocab, c), ConfigError);
  Corpus shorter = t.aug;
  shorter.sentences.pop_back();
  EXPECT_THROW(run_pretraining(m, t.clean, shorter, t.vocab, c), ConfigError);
  Corpus mislabelled = t.clean;
  mislabelled.sentences[3].noisiness = 1;
  mislabelled.sentences[3].provenance = Provenance{NoiseFamily::kTypos, {}};
  EXPECT_THROW(run_pretraining(m, mislabelled, t.aug, t.vocab, c), ValidationError);
}

TEST(PretrainTest, TraceFormat) {
  PretrainEpoch e;
  e.epoch = 1;
  e.l_smp = 0.5;
  e.l_snd = 0.25;
  e.joint = 0.4;
  EXPECT_EQ(pretrain_trace_jsonl({e}), "{\"epoch\":1,\"l_smp\":0.5,\"l_snd\":0.25,\"joint\":0.4}\n");
}

}  // namespace
}  // namespace noiselab
