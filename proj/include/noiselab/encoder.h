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

#ifndef NOISELAB_ENCODER_H_
#define NOISELAB_ENCODER_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "noiselab/rng.h"
#include "noiselab/tensor.h"

namespace noiselab {

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t ffn_dim = 128;
  std::size_t max_len = 64;  // including the aggregate position
  double dropout = 0.1;
  std::size_t num_tags = 1;
  std::size_t proj_dim = 32;
  double init_std = 0.02;

  void validate() const;  // throws ConfigError
  bool operator==(const EncoderConfig&) const = default;
};

struct EncodeOptions {
  // Active dropout when non-null.
  Rng* dropout_rng = nullptr;
  // Constant added to the input embeddings (shape [n+1, d]), or undefined.
  Value noise;
};

struct Encoding {
  Value hidden;      // [n+1, d]; row 0 is the aggregate position
  Value sentence;    // [1, d] = hidden row 0
  Value embeddings;  // [n+1, d] token embeddings before positions are added
  bool truncated = false;

  // hidden rows 1..n.
  Value token_states() const;
};

// Transformer encoder (post-LN, GELU feed-forward) with four linear heads:
// vocabulary, noisiness, tag and projection.
class EncoderModel {
 public:
  EncoderModel() = default;
  EncoderModel(const EncoderConfig& config, std::uint64_t seed);
  // Parameters are graph handles; copies must go through clone().
  EncoderModel(const EncoderModel&) = delete;
  EncoderModel& operator=(const EncoderModel&) = delete;
  EncoderModel(EncoderModel&&) = default;
  EncoderModel& operator=(EncoderModel&&) = default;

  const EncoderConfig& config() const { return config_; }

  // Prepends the aggregate id; inputs longer than max_len - 1 are truncated.
  Encoding encode(const std::vector<int>& ids, const EncodeOptions& options = {}) const;

  Value vocab_logits(const Value& states) const;    // [n, V]
  Value noisiness_prob(const Value& sentence) const;  // scalar in (0, 1)
  Value tag_logits(const Value& states) const;      // [n, num_tags]
  Value project(const Value& x) const;              // unit-norm rows, [n, proj_dim]

  // Registration order is stable and used by checkpoints.
  const std::vector<std::pair<std::string, Value>>& parameters() const { return params_; }
  Value& parameter(const std::string& name);
  const Value& parameter(const std::string& name) const;
  void zero_grad();
  std::size_t parameter_count() const;

  // Deep copy of parameter values.
  EncoderModel clone() const;

  void save(const std::filesystem::path& path) const;
  // Replaces parameter values from a checkpoint; names and shapes must match.
  void load(const std::filesystem::path& path);

 private:
  struct Layer {
    Value wq, bq, wk, bk, wv, bv, wo, bo;
    Value ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b;
  };

  Value& add_param(const std::string& name, Shape shape, double std, double fill,
                   std::uint64_t seed);
  void bind();

  EncoderConfig config_;
  std::vector<std::pair<std::string, Value>> params_;
  Value tok_emb_, pos_emb_, emb_ln_g_, emb_ln_b_;
  std::vector<Layer> layers_;
  Value vocab_w_, vocab_b_, noise_w_, noise_b_, tag_w_, tag_b_, proj_w_, proj_b_;
};

// ---- checkpoints -----------------------------------------------------------
//
// Little-endian binary:
//   magic "NLCKPT\0\0" (8 bytes), u32 version (=1), u32 record count,
//   per record: u32 name length, name bytes, u32 rank, rank x u64 dims,
//   numel x f64 row-major data.

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

void save_checkpoint(const std::vector<NamedTensor>& tensors, const std::filesystem::path& path);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

// Plain gradient-descent optimizers over a model's parameters.
class Optimizer {
 public:
  enum class Kind { kSgd, kAdam };
  Optimizer(Kind kind, double lr, double clip_norm = 0.0);
  // Applies one update from the accumulated gradients; returns the
  // pre-clipping global gradient norm.
  double step(EncoderModel& model);

 private:
  Kind kind_;
  double lr_;
  double clip_norm_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

Optimizer::Kind parse_optimizer(const std::string& name);

}  // namespace noiselab

#endif  // NOISELAB_ENCODER_H_
