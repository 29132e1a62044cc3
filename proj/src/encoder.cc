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

#include "noiselab/encoder.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "noiselab/corpus.h"
#include "noiselab/errors.h"

namespace noiselab {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void EncoderConfig::validate() const {
  std::vector<std::string> problems;
  if (vocab_size <= 4) problems.push_back("encoder.vocab_size must exceed the reserved ids");
  if (dim == 0 || heads == 0 || dim % heads != 0) problems.push_back("encoder.dim must be divisible by encoder.heads");
  if (layers == 0) problems.push_back("encoder.layers must be >= 1");
  if (ffn_dim == 0) problems.push_back("encoder.ffn must be >= 1");
  if (max_len < 2) problems.push_back("encoder.max_len must be >= 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) problems.push_back("encoder.dropout must lie in [0,1)");
  if (num_tags == 0) problems.push_back("encoder.num_tags must be >= 1");
  if (proj_dim == 0) problems.push_back("encoder.proj_dim must be >= 1");
  if (!(init_std > 0.0)) problems.push_back("encoder.init_std must be > 0");
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
    throw ConfigError(msg);
  }
}

Value Encoding::token_states() const {
  return slice(hidden, 0, 1, hidden.rows());
}

EncoderModel::EncoderModel(const EncoderConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const std::size_t d = config.dim, V = config.vocab_size;
  const double s = config.init_std;
  add_param("embed.tokens", {V, d}, s, 0.0, seed);
  add_param("embed.positions", {config.max_len, d}, s, 0.0, seed);
  add_param("embed.ln.gamma", {d}, 0.0, 1.0, seed);
  add_param("embed.ln.beta", {d}, 0.0, 0.0, seed);
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    for (const char* m : {"wq", "wk", "wv", "wo"}) {
      add_param(p + "attn." + m, {d, d}, s, 0.0, seed);
      add_param(p + "attn.b" + std::string(m + 1), {d}, 0.0, 0.0, seed);
    }
    add_param(p + "ln1.gamma", {d}, 0.0, 1.0, seed);
    add_param(p + "ln1.beta", {d}, 0.0, 0.0, seed);
    add_param(p + "ffn.w1", {d, config.ffn_dim}, s, 0.0, seed);
    add_param(p + "ffn.b1", {config.ffn_dim}, 0.0, 0.0, seed);
    add_param(p + "ffn.w2", {config.ffn_dim, d}, s, 0.0, seed);
    add_param(p + "ffn.b2", {d}, 0.0, 0.0, seed);
    add_param(p + "ln2.gamma", {d}, 0.0, 1.0, seed);
    add_param(p + "ln2.beta", {d}, 0.0, 0.0, seed);
  }
  add_param("head.vocab.w", {d, V}, s, 0.0, seed);
  add_param("head.vocab.b", {V}, 0.0, 0.0, seed);
  add_param("head.noisiness.w", {d, 1}, s, 0.0, seed);
  add_param("head.noisiness.b", {1}, 0.0, 0.0, seed);
  add_param("head.tag.w", {d, config.num_tags}, s, 0.0, seed);
  add_param("head.tag.b", {config.num_tags}, 0.0, 0.0, seed);
  add_param("head.proj.w", {d, config.proj_dim}, s, 0.0, seed);
  add_param("head.proj.b", {config.proj_dim}, 0.0, 0.0, seed);
  bind();
}

Value& EncoderModel::add_param(const std::string& name, Shape shape, double std, double fill,
                               std::uint64_t seed) {
  std::vector<double> data(shape_numel(shape), fill);
  if (std > 0.0) {
    Rng rng(seed, "init:" + name);
    for (auto& v : data) v = std * rng.normal();
  }
  params_.emplace_back(name, Value::parameter(std::move(shape), std::move(data)));
  return params_.back().second;
}

void EncoderModel::bind() {
  tok_emb_ = parameter("embed.tokens");
  pos_emb_ = parameter("embed.positions");
  emb_ln_g_ = parameter("embed.ln.gamma");
  emb_ln_b_ = parameter("embed.ln.beta");
  layers_.assign(config_.layers, Layer{});
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Layer& L = layers_[l];
    L.wq = parameter(p + "attn.wq");
    L.bq = parameter(p + "attn.bq");
    L.wk = parameter(p + "attn.wk");
    L.bk = parameter(p + "attn.bk");
    L.wv = parameter(p + "attn.wv");
    L.bv = parameter(p + "attn.bv");
    L.wo = parameter(p + "attn.wo");
    L.bo = parameter(p + "attn.bo");
    L.ln1_g = parameter(p + "ln1.gamma");
    L.ln1_b = parameter(p + "ln1.beta");
    L.w1 = parameter(p + "ffn.w1");
    L.b1 = parameter(p + "ffn.b1");
    L.w2 = parameter(p + "ffn.w2");
    L.b2 = parameter(p + "ffn.b2");
    L.ln2_g = parameter(p + "ln2.gamma");
    L.ln2_b = parameter(p + "ln2.beta");
  }
  vocab_w_ = parameter("head.vocab.w");
  vocab_b_ = parameter("head.vocab.b");
  noise_w_ = parameter("head.noisiness.w");
  noise_b_ = parameter("head.noisiness.b");
  tag_w_ = parameter("head.tag.w");
  tag_b_ = parameter("head.tag.b");
  proj_w_ = parameter("head.proj.w");
  proj_b_ = parameter("head.proj.b");
}

Value& EncoderModel::parameter(const std::string& name) {
  for (auto& [n, v] : params_) {
    if (n == name) return v;
  }
  throw ContractError("no parameter named '" + name + "'");
}

const Value& EncoderModel::parameter(const std::string& name) const {
  return const_cast<EncoderModel*>(this)->parameter(name);
}

void EncoderModel::zero_grad() {
  for (auto& [n, v] : params_) v.zero_grad();
}

std::size_t EncoderModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : params_) n += v.numel();
  return n;
}

EncoderModel EncoderModel::clone() const {
  EncoderModel copy;
  copy.config_ = config_;
  for (const auto& [name, v] : params_) {
    copy.params_.emplace_back(
        name, Value::parameter(v.shape(), std::vector<double>(v.data().begin(), v.data().end())));
  }
  copy.bind();
  return copy;
}

Encoding EncoderModel::encode(const std::vector<int>& ids, const EncodeOptions& options) const {
  Encoding out;
  std::vector<int> full{3};  // Vocab::kCls
  const std::size_t limit = config_.max_len - 1;
  out.truncated = ids.size() > limit;
  full.insert(full.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(std::min(ids.size(), limit)));
  const std::size_t n = full.size();
  const std::size_t d = config_.dim, h = config_.heads, dh = d / h;
  const double p = options.dropout_rng ? config_.dropout : 0.0;
  Rng* rng = options.dropout_rng;

  out.embeddings = embedding_lookup(tok_emb_, full);
  Value x = out.embeddings;
  if (options.noise.defined()) {
    if (options.noise.shape() != x.shape()) {
      throw ShapeError("encode: noise shape " + shape_string(options.noise.shape()) +
                       " vs embeddings " + shape_string(x.shape()));
    }
    x = add(x, options.noise);
  }
  x = add(x, slice(pos_emb_, 0, 0, n));
  x = dropout(layer_norm(x, emb_ln_g_, emb_ln_b_), p, rng);

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (const Layer& L : layers_) {
    Value q = add(matmul(x, L.wq), L.bq);
    Value k = add(matmul(x, L.wk), L.bk);
    Value v = add(matmul(x, L.wv), L.bv);
    std::vector<Value> heads;
    heads.reserve(h);
    for (std::size_t hh = 0; hh < h; ++hh) {
      Value qh = slice(q, 1, hh * dh, (hh + 1) * dh);
      Value kh = slice(k, 1, hh * dh, (hh + 1) * dh);
      Value vh = slice(v, 1, hh * dh, (hh + 1) * dh);
      Value att = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), 1);
      heads.push_back(matmul(att, vh));
    }
    Value attn = add(matmul(h == 1 ? heads[0] : concat(heads, 1), L.wo), L.bo);
    x = layer_norm(add(x, dropout(attn, p, rng)), L.ln1_g, L.ln1_b);
    Value ff = add(matmul(gelu(add(matmul(x, L.w1), L.b1)), L.w2), L.b2);
    x = layer_norm(add(x, dropout(ff, p, rng)), L.ln2_g, L.ln2_b);
  }
  out.hidden = x;
  out.sentence = slice(x, 0, 0, 1);
  return out;
}

Value EncoderModel::vocab_logits(const Value& states) const {
  return add(matmul(states, vocab_w_), vocab_b_);
}

Value EncoderModel::noisiness_prob(const Value& sentence) const {
  if (sentence.rank() != 2 || sentence.rows() != 1 || sentence.cols() != config_.dim) {
    throw ShapeError("noisiness_prob: expected [1," + std::to_string(config_.dim) + "], got " +
                     shape_string(sentence.shape()));
  }
  return reshape(sigmoid(add(matmul(sentence, noise_w_), noise_b_)), {});
}

Value EncoderModel::tag_logits(const Value& states) const {
  return add(matmul(states, tag_w_), tag_b_);
}

Value EncoderModel::project(const Value& x) const {
  return l2_normalize(add(matmul(x, proj_w_), proj_b_));
}

void EncoderModel::save(const std::filesystem::path& path) const {
  std::vector<NamedTensor> tensors;
  for (const auto& [name, v] : params_) {
    tensors.push_back({name, v.shape(), std::vector<double>(v.data().begin(), v.data().end())});
  }
  save_checkpoint(tensors, path);
}

void EncoderModel::load(const std::filesystem::path& path) {
  const auto tensors = load_checkpoint(path);
  if (tensors.size() != params_.size()) {
    throw ValidationError("checkpoint holds " + std::to_string(tensors.size()) +
                          " tensors, model expects " + std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& [name, v] = params_[i];
    if (tensors[i].name != name || tensors[i].shape != v.shape()) {
      throw ValidationError("checkpoint tensor '" + tensors[i].name + "' " +
                            shape_string(tensors[i].shape) + " does not match '" + name + "' " +
                            shape_string(v.shape()));
    }
    std::copy(tensors[i].data.begin(), tensors[i].data.end(), v.data().begin());
  }
}

// ---- checkpoint I/O ---------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'N', 'L', 'C', 'K', 'P', 'T', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(std::string_view in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw ValidationError("checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}
}  // namespace

void save_checkpoint(const std::vector<NamedTensor>& tensors, const std::filesystem::path& path) {
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto dim : t.shape) put<std::uint64_t>(out, dim);
    if (t.data.size() != shape_numel(t.shape)) throw ShapeError("checkpoint: data/shape mismatch for " + t.name);
    for (double v : t.data) put<double>(out, v);
  }
  write_file(path, out);
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  const std::string in = read_file(path);
  if (in.size() < sizeof kMagic || std::memcmp(in.data(), kMagic, sizeof kMagic) != 0) {
    throw ValidationError("'" + path.string() + "' is not a checkpoint");
  }
  std::size_t pos = sizeof kMagic;
  const auto version = get<std::uint32_t>(in, pos);
  if (version != kVersion) throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  const auto count = get<std::uint32_t>(in, pos);
  std::vector<NamedTensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto len = get<std::uint32_t>(in, pos);
    if (pos + len > in.size()) throw ValidationError("checkpoint truncated");
    t.name.assign(in.data() + pos, len);
    pos += len;
    const auto rank = get<std::uint32_t>(in, pos);
    for (std::uint32_t r = 0; r < rank; ++r) t.shape.push_back(get<std::uint64_t>(in, pos));
    t.data.resize(shape_numel(t.shape));
    for (auto& v : t.data) v = get<double>(in, pos);
    tensors.push_back(std::move(t));
  }
  if (pos != in.size()) throw ValidationError("trailing bytes in checkpoint");
  return tensors;
}

// ---- optimizers -------------------------------------------------------------

Optimizer::Optimizer(Kind kind, double lr, double clip_norm)
    : kind_(kind), lr_(lr), clip_norm_(clip_norm) {}

double Optimizer::step(EncoderModel& model) {
  auto& params = model.parameters();
  double sq = 0.0;
  for (const auto& [name, v] : params) {
    for (double g : v.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  const double factor = (clip_norm_ > 0.0 && norm > clip_norm_) ? clip_norm_ / norm : 1.0;
  if (kind_ == Kind::kAdam && m_.empty()) {
    for (const auto& [name, v] : params) {
      m_.emplace_back(v.numel(), 0.0);
      v_.emplace_back(v.numel(), 0.0);
    }
  }
  ++t_;
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Value v = params[i].second;
    const auto grad = v.grad();
    if (grad.empty()) continue;
    auto data = v.data();
    if (kind_ == Kind::kSgd) {
      for (std::size_t j = 0; j < data.size(); ++j) data[j] -= lr_ * factor * grad[j];
    } else {
      auto& m = m_[i];
      auto& s = v_[i];
      for (std::size_t j = 0; j < data.size(); ++j) {
        const double g = grad[j] * factor;
        m[j] = b1 * m[j] + (1.0 - b1) * g;
        s[j] = b2 * s[j] + (1.0 - b2) * g * g;
        data[j] -= lr_ * (m[j] / c1) / (std::sqrt(s[j] / c2) + eps);
      }
    }
  }
  return norm;
}

Optimizer::Kind parse_optimizer(const std::string& name) {
  if (name == "sgd") return Optimizer::Kind::kSgd;
  if (name == "adam") return Optimizer::Kind::kAdam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

}  // namespace noiselab
