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

// Minimal reverse-mode automatic differentiation over dense row-major
// double-precision tensors of rank 0, 1 or 2.
//
// A Value is a cheap handle to a graph node. Leaves are either parameters
// (gradient tracked) or constants. Every op records its parents and a local
// gradient rule when any parent requires a gradient and recording is enabled
// (see NoGradGuard). backward() seeds the scalar root with 1 and accumulates
// into leaf gradients; interior gradients are recomputed on every call.

#ifndef NOISELAB_TENSOR_H_
#define NOISELAB_TENSOR_H_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "noiselab/rng.h"

namespace noiselab {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }
  std::vector<double>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};
}  // namespace detail

class Value {
 public:
  Value() = default;

  static Value constant(Shape shape, std::vector<double> data);
  static Value parameter(Shape shape, std::vector<double> data);
  static Value zeros(Shape shape, bool requires_grad = false);
  static Value scalar(double x, bool requires_grad = false);
  // Rank-1 constant.
  static Value vector(std::vector<double> data, bool requires_grad = false);
  // Rank-2 constant from rows of equal length.
  static Value matrix(const std::vector<std::vector<double>>& rows,
                      bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  // Rank-2: shape[0]; rank 0/1: 1.
  std::size_t rows() const;
  // Size of the last axis (1 for scalars).
  std::size_t cols() const;

  std::span<double> data() { return node_->data; }
  std::span<const double> data() const { return node_->data; }
  // Empty span if no gradient has been accumulated yet.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  double item() const;
  double at(std::size_t i) const { return node_->data[i]; }
  double at(std::size_t r, std::size_t c) const {
    return node_->data[r * cols() + c];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad();

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  friend Value make_result(Shape, std::vector<double>,
                           std::vector<Value> const&,
                           std::function<void(detail::Node&)>);
  explicit Value(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
};

// Creates an op result. The backward rule is attached only when recording is
// enabled and at least one parent requires a gradient.
Value make_result(Shape shape, std::vector<double> data,
                  std::vector<Value> const& parents,
                  std::function<void(detail::Node&)> backward);

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_recording_enabled();

// Number of stochastic ops (active dropout) executed on this thread.
std::size_t stochastic_op_count();

// ---- ops ----------------------------------------------------------------

// Same shape, or bias-add: x rank 2 [r, c] plus y rank 1 [c].
Value add(const Value& x, const Value& y);
Value sub(const Value& x, const Value& y);
// Elementwise, same shape.
Value mul(const Value& x, const Value& y);
Value scale(const Value& x, double factor);
// [a, b] x [b, c] -> [a, c].
Value matmul(const Value& x, const Value& y);
Value transpose(const Value& x);
Value reshape(const Value& x, Shape shape);
// Rank 1 along axis 0, rank 2 along axis 0 (rows) or 1 (columns).
Value concat(const std::vector<Value>& parts, std::size_t axis);
// Half-open [begin, end) along `axis`.
Value slice(const Value& x, std::size_t axis, std::size_t begin,
            std::size_t end);
// Row gather: table [n, d], ids -> [ids.size(), d].
Value embedding_lookup(const Value& table, std::span<const int> ids);
// axis is 0 or 1 for rank 2; ignored for rank 1. Max-subtracted.
Value softmax(const Value& x, std::size_t axis);
Value log_softmax(const Value& x, std::size_t axis);
// Natural log of max(x, 1e-12).
Value log(const Value& x);
Value exp(const Value& x);
// Mean / sum over all elements, returned as a scalar.
Value mean(const Value& x);
Value sum(const Value& x);
Value relu(const Value& x);
// Exact (erf) form.
Value gelu(const Value& x);
Value sigmoid(const Value& x);
// Over the last axis; gamma and beta have shape [cols].
Value layer_norm(const Value& x, const Value& gamma, const Value& beta,
                 double eps = 1e-5);
// Inverted dropout. p == 0 or rng == nullptr is the identity.
Value dropout(const Value& x, double p, Rng* rng);

enum class Reduction { kMean, kSum };
// logits [n, c] (or [c] with one target); natural-log negative likelihood.
Value cross_entropy(const Value& logits, std::span<const int> targets,
                    Reduction reduction = Reduction::kMean);
// -y log p - (1 - y) log(1 - p), p clamped to [1e-12, 1 - 1e-12]. p scalar.
Value binary_cross_entropy(const Value& prob, double label);
// Divides each row (rank 2) or the vector (rank 1) by its L2 norm.
Value l2_normalize(const Value& x);
// Cosine of two equal-shape rank-1 vectors, as a scalar.
Value cosine_similarity(const Value& a, const Value& b);
// Row-pairwise cosine similarity: [n, d] x [m, d] -> [n, m].
Value pairwise_cosine(const Value& a, const Value& b);

// ---- autodiff -------------------------------------------------------------

// Seeds root with 1 and accumulates into every reachable leaf that requires a
// gradient. Root must hold exactly one element.
void backward(const Value& root);

// Max over coordinates of |analytic - central difference| /
// max(1, |central difference|). `f` must be deterministic; a stochastic op
// inside `f` raises ContractError. `x` must be a parameter leaf.
double grad_check(const std::function<Value(const Value&)>& f, Value x,
                  double h = 1e-5);

}  // namespace noiselab

#endif  // NOISELAB_TENSOR_H_
