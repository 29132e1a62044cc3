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

#include "noiselab/tensor.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "noiselab/errors.h"

namespace noiselab {

namespace {

constexpr double kLogEps = 1e-12;
constexpr double kNormEps = 1e-12;

thread_local bool g_record = true;
thread_local std::size_t g_stochastic_ops = 0;

using detail::Node;

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " +
                   shape_string(a) + " and " + shape_string(b));
}

[[noreturn]] void shape_fail(const char* op, const Shape& a) {
  throw ShapeError(std::string(op) + ": unsupported shape " + shape_string(a));
}

// Iterates lines of a rank-1/2 tensor along `axis`: calls fn(offset, stride,
// length) once per line.
template <typename Fn>
void for_each_line(const Shape& shape, std::size_t axis, Fn&& fn) {
  if (shape.size() <= 1) {
    fn(std::size_t{0}, std::size_t{1}, shape_numel(shape));
    return;
  }
  const std::size_t r = shape[0], c = shape[1];
  if (axis == 1) {
    for (std::size_t i = 0; i < r; ++i) fn(i * c, std::size_t{1}, c);
  } else {
    for (std::size_t j = 0; j < c; ++j) fn(j, c, r);
  }
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

// ---- Value ----------------------------------------------------------------

namespace {
Value leaf(Shape shape, std::vector<double> data, bool requires_grad);
}

Value Value::constant(Shape shape, std::vector<double> data) {
  return leaf(std::move(shape), std::move(data), false);
}

Value Value::parameter(Shape shape, std::vector<double> data) {
  return leaf(std::move(shape), std::move(data), true);
}

Value Value::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Value Value::scalar(double x, bool requires_grad) {
  return leaf({}, {x}, requires_grad);
}

Value Value::vector(std::vector<double> data, bool requires_grad) {
  const auto n = data.size();
  return leaf({n}, std::move(data), requires_grad);
}

Value Value::matrix(const std::vector<std::vector<double>>& rows,
                    bool requires_grad) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows[0].size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("matrix: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return leaf({r, c}, std::move(data), requires_grad);
}

std::size_t Value::rows() const {
  return rank() == 2 ? node_->shape[0] : 1;
}

std::size_t Value::cols() const {
  return rank() == 0 ? 1 : node_->shape.back();
}

double Value::item() const {
  if (numel() != 1) {
    throw ContractError("item: expected one element, shape " +
                        shape_string(shape()));
  }
  return node_->data[0];
}

void Value::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Value make_result(Shape shape, std::vector<double> data,
                  std::vector<Value> const& parents,
                  std::function<void(detail::Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (g_record) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    if (needs) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (const auto& p : parents) node->parents.push_back(p.node_ptr());
      node->backward = std::move(backward);
    }
  }
  return Value(std::move(node));
}

namespace {
Value leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("leaf: shape " + shape_string(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " elements, got " +
                     std::to_string(data.size()));
  }
  // A leaf is an op result with no parents; mark it afterwards.
  Value v = make_result(std::move(shape), std::move(data), {}, nullptr);
  v.node()->requires_grad = requires_grad;
  return v;
}

// Gradient buffer of parent i, or nullptr if it does not need one.
double* pgrad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  return p.ensure_grad().data();
}
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_record) { g_record = false; }
NoGradGuard::~NoGradGuard() { g_record = previous_; }

bool grad_recording_enabled() { return g_record; }
std::size_t stochastic_op_count() { return g_stochastic_ops; }

// ---- elementwise ----------------------------------------------------------

Value add(const Value& x, const Value& y) {
  if (x.shape() == y.shape()) {
    std::vector<double> out(x.numel());
    const auto a = x.data(), b = y.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return make_result(x.shape(), std::move(out), {x, y}, [](Node& self) {
      for (std::size_t k = 0; k < 2; ++k) {
        if (double* g = pgrad(self, k)) {
          for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
      }
    });
  }
  if (x.rank() == 2 && y.rank() == 1 && y.shape()[0] == x.cols()) {
    const std::size_t r = x.rows(), c = x.cols();
    std::vector<double> out(x.numel());
    const auto a = x.data(), b = y.data();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a[i * c + j] + b[j];
    return make_result(x.shape(), std::move(out), {x, y}, [r, c](Node& self) {
      if (double* g = pgrad(self, 0)) {
        for (std::size_t i = 0; i < r * c; ++i) g[i] += self.grad[i];
      }
      if (double* g = pgrad(self, 1)) {
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
      }
    });
  }
  shape_fail("add", x.shape(), y.shape());
}

Value sub(const Value& x, const Value& y) {
  if (x.shape() != y.shape()) shape_fail("sub", x.shape(), y.shape());
  std::vector<double> out(x.numel());
  const auto a = x.data(), b = y.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result(x.shape(), std::move(out), {x, y}, [](Node& self) {
    if (double* g = pgrad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = pgrad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Value mul(const Value& x, const Value& y) {
  if (x.shape() != y.shape()) shape_fail("mul", x.shape(), y.shape());
  std::vector<double> out(x.numel());
  const auto a = x.data(), b = y.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result(x.shape(), std::move(out), {x, y}, [](Node& self) {
    const auto& a = self.parents[0]->data;
    const auto& b = self.parents[1]->data;
    if (double* g = pgrad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * b[i];
    }
    if (double* g = pgrad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * a[i];
    }
  });
}

Value scale(const Value& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return make_result(x.shape(), std::move(out), {x}, [factor](Node& self) {
    if (double* g = pgrad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
    }
  });
}

namespace {
// Unary elementwise op with derivative expressed through (input, output).
template <typename F, typename D>
Value unary(const Value& x, F f, D dfdx) {
  std::vector<double> out(x.numel());
  const auto a = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i]);
  return make_result(x.shape(), std::move(out), {x}, [dfdx](Node& self) {
    if (double* g = pgrad(self, 0)) {
      const auto& in = self.parents[0]->data;
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        g[i] += self.grad[i] * dfdx(in[i], self.data[i]);
    }
  });
}
}  // namespace

Value log(const Value& x) {
  return unary(
      x, [](double v) { return std::log(std::max(v, kLogEps)); },
      [](double v, double) { return v > kLogEps ? 1.0 / v : 0.0; });
}

Value exp(const Value& x) {
  return unary(
      x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Value relu(const Value& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Value gelu(const Value& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  return unary(
      x,
      [](double v) {
        return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
      },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf =
            std::exp(-0.5 * v * v) * std::numbers::inv_sqrtpi * kInvSqrt2;
        return cdf + v * pdf;
      });
}

Value sigmoid(const Value& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

// ---- shape ops ------------------------------------------------------------

Value matmul(const Value& x, const Value& y) {
  if (x.rank() != 2 || y.rank() != 2 || x.shape()[1] != y.shape()[0]) {
    shape_fail("matmul", x.shape(), y.shape());
  }
  const std::size_t m = x.shape()[0], k = x.shape()[1], n = y.shape()[1];
  std::vector<double> out(m * n, 0.0);
  const double* a = x.data().data();
  const double* b = y.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), {x, y}, [m, k, n](Node& self) {
    const double* a = self.parents[0]->data.data();
    const double* b = self.parents[1]->data.data();
    const double* go = self.grad.data();
    if (double* ga = pgrad(self, 0)) {
      // dA = dC * B^T
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = go + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = b + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (double* gb = pgrad(self, 1)) {
      // dB = A^T * dC
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = go + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = a[i * k + p];
          double* gbrow = gb + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

Value transpose(const Value& x) {
  if (x.rank() != 2) shape_fail("transpose", x.shape());
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  std::vector<double> out(r * c);
  const auto a = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
  return make_result({c, r}, std::move(out), {x}, [r, c](Node& self) {
    if (double* g = pgrad(self, 0)) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
    }
  });
}

Value reshape(const Value& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) shape_fail("reshape", x.shape(), shape);
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    if (double* g = pgrad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Value concat(const std::vector<Value>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (first.empty() || first.size() > 2 || axis >= first.size()) {
    shape_fail("concat", first);
  }
  for (const auto& p : parts) {
    if (p.rank() != first.size()) shape_fail("concat", first, p.shape());
    if (first.size() == 2 && p.shape()[1 - axis] != first[1 - axis]) {
      shape_fail("concat", first, p.shape());
    }
  }
  if (first.size() == 1) axis = 0;
  const std::size_t rows = first.size() == 2 ? first[0] : 1;
  std::vector<std::size_t> widths;  // extent along `axis` per part
  std::size_t total = 0;
  for (const auto& p : parts) {
    widths.push_back(p.shape()[axis]);
    total += p.shape()[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  std::vector<double> out(shape_numel(out_shape));
  if (axis == 0) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      std::copy(p.data().begin(), p.data().end(), out.begin() + off);
      off += p.numel();
    }
  } else {
    std::size_t col = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const auto src = parts[k].data();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < widths[k]; ++j)
          out[i * total + col + j] = src[i * widths[k] + j];
      col += widths[k];
    }
  }
  return make_result(out_shape, std::move(out), parts,
                     [axis, rows, total, widths](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         double* g = pgrad(self, k);
                         const std::size_t n = self.parents[k]->data.size();
                         if (axis == 0) {
                           if (g) {
                             for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
                           }
                           off += n;
                         } else {
                           if (g) {
                             for (std::size_t i = 0; i < rows; ++i)
                               for (std::size_t j = 0; j < widths[k]; ++j)
                                 g[i * widths[k] + j] += self.grad[i * total + off + j];
                           }
                           off += widths[k];
                         }
                       }
                     });
}

Value slice(const Value& x, std::size_t axis, std::size_t begin,
            std::size_t end) {
  if (x.rank() == 0 || axis >= x.rank() || begin > end ||
      end > x.shape()[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") on axis " + std::to_string(axis) +
                     " out of bounds for shape " + shape_string(x.shape()));
  }
  const std::size_t r = x.rows(), c = x.cols();
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  std::vector<double> out(shape_numel(out_shape));
  const auto a = x.data();
  const bool cols_axis = (x.rank() == 1) || axis == 1;
  if (cols_axis) {
    const std::size_t w = end - begin;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a[i * c + begin + j];
  } else {
    std::copy(a.begin() + begin * c, a.begin() + end * c, out.begin());
  }
  return make_result(out_shape, std::move(out), {x},
                     [r, c, begin, end, cols_axis](Node& self) {
                       double* g = pgrad(self, 0);
                       if (!g) return;
                       if (cols_axis) {
                         const std::size_t w = end - begin;
                         for (std::size_t i = 0; i < r; ++i)
                           for (std::size_t j = 0; j < w; ++j)
                             g[i * c + begin + j] += self.grad[i * w + j];
                       } else {
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           g[begin * c + i] += self.grad[i];
                       }
                     });
}

Value embedding_lookup(const Value& table, std::span<const int> ids) {
  if (table.rank() != 2) shape_fail("embedding_lookup", table.shape());
  const std::size_t n = table.shape()[0], d = table.shape()[1];
  std::vector<int> idx(ids.begin(), ids.end());
  std::vector<double> out(idx.size() * d);
  const auto a = table.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= n) {
      throw ShapeError("embedding_lookup: id " + std::to_string(idx[i]) +
                       " outside table of shape " + shape_string(table.shape()));
    }
    std::copy_n(a.begin() + idx[i] * d, d, out.begin() + i * d);
  }
  Shape shape{idx.size(), d};
  return make_result(std::move(shape), std::move(out), {table},
                     [idx = std::move(idx), d](Node& self) {
                       double* g = pgrad(self, 0);
                       if (!g) return;
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         for (std::size_t j = 0; j < d; ++j)
                           g[idx[i] * d + j] += self.grad[i * d + j];
                     });
}

// ---- reductions & normalizations ------------------------------------------

Value softmax(const Value& x, std::size_t axis) {
  if (x.rank() == 0 || x.rank() > 2 || (x.rank() == 2 && axis > 1)) {
    shape_fail("softmax", x.shape());
  }
  std::vector<double> out(x.numel());
  const auto a = x.data();
  for_each_line(x.shape(), axis, [&](std::size_t off, std::size_t st, std::size_t len) {
    double mx = a[off];
    for (std::size_t t = 1; t < len; ++t) mx = std::max(mx, a[off + t * st]);
    double z = 0.0;
    for (std::size_t t = 0; t < len; ++t) {
      out[off + t * st] = std::exp(a[off + t * st] - mx);
      z += out[off + t * st];
    }
    for (std::size_t t = 0; t < len; ++t) out[off + t * st] /= z;
  });
  Shape shape = x.shape();
  return make_result(shape, std::move(out), {x}, [shape, axis](Node& self) {
    double* g = pgrad(self, 0);
    if (!g) return;
    const auto& y = self.data;
    const auto& gy = self.grad;
    for_each_line(shape, axis, [&](std::size_t off, std::size_t st, std::size_t len) {
      double dot = 0.0;
      for (std::size_t t = 0; t < len; ++t) dot += gy[off + t * st] * y[off + t * st];
      for (std::size_t t = 0; t < len; ++t)
        g[off + t * st] += y[off + t * st] * (gy[off + t * st] - dot);
    });
  });
}

Value log_softmax(const Value& x, std::size_t axis) {
  if (x.rank() == 0 || x.rank() > 2 || (x.rank() == 2 && axis > 1)) {
    shape_fail("log_softmax", x.shape());
  }
  std::vector<double> out(x.numel());
  const auto a = x.data();
  for_each_line(x.shape(), axis, [&](std::size_t off, std::size_t st, std::size_t len) {
    double mx = a[off];
    for (std::size_t t = 1; t < len; ++t) mx = std::max(mx, a[off + t * st]);
    double z = 0.0;
    for (std::size_t t = 0; t < len; ++t) z += std::exp(a[off + t * st] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t t = 0; t < len; ++t) out[off + t * st] = a[off + t * st] - lz;
  });
  Shape shape = x.shape();
  return make_result(shape, std::move(out), {x}, [shape, axis](Node& self) {
    double* g = pgrad(self, 0);
    if (!g) return;
    const auto& y = self.data;
    const auto& gy = self.grad;
    for_each_line(shape, axis, [&](std::size_t off, std::size_t st, std::size_t len) {
      double s = 0.0;
      for (std::size_t t = 0; t < len; ++t) s += gy[off + t * st];
      for (std::size_t t = 0; t < len; ++t)
        g[off + t * st] += gy[off + t * st] - std::exp(y[off + t * st]) * s;
    });
  });
}

Value sum(const Value& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result({}, {s}, {x}, [](Node& self) {
    if (double* g = pgrad(self, 0)) {
      const std::size_t n = self.parents[0]->data.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

Value mean(const Value& x) {
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Value layer_norm(const Value& x, const Value& gamma, const Value& beta,
                 double eps) {
  if (x.rank() == 0) shape_fail("layer_norm", x.shape());
  const std::size_t r = x.rows(), c = x.cols();
  if (gamma.shape() != Shape{c}) shape_fail("layer_norm", x.shape(), gamma.shape());
  if (beta.shape() != Shape{c}) shape_fail("layer_norm", x.shape(), beta.shape());
  std::vector<double> out(r * c), xhat(r * c), rstd(r);
  const auto a = x.data(), gm = gamma.data(), bt = beta.data();
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += a[i * c + j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double dv = a[i * c + j] - mu;
      var += dv * dv;
    }
    var /= static_cast<double>(c);
    rstd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (a[i * c + j] - mu) * rstd[i];
      out[i * c + j] = gm[j] * xhat[i * c + j] + bt[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [r, c, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
        const auto& gm = self.parents[1]->data;
        const auto& gy = self.grad;
        if (double* gg = pgrad(self, 1)) {
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gg[j] += gy[i * c + j] * xhat[i * c + j];
        }
        if (double* gb = pgrad(self, 2)) {
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gb[j] += gy[i * c + j];
        }
        if (double* gx = pgrad(self, 0)) {
          const double inv_c = 1.0 / static_cast<double>(c);
          for (std::size_t i = 0; i < r; ++i) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              const double dxh = gy[i * c + j] * gm[j];
              m1 += dxh;
              m2 += dxh * xhat[i * c + j];
            }
            m1 *= inv_c;
            m2 *= inv_c;
            for (std::size_t j = 0; j < c; ++j) {
              const double dxh = gy[i * c + j] * gm[j];
              gx[i * c + j] += rstd[i] * (dxh - m1 - xhat[i * c + j] * m2);
            }
          }
        }
      });
}

Value dropout(const Value& x, double p, Rng* rng) {
  if (p <= 0.0 || rng == nullptr) return x;
  if (p >= 1.0) throw ContractError("dropout: p must be < 1");
  ++g_stochastic_ops;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = rng->bernoulli(p) ? 0.0 : keep_scale;
  std::vector<double> out(x.numel());
  const auto a = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * mask[i];
  return make_result(x.shape(), std::move(out), {x},
                     [mask = std::move(mask)](Node& self) {
                       if (double* g = pgrad(self, 0)) {
                         for (std::size_t i = 0; i < mask.size(); ++i)
                           g[i] += self.grad[i] * mask[i];
                       }
                     });
}

Value cross_entropy(const Value& logits, std::span<const int> targets,
                    Reduction reduction) {
  if (logits.rank() == 0 || logits.rank() > 2) {
    shape_fail("cross_entropy", logits.shape());
  }
  const std::size_t n = logits.rows(), c = logits.cols();
  if (targets.size() != n) {
    throw ShapeError("cross_entropy: logits " + shape_string(logits.shape()) +
                     " vs " + std::to_string(targets.size()) + " targets");
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<double> probs(n * c);
  const auto a = logits.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (tgt[i] < 0 || static_cast<std::size_t>(tgt[i]) >= c) {
      throw ShapeError("cross_entropy: target " + std::to_string(tgt[i]) +
                       " outside " + std::to_string(c) + " classes");
    }
    double mx = a[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, a[i * c + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      probs[i * c + j] = std::exp(a[i * c + j] - mx);
      z += probs[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= z;
    total += -(a[i * c + tgt[i]] - mx - std::log(z));
  }
  const double factor =
      reduction == Reduction::kMean && n > 0 ? 1.0 / static_cast<double>(n) : 1.0;
  return make_result({}, {total * factor}, {logits},
                     [n, c, factor, tgt = std::move(tgt),
                      probs = std::move(probs)](Node& self) {
                       double* g = pgrad(self, 0);
                       if (!g) return;
                       const double s = self.grad[0] * factor;
                       for (std::size_t i = 0; i < n; ++i) {
                         for (std::size_t j = 0; j < c; ++j) g[i * c + j] += s * probs[i * c + j];
                         g[i * c + tgt[i]] -= s;
                       }
                     });
}

Value binary_cross_entropy(const Value& prob, double label) {
  if (prob.numel() != 1) shape_fail("binary_cross_entropy", prob.shape());
  const double p = std::clamp(prob.data()[0], kLogEps, 1.0 - kLogEps);
  const double loss = -label * std::log(p) - (1.0 - label) * std::log(1.0 - p);
  const double raw = prob.data()[0];
  return make_result({}, {loss}, {prob}, [p, raw, label](Node& self) {
    double* g = pgrad(self, 0);
    if (!g) return;
    // Zero gradient where the clamp is active.
    if (raw <= kLogEps || raw >= 1.0 - kLogEps) return;
    g[0] += self.grad[0] * (-label / p + (1.0 - label) / (1.0 - p));
  });
}

Value l2_normalize(const Value& x) {
  if (x.rank() == 0 || x.rank() > 2) shape_fail("l2_normalize", x.shape());
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r * c), norms(r);
  const auto a = x.data();
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += a[i * c + j] * a[i * c + j];
    norms[i] = std::max(std::sqrt(s), kNormEps);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a[i * c + j] / norms[i];
  }
  return make_result(x.shape(), std::move(out), {x},
                     [r, c, norms = std::move(norms)](Node& self) {
                       double* g = pgrad(self, 0);
                       if (!g) return;
                       const auto& y = self.data;
                       for (std::size_t i = 0; i < r; ++i) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < c; ++j) dot += self.grad[i * c + j] * y[i * c + j];
                         for (std::size_t j = 0; j < c; ++j)
                           g[i * c + j] += (self.grad[i * c + j] - y[i * c + j] * dot) / norms[i];
                       }
                     });
}

Value cosine_similarity(const Value& a, const Value& b) {
  if (a.rank() != 1 || a.shape() != b.shape()) {
    shape_fail("cosine_similarity", a.shape(), b.shape());
  }
  return sum(mul(l2_normalize(a), l2_normalize(b)));
}

Value pairwise_cosine(const Value& a, const Value& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    shape_fail("pairwise_cosine", a.shape(), b.shape());
  }
  return matmul(l2_normalize(a), transpose(l2_normalize(b)));
}

// ---- autodiff -------------------------------------------------------------

void backward(const Value& root) {
  if (!root.defined() || root.numel() != 1) {
    throw ContractError("backward: root must be a scalar, got shape " +
                        (root.defined() ? shape_string(root.shape()) : "<undefined>"));
  }
  Node* r = root.node();
  if (!r->requires_grad) return;

  // Iterative post-order DFS; each node appears once in `order`.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{r, 0}};
  seen.insert(r);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
  }
  r->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward(**it);
  }
}

double grad_check(const std::function<Value(const Value&)>& f, Value x,
                  double h) {
  if (!x.requires_grad() || !x.node()->is_leaf()) {
    throw ContractError("grad_check: x must be a parameter leaf");
  }
  if (h <= 0.0) throw ContractError("grad_check: step must be positive");
  const std::size_t before = stochastic_op_count();
  x.zero_grad();
  Value y = f(x);
  if (stochastic_op_count() != before) {
    throw ContractError("grad_check: function contains a stochastic op");
  }
  if (y.numel() != 1) throw ContractError("grad_check: function must be scalar");
  backward(y);
  std::vector<double> analytic(x.numel(), 0.0);
  if (!x.grad().empty()) {
    std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
  }
  x.zero_grad();

  NoGradGuard guard;
  double worst = 0.0;
  auto data = x.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double saved = data[i];
    // Divide by the step actually taken after rounding.
    const double hi = saved + h, lo = saved - h;
    data[i] = hi;
    const double up = f(x).item();
    data[i] = lo;
    const double down = f(x).item();
    data[i] = saved;
    const double fd = (up - down) / (hi - lo);
    worst = std::max(worst, std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

}  // namespace noiselab
