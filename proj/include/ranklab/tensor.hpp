/*
 * Copyright 2026 The ranklab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ranklab/common.hpp"

namespace ranklab {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += " x ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace detail {

struct TensorStorage {
  Shape shape;
  std::vector<double> value; // row-major
  std::vector<double> grad;  // empty until backward populates it
  bool requires_grad = false;
};

} // namespace detail

/// Dense row-major tensor of doubles. Copies share storage (handle
/// semantics); use clone() for a deep copy.
class Tensor {
public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false) {
    check(numel(shape) == data.size(), "tensor: shape ", shape_str(shape),
          " does not match data length ", data.size());
    s_ = std::make_shared<detail::TensorStorage>();
    s_->shape = std::move(shape);
    s_->value = std::move(data);
    s_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> v(numel(shape), 0.0);
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    std::vector<double> v(numel(shape), value);
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return Tensor(Shape{1, 1}, {value}, requires_grad);
  }

  static Tensor randn(Shape shape, Rng& rng, double stddev,
                      bool requires_grad = false) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> v(numel(shape));
    for (double& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }

  bool defined() const { return s_ != nullptr; }
  const Shape& shape() const { return s_->shape; }
  std::size_t size() const { return s_->value.size(); }
  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool b) { s_->requires_grad = b; }

  std::size_t rows() const {
    check(s_->shape.size() == 2, "tensor: rows() needs rank 2, got ",
          shape_str(s_->shape));
    return s_->shape[0];
  }
  std::size_t cols() const {
    check(s_->shape.size() == 2, "tensor: cols() needs rank 2, got ",
          shape_str(s_->shape));
    return s_->shape[1];
  }

  std::span<double> data() { return s_->value; }
  std::span<const double> data() const { return s_->value; }

  double& at(std::size_t r, std::size_t c) { return s_->value[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const {
    return s_->value[r * cols() + c];
  }

  double item() const {
    check(size() == 1, "tensor: item() needs a scalar, got ",
          shape_str(s_->shape));
    return s_->value[0];
  }

  bool has_grad() const { return !s_->grad.empty(); }
  std::span<const double> grad() const { return s_->grad; }
  std::span<double> grad_buffer() {
    if (s_->grad.empty()) s_->grad.assign(s_->value.size(), 0.0);
    return s_->grad;
  }
  void zero_grad() {
    if (!s_->grad.empty()) s_->grad.assign(s_->value.size(), 0.0);
  }
  void drop_grad() { s_->grad.clear(); }

  Tensor clone() const {
    Tensor t(s_->shape, s_->value, s_->requires_grad);
    return t;
  }

  /// Storage identity; two handles alias iff keys are equal.
  const void* key() const { return s_.get(); }

private:
  std::shared_ptr<detail::TensorStorage> s_;
  friend class Graph;
};

/// Row-major boolean matrix, used for attention and padding masks.
struct BoolMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> cells;

  BoolMatrix() = default;
  BoolMatrix(std::size_t r, std::size_t c, bool fill = false)
      : rows(r), cols(c), cells(r * c, fill ? 1 : 0) {}

  bool at(std::size_t r, std::size_t c) const { return cells[r * cols + c]; }
  void set(std::size_t r, std::size_t c, bool v) {
    cells[r * cols + c] = v ? 1 : 0;
  }

  std::uint64_t count_true() const {
    std::uint64_t n = 0;
    for (auto b : cells) n += b;
    return n;
  }
};

/// Reverse-mode tape. Ops append records in construction order; backward
/// replays them in reverse. Construct with recording=false for inference
/// (no tape, no gradients).
class Graph {
public:
  explicit Graph(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  std::size_t node_count() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  void record(std::vector<Tensor> inputs, const Tensor& output,
              std::function<void()> backprop) {
    check(recording_, "graph: record() on a non-recording graph");
    OpNode node;
    node.inputs.reserve(inputs.size());
    for (auto& t : inputs) node.inputs.push_back(t.s_);
    node.output = output.s_;
    node.backprop = std::move(backprop);
    nodes_.push_back(std::move(node));
  }

  /// Populates grads of every requires_grad tensor reachable from loss.
  /// Tensors not on the path from loss keep their grad untouched.
  void backward(const Tensor& loss) {
    check(loss.defined() && loss.size() == 1,
          "backward: loss must be a scalar tensor");
    std::unordered_set<const void*> reachable;
    reachable.insert(loss.key());
    // Mark the sub-tape feeding the loss.
    std::vector<bool> on_path(nodes_.size(), false);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      const OpNode& n = nodes_[i];
      if (!reachable.count(n.output.get())) continue;
      on_path[i] = true;
      for (const auto& in : n.inputs)
        if (in->requires_grad) reachable.insert(in.get());
    }
    if (loss.s_->grad.empty()) loss.s_->grad.assign(1, 0.0);
    loss.s_->grad[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      if (on_path[i] && nodes_[i].backprop) nodes_[i].backprop();
    }
  }

private:
  struct OpNode {
    std::vector<std::shared_ptr<detail::TensorStorage>> inputs;
    std::shared_ptr<detail::TensorStorage> output;
    std::function<void()> backprop;
  };
  std::vector<OpNode> nodes_;
  bool recording_;
};

namespace detail {

// c(m x n) += a(m x k) * b(k x n)
inline void mm(const double* a, std::size_t m, std::size_t k, const double* b,
               std::size_t n, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c(m x n) += a^T * b where a is (k x m), b is (k x n)
inline void mm_atb(const double* a, std::size_t k, std::size_t m,
                   const double* b, std::size_t n, double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = ap[i];
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c(m x n) += a * b^T where a is (m x k), b is (n x k)
inline void mm_abt(const double* a, std::size_t m, std::size_t k,
                   const double* b, std::size_t n, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

inline bool want_grad(const Graph& g, std::initializer_list<const Tensor*> ts) {
  if (!g.recording()) return false;
  for (const Tensor* t : ts)
    if (t->requires_grad()) return true;
  return false;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Differentiable ops. Each validates shapes, computes the forward value and,
// when the graph records and any input requires grad, registers the matching
// backward rule.
// ---------------------------------------------------------------------------

inline Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
  check(a.shape().size() == 2 && b.shape().size() == 2,
        "matmul: expects rank-2 tensors, got ", shape_str(a.shape()), " and ",
        shape_str(b.shape()));
  check(a.cols() == b.rows(), "matmul: inner dimensions differ: ",
        shape_str(a.shape()), " vs ", shape_str(b.shape()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n});
  detail::mm(a.data().data(), m, k, b.data().data(), n, out.data().data());
  if (detail::want_grad(g, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor ca = a, cb = b, co = out;
    g.record({a, b}, out, [ca, cb, co, m, k, n]() mutable {
      std::span<const double> go = co.grad();
      if (ca.requires_grad())
        detail::mm_abt(go.data(), m, n, cb.data().data(), k,
                       ca.grad_buffer().data());
      if (cb.requires_grad())
        detail::mm_atb(ca.data().data(), m, k, go.data(), n,
                       cb.grad_buffer().data());
    });
  }
  return out;
}

inline Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "add: shapes differ: ", shape_str(a.shape()),
        " vs ", shape_str(b.shape()));
  Tensor out = Tensor::zeros(a.shape());
  auto av = a.data(), bv = b.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  if (detail::want_grad(g, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor ca = a, cb = b, co = out;
    g.record({a, b}, out, [ca, cb, co]() mutable {
      auto go = co.grad();
      if (ca.requires_grad()) {
        auto ga = ca.grad_buffer();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (cb.requires_grad()) {
        auto gb = cb.grad_buffer();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
      }
    });
  }
  return out;
}

inline Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "mul: shapes differ: ", shape_str(a.shape()),
        " vs ", shape_str(b.shape()));
  Tensor out = Tensor::zeros(a.shape());
  auto av = a.data(), bv = b.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  if (detail::want_grad(g, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor ca = a, cb = b, co = out;
    g.record({a, b}, out, [ca, cb, co]() mutable {
      auto go = co.grad();
      if (ca.requires_grad()) {
        auto ga = ca.grad_buffer();
        auto bv2 = cb.data();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv2[i];
      }
      if (cb.requires_grad()) {
        auto gb = cb.grad_buffer();
        auto av2 = ca.data();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av2[i];
      }
    });
  }
  return out;
}

inline Tensor scale(Graph& g, const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  auto av = a.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
  if (detail::want_grad(g, {&a})) {
    out.set_requires_grad(true);
    Tensor ca = a, co = out;
    g.record({a}, out, [ca, co, c]() mutable {
      auto go = co.grad();
      auto ga = ca.grad_buffer();
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * c;
    });
  }
  return out;
}

/// x (R x C) + row vector b (1 x C or flat C), broadcast over rows.
inline Tensor add_rowvec(Graph& g, const Tensor& x, const Tensor& b) {
  const std::size_t r = x.rows(), c = x.cols();
  check(b.size() == c, "add_rowvec: vector length ", b.size(),
        " does not match columns of ", shape_str(x.shape()));
  Tensor out = Tensor::zeros(x.shape());
  auto xv = x.data(), bv = b.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) ov[i * c + j] = xv[i * c + j] + bv[j];
  if (detail::want_grad(g, {&x, &b})) {
    out.set_requires_grad(true);
    Tensor cx = x, cb = b, co = out;
    g.record({x, b}, out, [cx, cb, co, r, c]() mutable {
      auto go = co.grad();
      if (cx.requires_grad()) {
        auto gx = cx.grad_buffer();
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
      }
      if (cb.requires_grad()) {
        auto gb = cb.grad_buffer();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gb[j] += go[i * c + j];
      }
    });
  }
  return out;
}

/// Row-wise softmax over scores (R x C) restricted to allowed positions.
/// mask is R x C, or 1 x C broadcast to every row. Disallowed positions get
/// probability exactly 0; each row must have at least one allowed entry.
/// Implemented by adding a large negative constant before exponentiation
/// (the shifted exp underflows to +0.0) and zeroing masked cells after
/// normalization, so the exact-zero contract holds bit-for-bit.
inline Tensor masked_softmax(Graph& g, const Tensor& scores,
                             const BoolMatrix& mask) {
  constexpr double kNeg = 1e9;
  const std::size_t r = scores.rows(), c = scores.cols();
  check(mask.cols == c && (mask.rows == r || mask.rows == 1),
        "masked_softmax: mask ", mask.rows, "x", mask.cols,
        " incompatible with scores ", shape_str(scores.shape()));
  const auto mask_at = [&mask](std::size_t i, std::size_t j) {
    return mask.rows == 1 ? mask.at(0, j) : mask.at(i, j);
  };
  for (std::size_t i = 0; i < (mask.rows == 1 ? 1 : r); ++i) {
    bool any = false;
    for (std::size_t j = 0; j < c && !any; ++j) any = mask.at(i, j);
    check(any, "masked_softmax: mask row ", i, " has no allowed entry");
  }
  Tensor out = Tensor::zeros(scores.shape());
  auto sv = scores.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = sv.data() + i * c;
    double* orow = ov.data() + i * c;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      const double v = mask_at(i, j) ? row[j] : row[j] - kNeg;
      if (v > mx) mx = v;
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double v = mask_at(i, j) ? row[j] : row[j] - kNeg;
      orow[j] = std::exp(v - mx);
      denom += orow[j];
    }
    for (std::size_t j = 0; j < c; ++j) {
      orow[j] = mask_at(i, j) ? orow[j] / denom : 0.0;
    }
  }
  if (detail::want_grad(g, {&scores})) {
    out.set_requires_grad(true);
    Tensor cs = scores, co = out;
    g.record({scores}, out, [cs, co, r, c]() mutable {
      auto go = co.grad();
      auto y = co.data();
      auto gs = cs.grad_buffer();
      for (std::size_t i = 0; i < r; ++i) {
        const double* yr = y.data() + i * c;
        const double* gr = go.data() + i * c;
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += yr[j] * gr[j];
        double* out_g = gs.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) out_g[j] += yr[j] * (gr[j] - dot);
      }
    });
  }
  return out;
}

/// Per-row layer normalization with learned gain/bias (both length C).
inline Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gamma,
                         const Tensor& beta, double eps = 1e-5) {
  const std::size_t r = x.rows(), c = x.cols();
  check(gamma.size() == c && beta.size() == c,
        "layer_norm: gain/bias length must equal columns of ",
        shape_str(x.shape()));
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> xhat(r * c);
  std::vector<double> inv_std(r);
  auto xv = x.data();
  auto gv = gamma.data(), bv = beta.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xv.data() + i * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += row[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const double xh = (row[j] - mean) * is;
      xhat[i * c + j] = xh;
      ov[i * c + j] = gv[j] * xh + bv[j];
    }
  }
  if (detail::want_grad(g, {&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    Tensor cx = x, cg = gamma, cb = beta, co = out;
    g.record({x, gamma, beta}, out,
             [cx, cg, cb, co, r, c, xhat = std::move(xhat),
              inv_std = std::move(inv_std)]() mutable {
               auto go = co.grad();
               auto gv2 = cg.data();
               if (cg.requires_grad()) {
                 auto gg = cg.grad_buffer();
                 for (std::size_t i = 0; i < r; ++i)
                   for (std::size_t j = 0; j < c; ++j)
                     gg[j] += go[i * c + j] * xhat[i * c + j];
               }
               if (cb.requires_grad()) {
                 auto gb = cb.grad_buffer();
                 for (std::size_t i = 0; i < r; ++i)
                   for (std::size_t j = 0; j < c; ++j) gb[j] += go[i * c + j];
               }
               if (cx.requires_grad()) {
                 auto gx = cx.grad_buffer();
                 const double cn = static_cast<double>(c);
                 for (std::size_t i = 0; i < r; ++i) {
                   const double* gr = go.data() + i * c;
                   const double* xh = xhat.data() + i * c;
                   double sum_dy = 0.0, sum_dy_xh = 0.0;
                   for (std::size_t j = 0; j < c; ++j) {
                     const double dy = gr[j] * gv2[j];
                     sum_dy += dy;
                     sum_dy_xh += dy * xh[j];
                   }
                   for (std::size_t j = 0; j < c; ++j) {
                     const double dy = gr[j] * gv2[j];
                     gx[i * c + j] += inv_std[i] * (dy - sum_dy / cn -
                                                    xh[j] * sum_dy_xh / cn);
                   }
                 }
               }
             });
  }
  return out;
}

inline Tensor gelu(Graph& g, const Tensor& x) {
  constexpr double kInvSqrt2 = 0.7071067811865476;   // 1/sqrt(2)
  constexpr double kInvSqrt2Pi = 0.3989422804014327; // 1/sqrt(2*pi)
  Tensor out = Tensor::zeros(x.shape());
  auto xv = x.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i)
    ov[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * kInvSqrt2));
  if (detail::want_grad(g, {&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    g.record({x}, out, [cx, co]() mutable {
      auto go = co.grad();
      auto xv2 = cx.data();
      auto gx = cx.grad_buffer();
      for (std::size_t i = 0; i < go.size(); ++i) {
        const double v = xv2[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        gx[i] += go[i] * (cdf + v * pdf);
      }
    });
  }
  return out;
}

/// Gather rows of an embedding table (V x D) by integer id.
inline Tensor embedding(Graph& g, const Tensor& table,
                        const std::vector<int>& ids) {
  const std::size_t v = table.rows(), d = table.cols();
  for (int id : ids)
    check(id >= 0 && static_cast<std::size_t>(id) < v,
          "embedding: id ", id, " out of range [0, ", v, ")");
  Tensor out = Tensor::zeros({ids.size(), d});
  auto tv = table.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d,
                ov.data() + i * d);
  if (detail::want_grad(g, {&table})) {
    out.set_requires_grad(true);
    Tensor ct = table, co = out;
    g.record({table}, out, [ct, co, ids, d]() mutable {
      auto go = co.grad();
      auto gt = ct.grad_buffer();
      for (std::size_t i = 0; i < ids.size(); ++i) {
        double* dst = gt.data() + static_cast<std::size_t>(ids[i]) * d;
        const double* src = go.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

/// Mean cross-entropy of logits (R x C) against integer targets; target -1
/// means "ignore this row". At least one row must be counted.
inline Tensor cross_entropy(Graph& g, const Tensor& logits,
                            const std::vector<int>& targets) {
  const std::size_t r = logits.rows(), c = logits.cols();
  check(targets.size() == r, "cross_entropy: ", targets.size(),
        " targets for ", r, " rows");
  std::size_t counted = 0;
  for (int t : targets) {
    if (t < 0) continue;
    check(static_cast<std::size_t>(t) < c, "cross_entropy: target ", t,
          " out of range [0, ", c, ")");
    ++counted;
  }
  check(counted > 0, "cross_entropy: no rows with a target");
  auto lv = logits.data();
  std::vector<double> probs(r * c, 0.0); // softmax rows for counted targets
  double loss = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (targets[i] < 0) continue;
    const double* row = lv.data() + i * c;
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
    const double lse = mx + std::log(denom);
    loss += lse - row[static_cast<std::size_t>(targets[i])];
    for (std::size_t j = 0; j < c; ++j)
      probs[i * c + j] = std::exp(row[j] - lse);
  }
  loss /= static_cast<double>(counted);
  Tensor out = Tensor::scalar(loss);
  if (detail::want_grad(g, {&logits})) {
    out.set_requires_grad(true);
    Tensor cl = logits, co = out;
    g.record({logits}, out,
             [cl, co, targets, r, c, counted, probs = std::move(probs)]() mutable {
               const double go = co.grad()[0];
               auto gl = cl.grad_buffer();
               const double inv = go / static_cast<double>(counted);
               for (std::size_t i = 0; i < r; ++i) {
                 if (targets[i] < 0) continue;
                 double* grow = gl.data() + i * c;
                 const double* prow = probs.data() + i * c;
                 for (std::size_t j = 0; j < c; ++j) grow[j] += inv * prow[j];
                 grow[static_cast<std::size_t>(targets[i])] -= inv;
               }
             });
  }
  return out;
}

inline Tensor sum(Graph& g, const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = Tensor::scalar(s);
  if (detail::want_grad(g, {&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    g.record({x}, out, [cx, co]() mutable {
      const double go = co.grad()[0];
      auto gx = cx.grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go;
    });
  }
  return out;
}

inline Tensor slice_cols(Graph& g, const Tensor& x, std::size_t start,
                         std::size_t width) {
  const std::size_t r = x.rows(), c = x.cols();
  check(start + width <= c, "slice_cols: [", start, ", ", start + width,
        ") out of range for ", shape_str(x.shape()));
  Tensor out = Tensor::zeros({r, width});
  auto xv = x.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(xv.data() + i * c + start, width, ov.data() + i * width);
  if (detail::want_grad(g, {&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    g.record({x}, out, [cx, co, start, width, r, c]() mutable {
      auto go = co.grad();
      auto gx = cx.grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < width; ++j)
          gx[i * c + start + j] += go[i * width + j];
    });
  }
  return out;
}

inline Tensor concat_cols(Graph& g, const std::vector<Tensor>& parts) {
  check(!parts.empty(), "concat_cols: no inputs");
  const std::size_t r = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    check(p.rows() == r, "concat_cols: row mismatch: ", shape_str(p.shape()),
          " vs ", shape_str(parts[0].shape()));
    total += p.cols();
  }
  Tensor out = Tensor::zeros({r, total});
  auto ov = out.data();
  std::size_t off = 0;
  for (const auto& p : parts) {
    auto pv = p.data();
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(pv.data() + i * w, w, ov.data() + i * total + off);
    off += w;
  }
  bool rg = false;
  for (const auto& p : parts) rg = rg || p.requires_grad();
  if (g.recording() && rg) {
    out.set_requires_grad(true);
    Tensor co = out;
    std::vector<Tensor> cp = parts;
    g.record(parts, out, [cp, co, r, total]() mutable {
      auto go = co.grad();
      std::size_t off2 = 0;
      for (auto& p : cp) {
        const std::size_t w = p.cols();
        if (p.requires_grad()) {
          auto gp = p.grad_buffer();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < w; ++j)
              gp[i * w + j] += go[i * total + off2 + j];
        }
        off2 += w;
      }
    });
  }
  return out;
}

inline Tensor concat_rows(Graph& g, const std::vector<Tensor>& parts) {
  check(!parts.empty(), "concat_rows: no inputs");
  const std::size_t c = parts[0].cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    check(p.cols() == c, "concat_rows: column mismatch: ",
          shape_str(p.shape()), " vs ", shape_str(parts[0].shape()));
    total += p.rows();
  }
  Tensor out = Tensor::zeros({total, c});
  auto ov = out.data();
  std::size_t off = 0;
  for (const auto& p : parts) {
    auto pv = p.data();
    std::copy_n(pv.data(), pv.size(), ov.data() + off * c);
    off += p.rows();
  }
  bool rg = false;
  for (const auto& p : parts) rg = rg || p.requires_grad();
  if (g.recording() && rg) {
    out.set_requires_grad(true);
    Tensor co = out;
    std::vector<Tensor> cp = parts;
    g.record(parts, out, [cp, co, c]() mutable {
      auto go = co.grad();
      std::size_t off2 = 0;
      for (auto& p : cp) {
        if (p.requires_grad()) {
          auto gp = p.grad_buffer();
          for (std::size_t i = 0; i < gp.size(); ++i)
            gp[i] += go[off2 * c + i];
        }
        off2 += p.rows();
      }
    });
  }
  return out;
}

inline Tensor transpose(Graph& g, const Tensor& x) {
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::zeros({c, r});
  auto xv = x.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) ov[j * r + i] = xv[i * c + j];
  if (detail::want_grad(g, {&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    g.record({x}, out, [cx, co, r, c]() mutable {
      auto go = co.grad();
      auto gx = cx.grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += go[j * r + i];
    });
  }
  return out;
}

/// Mean of the selected rows of x, as a 1 x C tensor.
inline Tensor mean_rows(Graph& g, const Tensor& x,
                        const std::vector<std::size_t>& rows) {
  const std::size_t r = x.rows(), c = x.cols();
  check(!rows.empty(), "mean_rows: empty row selection");
  for (std::size_t i : rows)
    check(i < r, "mean_rows: row ", i, " out of range for ",
          shape_str(x.shape()));
  Tensor out = Tensor::zeros({1, c});
  auto xv = x.data();
  auto ov = out.data();
  for (std::size_t i : rows)
    for (std::size_t j = 0; j < c; ++j) ov[j] += xv[i * c + j];
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (std::size_t j = 0; j < c; ++j) ov[j] *= inv;
  if (detail::want_grad(g, {&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    g.record({x}, out, [cx, co, rows, c, inv]() mutable {
      auto go = co.grad();
      auto gx = cx.grad_buffer();
      for (std::size_t i : rows)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += go[j] * inv;
    });
  }
  return out;
}

/// Inverted dropout; train-mode only. rate == 0 returns the input unchanged.
inline Tensor dropout(Graph& g, const Tensor& x, double rate, Rng& rng) {
  check(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0, 1), got ",
        rate);
  if (rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<std::uint8_t> mask(x.size());
  for (auto& b : mask) b = keep(rng) ? 1 : 0;
  const double inv = 1.0 / (1.0 - rate);
  Tensor out = Tensor::zeros(x.shape());
  auto xv = x.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i)
    ov[i] = mask[i] ? xv[i] * inv : 0.0;
  if (detail::want_grad(g, {&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    g.record({x}, out, [cx, co, mask = std::move(mask), inv]() mutable {
      auto go = co.grad();
      auto gx = cx.grad_buffer();
      for (std::size_t i = 0; i < go.size(); ++i)
        if (mask[i]) gx[i] += go[i] * inv;
    });
  }
  return out;
}

} // namespace ranklab
