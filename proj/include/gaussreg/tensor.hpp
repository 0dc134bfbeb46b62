// Copyright 2026 The gaussreg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/*
 * Dense row-major tensors and a define-by-run reverse-mode autodiff tape.
 *
 * A Graph records every primitive executed through it. Values live inside
 * the graph; callers hold Var handles. backward() walks the record in exact
 * reverse order, so gradients are deterministic and fan-out accumulates
 * additively. A Graph is built per forward pass and thrown away afterwards.
 */

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gaussreg/error.hpp"

namespace gaussreg {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

/// Overflow-safe log(1 + e^x).
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

/// Inverse of softplus for y > 0: log(e^y - 1).
inline double softplus_inverse(double y) {
  if (!(y > 0.0)) throw DomainError(detail::concat("softplus_inverse: argument ", y, " is not positive"));
  return y > 30.0 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

class Tensor {
 public:
  /// Scalar zero.
  Tensor() : data_(1, 0.0) {}

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto d : shape_) {
      if (d == 0) throw DimensionError("Tensor: dimensions must be positive, got " + shape_str(shape_));
    }
    if (shape_numel(shape_) != data_.size()) {
      throw DimensionError(detail::concat("Tensor: shape ", shape_str(shape_), " needs ", shape_numel(shape_),
                                          " values, got ", data_.size()));
    }
  }

  static Tensor zeros(Shape shape) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
  }
  static Tensor filled(Shape shape, double value) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
  }
  static Tensor scalar(double v) { return Tensor(Shape{}, {v}); }
  static Tensor vector(std::vector<double> v) {
    const auto n = v.size();
    return Tensor(Shape{n}, std::move(v));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor(Shape{rows, cols}, std::move(v));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  /// Rows and columns of a rank-2 tensor; a rank-1 tensor is a single row.
  std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return rank() == 0 ? 1 : shape_.back(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<const double> row(std::size_t r) const { return std::span<const double>(data_).subspan(r * cols(), cols()); }
  std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * cols(), cols()); }

  /// Scalar value of a one-element tensor.
  double item() const {
    if (data_.size() != 1) throw DimensionError("Tensor::item on tensor of shape " + shape_str(shape_));
    return data_[0];
  }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  /// Gradient from the most recent backward pass, same layout as data().
  const std::optional<std::vector<double>>& grad() const { return grad_; }
  std::optional<std::vector<double>>& grad() { return grad_; }
  void set_grad(std::vector<double> g) {
    if (g.size() != data_.size()) throw DimensionError("Tensor::set_grad: size mismatch");
    grad_ = std::move(g);
  }
  void clear_grad() { grad_.reset(); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

 private:
  Shape shape_;
  std::vector<double> data_;
  bool requires_grad_ = false;
  std::optional<std::vector<double>> grad_;
};

enum class OpKind {
  leaf,
  add,
  sub,
  mul,
  matmul,
  broadcast_add_row,
  tanh,
  relu,
  exp,
  log,
  square,
  softplus,
  reduce_sum,
  reduce_mean,
  scale_by_constant,
  shift_by_constant,
  slice_cols,
};

constexpr std::string_view op_name(OpKind k) {
  switch (k) {
    case OpKind::leaf: return "leaf";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::matmul: return "matmul";
    case OpKind::broadcast_add_row: return "broadcast_add_row";
    case OpKind::tanh: return "tanh";
    case OpKind::relu: return "relu";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::square: return "square";
    case OpKind::softplus: return "softplus";
    case OpKind::reduce_sum: return "reduce_sum";
    case OpKind::reduce_mean: return "reduce_mean";
    case OpKind::scale_by_constant: return "scale_by_constant";
    case OpKind::shift_by_constant: return "shift_by_constant";
    case OpKind::slice_cols: return "slice_cols";
  }
  return "?";
}

constexpr std::size_t op_arity(OpKind k) {
  switch (k) {
    case OpKind::leaf: return 0;
    case OpKind::add:
    case OpKind::sub:
    case OpKind::mul:
    case OpKind::matmul:
    case OpKind::broadcast_add_row: return 2;
    default: return 1;
  }
}

/// Non-tensor arguments: the constant for scale/shift, the column range for
/// slice_cols.
struct OpParams {
  double constant = 0.0;
  std::size_t begin = 0;
  std::size_t count = 0;
};

/// Handle to a value recorded on a Graph.
struct Var {
  std::size_t id = 0;
};

class Graph {
 public:
  explicit Graph(bool check_finite = true) : check_finite_(check_finite) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  Var input(Tensor value, bool requires_grad = false) {
    if (check_finite_ && !value.all_finite()) throw NumericError("Graph::input: non-finite value");
    value.set_requires_grad(requires_grad);
    value.clear_grad();
    nodes_.push_back(Node{OpKind::leaf, {}, {}, std::move(value)});
    return Var{nodes_.size() - 1};
  }
  Var parameter(Tensor value) { return input(std::move(value), true); }

  /// Executes one primitive and records it.
  Var apply(OpKind kind, std::span<const Var> in, OpParams params = {}) {
    if (kind == OpKind::leaf) throw std::invalid_argument("Graph::apply: use input() for leaves");
    if (in.size() != op_arity(kind)) {
      throw std::invalid_argument(detail::concat(op_name(kind), ": expected ", op_arity(kind), " inputs, got ", in.size()));
    }
    if (backward_done_) throw std::logic_error("Graph::apply: graph already differentiated; call reset()");
    std::array<std::size_t, 2> ids{0, 0};
    bool needs_grad = false;
    for (std::size_t i = 0; i < in.size(); ++i) {
      check_var(in[i]);
      ids[i] = in[i].id;
      needs_grad = needs_grad || nodes_[in[i].id].value.requires_grad();
    }
    Tensor out = forward(kind, ids, params);
    if (check_finite_ && !out.all_finite()) {
      throw NumericError(detail::concat(op_name(kind), ": non-finite output (node ", nodes_.size(), ")"));
    }
    out.set_requires_grad(needs_grad);
    nodes_.push_back(Node{kind, ids, params, std::move(out)});
    return Var{nodes_.size() - 1};
  }

  Var add(Var a, Var b) { return apply2(OpKind::add, a, b); }
  Var sub(Var a, Var b) { return apply2(OpKind::sub, a, b); }
  Var mul(Var a, Var b) { return apply2(OpKind::mul, a, b); }
  Var matmul(Var a, Var b) { return apply2(OpKind::matmul, a, b); }
  Var add_row(Var a, Var row) { return apply2(OpKind::broadcast_add_row, a, row); }
  Var tanh(Var a) { return apply1(OpKind::tanh, a); }
  Var relu(Var a) { return apply1(OpKind::relu, a); }
  Var exp(Var a) { return apply1(OpKind::exp, a); }
  Var log(Var a) { return apply1(OpKind::log, a); }
  Var square(Var a) { return apply1(OpKind::square, a); }
  Var softplus(Var a) { return apply1(OpKind::softplus, a); }
  Var sum(Var a) { return apply1(OpKind::reduce_sum, a); }
  Var mean(Var a) { return apply1(OpKind::reduce_mean, a); }
  Var scale(Var a, double c) { return apply1(OpKind::scale_by_constant, a, OpParams{c}); }
  Var shift(Var a, double c) { return apply1(OpKind::shift_by_constant, a, OpParams{c}); }
  Var slice_cols(Var a, std::size_t begin, std::size_t count) {
    return apply1(OpKind::slice_cols, a, OpParams{0.0, begin, count});
  }

  /// The returned reference is invalidated by the next recorded operation.
  const Tensor& value(Var v) const {
    check_var(v);
    return nodes_[v.id].value;
  }
  OpKind kind(Var v) const {
    check_var(v);
    return nodes_[v.id].kind;
  }
  std::size_t size() const { return nodes_.size(); }
  bool differentiated() const { return backward_done_; }

  /// Gradient of the last backward() loss with respect to v.
  Tensor grad(Var v) const {
    check_var(v);
    const auto& t = nodes_[v.id].value;
    if (!backward_done_) throw std::logic_error("Graph::grad: backward() has not run");
    if (!t.grad()) return Tensor::zeros(t.shape());
    return Tensor(t.shape(), *t.grad());
  }

  /// Reverse pass from a one-element loss. Fills the gradient of every node
  /// that depends on a requires_grad leaf.
  void backward(Var loss) {
    check_var(loss);
    if (backward_done_) throw std::logic_error("Graph::backward: called twice without reset()");
    const auto& lv = nodes_[loss.id].value;
    if (lv.size() != 1 || lv.rank() > 1) {
      throw DimensionError("Graph::backward: loss must have shape [] or [1], got " + shape_str(lv.shape()));
    }
    backward_done_ = true;
    for (std::size_t i = 0; i <= loss.id; ++i) {
      auto& t = nodes_[i].value;
      if (t.requires_grad()) {
        t.set_grad(std::vector<double>(t.size(), 0.0));
      } else {
        t.clear_grad();
      }
    }
    if (!lv.requires_grad()) return;
    grad_ref(loss.id)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      if (nodes_[i].kind == OpKind::leaf || !nodes_[i].value.requires_grad()) continue;
      propagate(i);
    }
  }

  void reset() {
    nodes_.clear();
    backward_done_ = false;
  }

 private:
  struct Node {
    OpKind kind;
    std::array<std::size_t, 2> inputs;
    OpParams params;
    Tensor value;
  };

  Var apply1(OpKind k, Var a, OpParams p = {}) {
    const std::array<Var, 1> in{a};
    return apply(k, in, p);
  }
  Var apply2(OpKind k, Var a, Var b) {
    const std::array<Var, 2> in{a, b};
    return apply(k, in);
  }

  void check_var(Var v) const {
    if (v.id >= nodes_.size()) throw std::out_of_range("Graph: Var does not belong to this graph");
  }

  // backward() installs a gradient vector on every requires_grad node first.
  std::vector<double>& grad_ref(std::size_t id) { return *nodes_[id].value.grad(); }

  [[noreturn]] static void shape_error(OpKind k, const Tensor& a, const Tensor& b) {
    throw DimensionError(detail::concat(op_name(k), ": incompatible shapes ", shape_str(a.shape()), " and ",
                                        shape_str(b.shape())));
  }

  Tensor forward(OpKind k, const std::array<std::size_t, 2>& ids, const OpParams& p) const {
    const Tensor& a = nodes_[ids[0]].value;
    switch (k) {
      case OpKind::add:
      case OpKind::sub:
      case OpKind::mul: {
        const Tensor& b = nodes_[ids[1]].value;
        if (a.shape() != b.shape()) shape_error(k, a, b);
        std::vector<double> out(a.size());
        const auto x = a.data();
        const auto y = b.data();
        if (k == OpKind::add) {
          for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
        } else if (k == OpKind::sub) {
          for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
        } else {
          for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
        }
        return Tensor(a.shape(), std::move(out));
      }
      case OpKind::matmul: {
        const Tensor& b = nodes_[ids[1]].value;
        if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) shape_error(k, a, b);
        const std::size_t n = a.rows(), inner = a.cols(), m = b.cols();
        std::vector<double> out(n * m, 0.0);
        const auto x = a.data();
        const auto y = b.data();
        for (std::size_t i = 0; i < n; ++i) {
          double* orow = out.data() + i * m;
          for (std::size_t q = 0; q < inner; ++q) {
            const double aiq = x[i * inner + q];
            const double* brow = y.data() + q * m;
            for (std::size_t j = 0; j < m; ++j) orow[j] += aiq * brow[j];
          }
        }
        return Tensor(Shape{n, m}, std::move(out));
      }
      case OpKind::broadcast_add_row: {
        const Tensor& b = nodes_[ids[1]].value;
        const bool row_ok = (b.rank() == 1 || (b.rank() == 2 && b.rows() == 1)) && b.size() == a.cols();
        if (a.rank() != 2 || !row_ok) shape_error(k, a, b);
        std::vector<double> out(a.values());
        const std::size_t m = a.cols();
        for (std::size_t i = 0; i < a.rows(); ++i) {
          for (std::size_t j = 0; j < m; ++j) out[i * m + j] += b[j];
        }
        return Tensor(a.shape(), std::move(out));
      }
      case OpKind::tanh: return map(a, [](double v) { return std::tanh(v); });
      case OpKind::relu: return map(a, [](double v) { return v > 0.0 ? v : 0.0; });
      case OpKind::exp: return map(a, [](double v) { return std::exp(v); });
      case OpKind::log:
        for (double v : a.data()) {
          if (!(v > 0.0)) throw DomainError(detail::concat("log: non-positive argument ", v));
        }
        return map(a, [](double v) { return std::log(v); });
      case OpKind::square: return map(a, [](double v) { return v * v; });
      case OpKind::softplus: return map(a, [](double v) { return gaussreg::softplus(v); });
      case OpKind::reduce_sum:
      case OpKind::reduce_mean: {
        double s = 0.0;
        for (double v : a.data()) s += v;
        if (k == OpKind::reduce_mean) s /= static_cast<double>(a.size());
        return Tensor::scalar(s);
      }
      case OpKind::scale_by_constant: return map(a, [c = p.constant](double v) { return c * v; });
      case OpKind::shift_by_constant: return map(a, [c = p.constant](double v) { return v + c; });
      case OpKind::slice_cols: {
        if (a.rank() != 2 || p.count == 0 || p.begin + p.count > a.cols()) {
          throw DimensionError(detail::concat("slice_cols: columns [", p.begin, ",", p.begin + p.count,
                                              ") out of range for shape ", shape_str(a.shape())));
        }
        std::vector<double> out;
        out.reserve(a.rows() * p.count);
        for (std::size_t i = 0; i < a.rows(); ++i) {
          const auto r = a.row(i);
          out.insert(out.end(), r.begin() + p.begin, r.begin() + p.begin + p.count);
        }
        return Tensor(Shape{a.rows(), p.count}, std::move(out));
      }
      case OpKind::leaf: break;
    }
    throw std::logic_error("Graph::forward: unhandled op");
  }

  template <typename F>
  static Tensor map(const Tensor& a, F f) {
    std::vector<double> out(a.size());
    const auto x = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
    return Tensor(a.shape(), std::move(out));
  }

  void propagate(std::size_t id) {
    const Node& node = nodes_[id];
    const std::vector<double>& g = *node.value.grad();
    const Tensor& out = node.value;
    const Tensor& a = nodes_[node.inputs[0]].value;
    const bool ga_on = a.requires_grad();
    std::vector<double>* ga = ga_on ? &grad_ref(node.inputs[0]) : nullptr;

    auto unary = [&](auto local) {
      if (!ga) return;
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * local(i);
    };

    switch (node.kind) {
      case OpKind::add:
      case OpKind::sub:
      case OpKind::mul: {
        const Tensor& b = nodes_[node.inputs[1]].value;
        std::vector<double>* gb = b.requires_grad() ? &grad_ref(node.inputs[1]) : nullptr;
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (node.kind == OpKind::mul) {
            if (ga) (*ga)[i] += g[i] * b[i];
            if (gb) (*gb)[i] += g[i] * a[i];
          } else {
            if (ga) (*ga)[i] += g[i];
            if (gb) (*gb)[i] += node.kind == OpKind::add ? g[i] : -g[i];
          }
        }
        break;
      }
      case OpKind::matmul: {
        const Tensor& b = nodes_[node.inputs[1]].value;
        std::vector<double>* gb = b.requires_grad() ? &grad_ref(node.inputs[1]) : nullptr;
        const std::size_t n = a.rows(), inner = a.cols(), m = b.cols();
        for (std::size_t i = 0; i < n; ++i) {
          const double* grow = g.data() + i * m;
          for (std::size_t q = 0; q < inner; ++q) {
            const double* brow = b.data().data() + q * m;
            if (ga) {
              double s = 0.0;
              for (std::size_t j = 0; j < m; ++j) s += grow[j] * brow[j];
              (*ga)[i * inner + q] += s;
            }
            if (gb) {
              const double aiq = a[i * inner + q];
              double* gbrow = gb->data() + q * m;
              for (std::size_t j = 0; j < m; ++j) gbrow[j] += aiq * grow[j];
            }
          }
        }
        break;
      }
      case OpKind::broadcast_add_row: {
        const Tensor& b = nodes_[node.inputs[1]].value;
        std::vector<double>* gb = b.requires_grad() ? &grad_ref(node.inputs[1]) : nullptr;
        const std::size_t m = a.cols();
        for (std::size_t i = 0; i < a.rows(); ++i) {
          for (std::size_t j = 0; j < m; ++j) {
            if (ga) (*ga)[i * m + j] += g[i * m + j];
            if (gb) (*gb)[j] += g[i * m + j];
          }
        }
        break;
      }
      case OpKind::tanh: unary([&](std::size_t i) { return 1.0 - out[i] * out[i]; }); break;
      case OpKind::relu: unary([&](std::size_t i) { return a[i] > 0.0 ? 1.0 : 0.0; }); break;
      case OpKind::exp: unary([&](std::size_t i) { return out[i]; }); break;
      case OpKind::log: unary([&](std::size_t i) { return 1.0 / a[i]; }); break;
      case OpKind::square: unary([&](std::size_t i) { return 2.0 * a[i]; }); break;
      case OpKind::softplus: unary([&](std::size_t i) { return sigmoid(a[i]); }); break;
      case OpKind::scale_by_constant: unary([c = node.params.constant](std::size_t) { return c; }); break;
      case OpKind::shift_by_constant: unary([](std::size_t) { return 1.0; }); break;
      case OpKind::reduce_sum:
      case OpKind::reduce_mean: {
        if (!ga) break;
        const double scale = node.kind == OpKind::reduce_mean ? 1.0 / static_cast<double>(a.size()) : 1.0;
        const double gv = g[0] * scale;
        for (auto& v : *ga) v += gv;
        break;
      }
      case OpKind::slice_cols: {
        if (!ga) break;
        const std::size_t m = a.cols(), c = node.params.count, b0 = node.params.begin;
        for (std::size_t i = 0; i < a.rows(); ++i) {
          for (std::size_t j = 0; j < c; ++j) (*ga)[i * m + b0 + j] += g[i * c + j];
        }
        break;
      }
      case OpKind::leaf: break;
    }
  }

  std::vector<Node> nodes_;
  bool check_finite_ = true;
  bool backward_done_ = false;
};

/// Builds a scalar from one tensor argument on a fresh graph.
using ScalarFunction = std::function<Var(Graph&, Var)>;

/// Compares the autodiff gradient of f at point against central
/// differences with step h. Returns the largest
/// |analytic - numeric| / max(1, |analytic|) over coordinates.
inline double finite_diff_check(const ScalarFunction& f, const Tensor& point, double h) {
  if (!(h > 0.0)) throw DomainError(detail::concat("finite_diff_check: step must be positive, got ", h));

  Graph g;
  const Var x = g.parameter(point);
  const Var loss = f(g, x);
  g.backward(loss);
  const Tensor analytic = g.grad(x);

  auto eval = [&](const Tensor& at) {
    Graph local;
    const Var xv = local.input(at);
    const double v = local.value(f(local, xv)).item();
    if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite function value");
    return v;
  };

  double worst = 0.0;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + h;
    const double up = eval(probe);
    probe[i] = point[i] - h;
    const double down = eval(probe);
    probe[i] = point[i];
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace gaussreg
