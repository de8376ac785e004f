// Copyright 2026 The headflow Authors
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

// Matrix-level reverse-mode differentiation.
//
// A Graph records every operation as a node holding its value and, when any
// input requires a gradient, a closure that pushes the node's adjoint back to
// its inputs. Nodes are appended in evaluation order, so a reverse sweep over
// the node list is a valid topological order. With gradients disabled the
// same operations run without recording closures, which is the inference path.

#ifndef HEADFLOW_AUTOGRAD_HPP
#define HEADFLOW_AUTOGRAD_HPP

#include <cmath>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "headflow/errors.hpp"

namespace headflow {

template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mat = Matrix<double>;

namespace ag {

template <class S>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <class S>
class Var {
 public:
  Var() = default;
  Var(Graph<S>* g, int id) : g_(g), id_(id) {}

  const Matrix<S>& value() const { return g_->value(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  S item() const { return value()(0, 0); }
  int id() const { return id_; }
  Graph<S>& graph() const { return *g_; }
  bool valid() const { return g_ != nullptr; }

 private:
  Graph<S>* g_ = nullptr;
  int id_ = -1;
};

template <class S>
class Graph {
 public:
  using M = Matrix<S>;
  using Backward = std::function<void(Graph&, const M&)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  Var<S> constant(M v) { return push(std::move(v), nullptr, false, nullptr); }
  /// Non-owning constant; `v` must outlive the graph.
  Var<S> reference(const M& v) { return push(M(), &v, false, nullptr); }
  /// Trainable leaf owning its value.
  Var<S> variable(M v) { return push(std::move(v), nullptr, grad_enabled_, nullptr); }
  /// Trainable leaf referencing external storage (parameters). When `sink`
  /// is given, gradients are added into it instead of node storage.
  Var<S> variable_ref(const M& v, M* sink = nullptr) {
    Var<S> r = push(M(), &v, grad_enabled_, nullptr);
    nodes_.back().sink = grad_enabled_ ? sink : nullptr;
    return r;
  }

  /// Appends an operation result. `fn` is kept only when `needs_grad`.
  Var<S> emit(M v, bool needs_grad, Backward fn) {
    return push(std::move(v), nullptr, needs_grad, needs_grad ? std::move(fn) : nullptr);
  }

  template <class... Vs>
  bool needs(const Vs&... vs) const {
    return grad_enabled_ && (requires_grad(vs.id()) || ...);
  }

  const M& value(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.external ? *n.external : n.value;
  }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  template <class Expr>
  void accumulate(int id, const Eigen::MatrixBase<Expr>& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return;
    M& target = n.sink ? *n.sink : n.grad;
    if (target.size() == 0) {
      target.noalias() = g;
    } else {
      target.noalias() += g;
    }
  }

  /// Reverse sweep from a 1x1 node.
  void backward(const Var<S>& root) {
    if (root.rows() != 1 || root.cols() != 1) {
      throw InvalidArgument("backward: root must be a scalar");
    }
    Node& r = nodes_[static_cast<std::size_t>(root.id())];
    if (!r.requires_grad) return;
    r.grad = M::Ones(1, 1);
    for (int i = root.id(); i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.backward && n.grad.size() != 0) {
        n.backward(*this, n.grad);
        if (!n.leaf_storage) n.grad.resize(0, 0);
      }
    }
  }

  /// Adjoint of a node after backward(); zeros when nothing reached it.
  M grad(const Var<S>& v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id())];
    const M& gr = n.sink ? *n.sink : n.grad;
    if (gr.size() == 0) return M::Zero(v.rows(), v.cols());
    return gr;
  }

 private:
  struct Node {
    M value;
    const M* external = nullptr;
    M grad;
    M* sink = nullptr;
    bool requires_grad = false;
    bool leaf_storage = false;
    Backward backward;
  };

  Var<S> push(M v, const M* ext, bool rg, Backward fn) {
    Node n;
    n.value = std::move(v);
    n.external = ext;
    n.requires_grad = rg;
    n.leaf_storage = rg && !fn;
    n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var<S>(this, static_cast<int>(nodes_.size()) - 1);
  }

  bool grad_enabled_;
  std::deque<Node> nodes_;
};

namespace detail {
inline void require(bool ok, const char* what) {
  if (!ok) throw InvalidArgument(what);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra and elementwise arithmetic

template <class S>
Var<S> matmul(Var<S> a, Var<S> b) {
  detail::require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Graph<S>& g = a.graph();
  Matrix<S> v;
  v.noalias() = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  return g.emit(std::move(v), g.needs(a, b), [ia, ib](Graph<S>& g, const Matrix<S>& G) {
    if (g.requires_grad(ia)) g.accumulate(ia, G * g.value(ib).transpose());
    if (g.requires_grad(ib)) g.accumulate(ib, g.value(ia).transpose() * G);
  });
}

/// a * b^T
template <class S>
Var<S> matmul_nt(Var<S> a, Var<S> b) {
  detail::require(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
  Graph<S>& g = a.graph();
  Matrix<S> v;
  v.noalias() = a.value() * b.value().transpose();
  const int ia = a.id(), ib = b.id();
  return g.emit(std::move(v), g.needs(a, b), [ia, ib](Graph<S>& g, const Matrix<S>& G) {
    if (g.requires_grad(ia)) g.accumulate(ia, G * g.value(ib));
    if (g.requires_grad(ib)) g.accumulate(ib, G.transpose() * g.value(ia));
  });
}

template <class S>
Var<S> add(Var<S> a, Var<S> b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Graph<S>& g = a.graph();
  const int ia = a.id(), ib = b.id();
  return g.emit(a.value() + b.value(), g.needs(a, b), [ia, ib](Graph<S>& g, const Matrix<S>& G) {
    g.accumulate(ia, G);
    g.accumulate(ib, G);
  });
}

template <class S>
Var<S> sub(Var<S> a, Var<S> b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  Graph<S>& g = a.graph();
  const int ia = a.id(), ib = b.id();
  return g.emit(a.value() - b.value(), g.needs(a, b), [ia, ib](Graph<S>& g, const Matrix<S>& G) {
    g.accumulate(ia, G);
    g.accumulate(ib, -G);
  });
}

/// Elementwise product.
template <class S>
Var<S> mul(Var<S> a, Var<S> b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  Graph<S>& g = a.graph();
  const int ia = a.id(), ib = b.id();
  return g.emit(a.value().cwiseProduct(b.value()), g.needs(a, b),
                [ia, ib](Graph<S>& g, const Matrix<S>& G) {
                  if (g.requires_grad(ia)) g.accumulate(ia, G.cwiseProduct(g.value(ib)));
                  if (g.requires_grad(ib)) g.accumulate(ib, G.cwiseProduct(g.value(ia)));
                });
}

template <class S>
Var<S> operator+(Var<S> a, Var<S> b) { return add(a, b); }
template <class S>
Var<S> operator-(Var<S> a, Var<S> b) { return sub(a, b); }

template <class S>
Var<S> scale(Var<S> a, S s) {
  Graph<S>& g = a.graph();
  const int ia = a.id();
  return g.emit(a.value() * s, g.needs(a), [ia, s](Graph<S>& g, const Matrix<S>& G) {
    g.accumulate(ia, G * s);
  });
}

template <class S>
Var<S> add_scalar(Var<S> a, S s) {
  Graph<S>& g = a.graph();
  const int ia = a.id();
  return g.emit((a.value().array() + s).matrix(), g.needs(a),
                [ia](Graph<S>& g, const Matrix<S>& G) { g.accumulate(ia, G); });
}

/// Adds a 1 x n row to every row of a.
template <class S>
Var<S> add_row(Var<S> a, Var<S> r) {
  detail::require(r.rows() == 1 && r.cols() == a.cols(), "add_row: row shape mismatch");
  Graph<S>& g = a.graph();
  Matrix<S> v = a.value();
  v.rowwise() += r.value().row(0);
  const int ia = a.id(), ir = r.id();
  return g.emit(std::move(v), g.needs(a, r), [ia, ir](Graph<S>& g, const Matrix<S>& G) {
    g.accumulate(ia, G);
    if (g.requires_grad(ir)) g.accumulate(ir, G.colwise().sum());
  });
}

/// Multiplies every row of a elementwise by a 1 x n row.
template <class S>
Var<S> mul_row(Var<S> a, Var<S> r) {
  detail::require(r.rows() == 1 && r.cols() == a.cols(), "mul_row: row shape mismatch");
  Graph<S>& g = a.graph();
  Matrix<S> v = a.value().array().rowwise() * r.value().row(0).array();
  const int ia = a.id(), ir = r.id();
  return g.emit(std::move(v), g.needs(a, r), [ia, ir](Graph<S>& g, const Matrix<S>& G) {
    if (g.requires_grad(ia)) {
      g.accumulate(ia, (G.array().rowwise() * g.value(ir).row(0).array()).matrix());
    }
    if (g.requires_grad(ir)) g.accumulate(ir, G.cwiseProduct(g.value(ia)).colwise().sum());
  });
}

/// Linear layer: x W + b, with b a 1 x out row.
template <class S>
Var<S> linear(Var<S> x, Var<S> w, Var<S> b) {
  return add_row(matmul(x, w), b);
}

// ---------------------------------------------------------------------------
// Elementwise maps

/// y = f(x) elementwise; `df(x, y)` is dy/dx.
template <class S, class F, class DF>
Var<S> map(Var<S> a, F f, DF df) {
  Graph<S>& g = a.graph();
  Matrix<S> v = a.value().unaryExpr(f);
  const int ia = a.id(), self = static_cast<int>(g.size());
  return g.emit(std::move(v), g.needs(a), [ia, self, df](Graph<S>& g, const Matrix<S>& G) {
    g.accumulate(ia, G.cwiseProduct(g.value(ia).binaryExpr(g.value(self), df)));
  });
}

template <class S>
Var<S> silu(Var<S> a) {
  return map(
      a, [](S x) { return x / (S(1) + std::exp(-x)); },
      [](S x, S) {
        const S s = S(1) / (S(1) + std::exp(-x));
        return s * (S(1) + x * (S(1) - s));
      });
}

/// tanh-approximated GELU.
template <class S>
Var<S> gelu(Var<S> a) {
  constexpr S c = S(0.7978845608028654);  // sqrt(2/pi)
  constexpr S k = S(0.044715);
  return map(
      a,
      [](S x) { return S(0.5) * x * (S(1) + std::tanh(c * (x + k * x * x * x))); },
      [](S x, S) {
        const S u = c * (x + k * x * x * x);
        const S th = std::tanh(u);
        const S du = c * (S(1) + S(3) * k * x * x);
        return S(0.5) * (S(1) + th) + S(0.5) * x * (S(1) - th * th) * du;
      });
}

template <class S>
Var<S> tanh(Var<S> a) {
  return map(a, [](S x) { return std::tanh(x); }, [](S, S y) { return S(1) - y * y; });
}

template <class S>
Var<S> square(Var<S> a) {
  return map(a, [](S x) { return x * x; }, [](S x, S) { return S(2) * x; });
}

/// |x| with subgradient 0 at the origin.
template <class S>
Var<S> abs(Var<S> a) {
  return map(
      a, [](S x) { return std::abs(x); },
      [](S x, S) { return x > S(0) ? S(1) : (x < S(0) ? S(-1) : S(0)); });
}

template <class S>
Var<S> sqrt(Var<S> a) {
  return map(a, [](S x) { return std::sqrt(x); }, [](S, S y) { return S(0.5) / y; });
}

template <class S>
Var<S> sin(Var<S> a) {
  return map(a, [](S x) { return std::sin(x); }, [](S x, S) { return std::cos(x); });
}

// ---------------------------------------------------------------------------
// Reductions and reshaping

template <class S>
Var<S> sum(Var<S> a) {
  Graph<S>& g = a.graph();
  Matrix<S> v(1, 1);
  v(0, 0) = a.value().sum();
  const int ia = a.id();
  const auto r = a.rows(), c = a.cols();
  return g.emit(std::move(v), g.needs(a), [ia, r, c](Graph<S>& g, const Matrix<S>& G) {
    g.accumulate(ia, Matrix<S>::Constant(r, c, G(0, 0)));
  });
}

template <class S>
Var<S> mean(Var<S> a) {
  return scale(sum(a), S(1) / static_cast<S>(a.value().size()));
}

/// Column means: n x c -> 1 x c.
template <class S>
Var<S> mean_rows(Var<S> a) {
  Graph<S>& g = a.graph();
  const auto n = a.rows();
  Matrix<S> v = a.value().colwise().mean();
  const int ia = a.id();
  return g.emit(std::move(v), g.needs(a), [ia, n](Graph<S>& g, const Matrix<S>& G) {
    g.accumulate(ia, G.replicate(n, 1) / static_cast<S>(n));
  });
}

template <class S>
Var<S> rows(Var<S> a, Eigen::Index begin, Eigen::Index count) {
  detail::require(begin >= 0 && count >= 0 && begin + count <= a.rows(), "rows: out of range");
  Graph<S>& g = a.graph();
  const int ia = a.id();
  const auto r = a.rows(), c = a.cols();
  return g.emit(a.value().middleRows(begin, count), g.needs(a),
                [ia, r, c, begin, count](Graph<S>& g, const Matrix<S>& G) {
                  Matrix<S> full = Matrix<S>::Zero(r, c);
                  full.middleRows(begin, count) = G;
                  g.accumulate(ia, full);
                });
}

template <class S>
Var<S> cols(Var<S> a, Eigen::Index begin, Eigen::Index count) {
  detail::require(begin >= 0 && count >= 0 && begin + count <= a.cols(), "cols: out of range");
  Graph<S>& g = a.graph();
  const int ia = a.id();
  const auto r = a.rows(), c = a.cols();
  return g.emit(a.value().middleCols(begin, count), g.needs(a),
                [ia, r, c, begin, count](Graph<S>& g, const Matrix<S>& G) {
                  Matrix<S> full = Matrix<S>::Zero(r, c);
                  full.middleCols(begin, count) = G;
                  g.accumulate(ia, full);
                });
}

template <class S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
  detail::require(!parts.empty(), "concat_rows: no inputs");
  Graph<S>& g = parts.front().graph();
  Eigen::Index total = 0;
  bool needs = false;
  for (const auto& p : parts) {
    detail::require(p.cols() == parts.front().cols(), "concat_rows: column mismatch");
    total += p.rows();
    needs = needs || g.needs(p);
  }
  Matrix<S> v(total, parts.front().cols());
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    spans.emplace_back(p.id(), at);
    at += p.rows();
  }
  return g.emit(std::move(v), needs, [spans](Graph<S>& g, const Matrix<S>& G) {
    for (const auto& [id, off] : spans) {
      if (g.requires_grad(id)) g.accumulate(id, G.middleRows(off, g.value(id).rows()));
    }
  });
}

template <class S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  detail::require(!parts.empty(), "concat_cols: no inputs");
  Graph<S>& g = parts.front().graph();
  Eigen::Index total = 0;
  bool needs = false;
  for (const auto& p : parts) {
    detail::require(p.rows() == parts.front().rows(), "concat_cols: row mismatch");
    total += p.cols();
    needs = needs || g.needs(p);
  }
  Matrix<S> v(parts.front().rows(), total);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    spans.emplace_back(p.id(), at);
    at += p.cols();
  }
  return g.emit(std::move(v), needs, [spans](Graph<S>& g, const Matrix<S>& G) {
    for (const auto& [id, off] : spans) {
      if (g.requires_grad(id)) g.accumulate(id, G.middleCols(off, g.value(id).cols()));
    }
  });
}

template <class S>
Var<S> transpose(Var<S> a) {
  Graph<S>& g = a.graph();
  const int ia = a.id();
  return g.emit(a.value().transpose(), g.needs(a),
                [ia](Graph<S>& g, const Matrix<S>& G) { g.accumulate(ia, G.transpose()); });
}

/// Row-major reshape.
template <class S>
Var<S> reshape(Var<S> a, Eigen::Index r, Eigen::Index c) {
  detail::require(r * c == a.value().size(), "reshape: element count differs");
  Graph<S>& g = a.graph();
  Matrix<S> v = Eigen::Map<const Matrix<S>>(a.value().data(), r, c);
  const int ia = a.id();
  const auto ar = a.rows(), ac = a.cols();
  return g.emit(std::move(v), g.needs(a), [ia, ar, ac](Graph<S>& g, const Matrix<S>& G) {
    g.accumulate(ia, Eigen::Map<const Matrix<S>>(G.data(), ar, ac));
  });
}

// ---------------------------------------------------------------------------
// Normalization and attention building blocks

/// Per-row layer normalization without affine parameters.
template <class S>
Var<S> layer_norm(Var<S> a, S eps = S(1e-6)) {
  Graph<S>& g = a.graph();
  const Matrix<S>& x = a.value();
  const auto n = x.rows(), c = x.cols();
  Matrix<S> y(n, c);
  std::vector<S> inv(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const S mu = x.row(i).mean();
    const S var = (x.row(i).array() - mu).square().mean();
    inv[static_cast<std::size_t>(i)] = S(1) / std::sqrt(var + eps);
    y.row(i) = (x.row(i).array() - mu) * inv[static_cast<std::size_t>(i)];
  }
  const int ia = a.id(), self = static_cast<int>(g.size());
  return g.emit(std::move(y), g.needs(a), [ia, self, inv](Graph<S>& g, const Matrix<S>& G) {
    const Matrix<S>& xhat = g.value(self);
    Matrix<S> dx(G.rows(), G.cols());
    for (Eigen::Index i = 0; i < G.rows(); ++i) {
      const S gm = G.row(i).mean();
      const S gx = G.row(i).cwiseProduct(xhat.row(i)).mean();
      dx.row(i) = (G.row(i).array() - gm - xhat.row(i).array() * gx) * inv[static_cast<std::size_t>(i)];
    }
    g.accumulate(ia, dx);
  });
}

/// Row-wise softmax. Entries equal to -inf get probability zero.
template <class S>
Var<S> softmax_rows(Var<S> a) {
  Graph<S>& g = a.graph();
  Matrix<S> p = a.value();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const S m = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  const int ia = a.id(), self = static_cast<int>(g.size());
  return g.emit(std::move(p), g.needs(a), [ia, self](Graph<S>& g, const Matrix<S>& G) {
    const Matrix<S>& P = g.value(self);
    Matrix<S> d = G.cwiseProduct(P);
    const Eigen::Matrix<S, Eigen::Dynamic, 1> rs = d.rowwise().sum();
    d -= (P.array().colwise() * rs.array()).matrix();
    g.accumulate(ia, d);
  });
}

/// Rotary position embedding over `heads` equal column blocks. Row r is
/// rotated by angle positions[r] * base^(-2i/head_dim) on pair (2i, 2i+1).
template <class S>
Var<S> rope(Var<S> a, const std::vector<int>& positions, int heads, double base) {
  detail::require(static_cast<Eigen::Index>(positions.size()) == a.rows(), "rope: positions/rows mismatch");
  detail::require(heads > 0 && a.cols() % heads == 0, "rope: columns not divisible by heads");
  const Eigen::Index hd = a.cols() / heads;
  detail::require(hd % 2 == 0, "rope: head dimension must be even");
  const Eigen::Index half = hd / 2;
  Matrix<S> cs(a.rows(), half), sn(a.rows(), half);
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index i = 0; i < half; ++i) {
      const double freq = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(hd));
      const double ang = static_cast<double>(positions[static_cast<std::size_t>(r)]) * freq;
      cs(r, i) = static_cast<S>(std::cos(ang));
      sn(r, i) = static_cast<S>(std::sin(ang));
    }
  }
  auto rotate = [heads, hd, half](const Matrix<S>& in, const Matrix<S>& c, const Matrix<S>& s, S sign) {
    Matrix<S> out(in.rows(), in.cols());
    for (Eigen::Index r = 0; r < in.rows(); ++r) {
      for (int h = 0; h < heads; ++h) {
        const Eigen::Index o = h * hd;
        for (Eigen::Index i = 0; i < half; ++i) {
          const S x0 = in(r, o + 2 * i), x1 = in(r, o + 2 * i + 1);
          const S cc = c(r, i), ss = sign * s(r, i);
          out(r, o + 2 * i) = x0 * cc - x1 * ss;
          out(r, o + 2 * i + 1) = x0 * ss + x1 * cc;
        }
      }
    }
    return out;
  };
  Graph<S>& g = a.graph();
  const int ia = a.id();
  Matrix<S> v = rotate(a.value(), cs, sn, S(1));
  return g.emit(std::move(v), g.needs(a), [ia, cs, sn, rotate](Graph<S>& g, const Matrix<S>& G) {
    g.accumulate(ia, rotate(G, cs, sn, S(-1)));
  });
}

/// sum_l w(0,l) * layers[l] for constant layers and a trainable 1 x N weight row.
template <class S>
Var<S> weighted_sum(const std::vector<Matrix<S>>& layers, Var<S> w) {
  detail::require(!layers.empty() && w.rows() == 1 && w.cols() == static_cast<Eigen::Index>(layers.size()),
                  "weighted_sum: weight count must equal layer count");
  Graph<S>& g = w.graph();
  Matrix<S> v = Matrix<S>::Zero(layers.front().rows(), layers.front().cols());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    detail::require(layers[l].rows() == v.rows() && layers[l].cols() == v.cols(),
                    "weighted_sum: layer shapes differ");
    v += w.value()(0, static_cast<Eigen::Index>(l)) * layers[l];
  }
  const int iw = w.id();
  if (!g.needs(w)) return g.emit(std::move(v), false, nullptr);
  return g.emit(std::move(v), true, [iw, layers](Graph<S>& g, const Matrix<S>& G) {
    Matrix<S> dw(1, static_cast<Eigen::Index>(layers.size()));
    for (std::size_t l = 0; l < layers.size(); ++l) {
      dw(0, static_cast<Eigen::Index>(l)) = G.cwiseProduct(layers[l]).sum();
    }
    g.accumulate(iw, dw);
  });
}

/// Strided temporal patches for a 1-D convolution along rows. Row i of the
/// result concatenates input rows i*stride - pad + k for k in [0, kernel),
/// zero outside the input.
template <class S>
Var<S> patches(Var<S> a, int kernel, int stride, int pad) {
  detail::require(kernel > 0 && stride > 0 && pad >= 0, "patches: bad geometry");
  const Eigen::Index n = a.rows(), c = a.cols();
  const Eigen::Index out = (n + 2 * pad - kernel) / stride + 1;
  detail::require(out > 0, "patches: input shorter than kernel");
  Matrix<S> v = Matrix<S>::Zero(out, kernel * c);
  for (Eigen::Index i = 0; i < out; ++i) {
    for (int k = 0; k < kernel; ++k) {
      const Eigen::Index src = i * stride - pad + k;
      if (src >= 0 && src < n) v.block(i, k * c, 1, c) = a.value().row(src);
    }
  }
  Graph<S>& g = a.graph();
  const int ia = a.id();
  return g.emit(std::move(v), g.needs(a), [ia, n, c, out, kernel, stride, pad](Graph<S>& g, const Matrix<S>& G) {
    Matrix<S> d = Matrix<S>::Zero(n, c);
    for (Eigen::Index i = 0; i < out; ++i) {
      for (int k = 0; k < kernel; ++k) {
        const Eigen::Index src = i * stride - pad + k;
        if (src >= 0 && src < n) d.row(src) += G.block(i, k * c, 1, c);
      }
    }
    g.accumulate(ia, d);
  });
}

}  // namespace ag
}  // namespace headflow

#endif  // HEADFLOW_AUTOGRAD_HPP
