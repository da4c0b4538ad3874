/*
 * Copyright 2026 The softalign Authors
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

// Minimal matrix-level reverse-mode automatic differentiation.
//
// A Tape records one loss evaluation. Nodes hold dense row-major matrices;
// parameter leaves reference model-owned storage and accumulate their
// gradients into it during backward(). Constants never receive gradients, so
// anything passed as a constant (alignment targets, grounding vectors) is
// structurally excluded from training.

#pragma once

#include <algorithm>
#include <deque>
#include <functional>
#include <numeric>

#include "softalign/common.hpp"

namespace softalign::ad {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  static Matrix row(std::vector<double> v) {
    Matrix m;
    m.rows = 1;
    m.cols = v.size();
    m.data = std::move(v);
    return m;
  }

  static Matrix scalar(double v) { return Matrix(1, 1, v); }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double* row_ptr(std::size_t r) { return data.data() + r * cols; }
  const double* row_ptr(std::size_t r) const { return data.data() + r * cols; }
  std::size_t size() const { return data.size(); }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// A trainable tensor owned by a model.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, std::size_t r, std::size_t c) : name(std::move(n)), value(r, c), grad(r, c) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

/// Handle to a node of a Tape.
struct Var {
  int id = -1;
};

class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Matrix m) {
    Node& n = push();
    n.value = std::move(m);
    return Var{static_cast<int>(nodes_.size() - 1)};
  }

  Var constant_scalar(double v) { return constant(Matrix::scalar(v)); }

  Var param(Parameter& p) {
    Node& n = push();
    n.external = &p.value;
    n.param = record_ ? &p : nullptr;
    n.needs_grad = record_;
    return Var{static_cast<int>(nodes_.size() - 1)};
  }

  /// Read-only parameter leaf; never receives a gradient.
  Var param(const Parameter& p) {
    Node& n = push();
    n.external = &p.value;
    return Var{static_cast<int>(nodes_.size() - 1)};
  }

  const Matrix& value(Var v) const {
    const Node& n = node(v);
    return n.external ? *n.external : n.value;
  }

  double scalar(Var v) const {
    const Matrix& m = value(v);
    if (m.size() != 1) throw InputError("Tape::scalar on a non-scalar node");
    return m.data[0];
  }

  bool needs_grad(Var v) const { return node(v).needs_grad; }

  /// Gradient buffer of a node (allocated on first use).
  Matrix& grad(Var v) {
    Node& n = node(v);
    if (n.grad.size() == 0) {
      const Matrix& val = value(v);
      n.grad = Matrix(val.rows, val.cols);
    }
    return n.grad;
  }

  /// Records an op node. `back` propagates grad(self) into its inputs.
  Var op(Matrix value, std::initializer_list<Var> inputs, std::function<void(Tape&, Var)> back) {
    Node& n = push();
    n.value = std::move(value);
    if (record_) {
      for (Var in : inputs) n.needs_grad = n.needs_grad || node(in).needs_grad;
      if (n.needs_grad) n.back = std::move(back);
    }
    return Var{static_cast<int>(nodes_.size() - 1)};
  }

  /// Reverse sweep from a scalar loss; parameter gradients accumulate into
  /// the owning Parameter::grad (scaled by `seed`).
  void backward(Var loss, double seed = 1.0) {
    if (!record_) throw InputError("backward() on a non-recording tape");
    if (value(loss).size() != 1) throw InputError("backward() needs a scalar loss");
    if (!node(loss).needs_grad) return;
    grad(loss).data[0] = seed;
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.needs_grad || n.grad.size() == 0) continue;
      if (n.param) {
        auto& dst = n.param->grad.data;
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad.data[k];
      } else if (n.back) {
        n.back(*this, Var{i});
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Parameter* param = nullptr;
    Matrix grad;
    std::function<void(Tape&, Var)> back;
    bool needs_grad = false;
  };

  Node& push() { return nodes_.emplace_back(); }
  Node& node(Var v) {
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) throw InputError("invalid Var");
    return nodes_[static_cast<std::size_t>(v.id)];
  }
  const Node& node(Var v) const {
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) throw InputError("invalid Var");
    return nodes_[static_cast<std::size_t>(v.id)];
  }

  bool record_;
  std::deque<Node> nodes_;
};

// ----------------------------------------------------------------------------
// Dense kernels.
// ----------------------------------------------------------------------------

namespace kernel {

/// C += A·B  (A m×k, B k×n)
inline void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* crow = c.row_ptr(i);
    const double* arow = a.row_ptr(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.row_ptr(k);
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
}

/// C += A·Bᵀ  (A m×k, B n×k)
inline void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row_ptr(i);
    double* crow = c.row_ptr(i);
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* brow = b.row_ptr(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
      crow[j] += s;
    }
  }
}

/// C += Aᵀ·B  (A k×m, B k×n)
inline void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  for (std::size_t k = 0; k < a.rows; ++k) {
    const double* arow = a.row_ptr(k);
    const double* brow = b.row_ptr(k);
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* crow = c.row_ptr(i);
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
    }
  }
}

inline void softmax_rows_inplace(Matrix& m) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    double* row = m.row_ptr(r);
    const double mx = *std::max_element(row, row + m.cols);
    double z = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      z += row[c];
    }
    for (std::size_t c = 0; c < m.cols; ++c) row[c] /= z;
  }
}

}  // namespace kernel

inline void check_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows != b.rows || a.cols != b.cols) throw InputError(std::string(what) + ": shape mismatch");
}

// ----------------------------------------------------------------------------
// Differentiable ops.
// ----------------------------------------------------------------------------

inline Var matmul(Tape& t, Var a, Var b) {
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (A.cols != B.rows) throw InputError("matmul: inner dimension mismatch");
  Matrix out(A.rows, B.cols);
  kernel::gemm_nn(A, B, out);
  return t.op(std::move(out), {a, b}, [a, b](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    if (tp.needs_grad(a)) kernel::gemm_nt(g, tp.value(b), tp.grad(a));
    if (tp.needs_grad(b)) kernel::gemm_tn(tp.value(a), g, tp.grad(b));
  });
}

/// A·Bᵀ
inline Var matmul_nt(Tape& t, Var a, Var b) {
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (A.cols != B.cols) throw InputError("matmul_nt: inner dimension mismatch");
  Matrix out(A.rows, B.rows);
  kernel::gemm_nt(A, B, out);
  return t.op(std::move(out), {a, b}, [a, b](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    if (tp.needs_grad(a)) kernel::gemm_nn(g, tp.value(b), tp.grad(a));
    if (tp.needs_grad(b)) kernel::gemm_tn(g, tp.value(a), tp.grad(b));
  });
}

/// X·W + b with b broadcast over rows.
inline Var linear(Tape& t, Var x, Var w, Var b) {
  const Matrix& X = t.value(x);
  const Matrix& W = t.value(w);
  const Matrix& B = t.value(b);
  if (X.cols != W.rows || B.rows != 1 || B.cols != W.cols) throw InputError("linear: shape mismatch");
  Matrix out(X.rows, W.cols);
  for (std::size_t r = 0; r < out.rows; ++r) std::copy(B.data.begin(), B.data.end(), out.row_ptr(r));
  kernel::gemm_nn(X, W, out);
  return t.op(std::move(out), {x, w, b}, [x, w, b](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    if (tp.needs_grad(x)) kernel::gemm_nt(g, tp.value(w), tp.grad(x));
    if (tp.needs_grad(w)) kernel::gemm_tn(tp.value(x), g, tp.grad(w));
    if (tp.needs_grad(b)) {
      Matrix& gb = tp.grad(b);
      for (std::size_t r = 0; r < g.rows; ++r)
        for (std::size_t c = 0; c < g.cols; ++c) gb.data[c] += g(r, c);
    }
  });
}

inline Var add(Tape& t, Var a, Var b) {
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  check_same_shape(A, B, "add");
  Matrix out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += B.data[i];
  return t.op(std::move(out), {a, b}, [a, b](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    for (Var in : {a, b}) {
      if (!tp.needs_grad(in)) continue;
      Matrix& d = tp.grad(in);
      for (std::size_t i = 0; i < g.size(); ++i) d.data[i] += g.data[i];
    }
  });
}

/// a + s·b for scalars or same-shape matrices.
inline Var add_scaled(Tape& t, Var a, Var b, double s) {
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  check_same_shape(A, B, "add_scaled");
  Matrix out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += s * B.data[i];
  return t.op(std::move(out), {a, b}, [a, b, s](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    if (tp.needs_grad(a)) {
      Matrix& d = tp.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) d.data[i] += g.data[i];
    }
    if (tp.needs_grad(b)) {
      Matrix& d = tp.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) d.data[i] += s * g.data[i];
    }
  });
}

inline Var scale(Tape& t, Var a, double s) {
  Matrix out = t.value(a);
  for (double& v : out.data) v *= s;
  return t.op(std::move(out), {a}, [a, s](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    Matrix& d = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) d.data[i] += s * g.data[i];
  });
}

inline Var tanh(Tape& t, Var a) {
  Matrix out = t.value(a);
  for (double& v : out.data) v = std::tanh(v);
  return t.op(std::move(out), {a}, [a](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    const Matrix& y = tp.value(self);
    Matrix& d = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) d.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
  });
}

/// Gathers rows of `table` (e.g. token or position embeddings).
inline Var rows(Tape& t, Var table, std::span<const int> ids) {
  const Matrix& T = t.value(table);
  Matrix out(ids.size(), T.cols);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const int id = ids[r];
    if (id < 0 || static_cast<std::size_t>(id) >= T.rows) throw InputError("rows: index out of range");
    std::copy(T.row_ptr(static_cast<std::size_t>(id)), T.row_ptr(static_cast<std::size_t>(id)) + T.cols,
              out.row_ptr(r));
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return t.op(std::move(out), {table}, [table, idx = std::move(idx)](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    Matrix& d = tp.grad(table);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      double* drow = d.row_ptr(static_cast<std::size_t>(idx[r]));
      const double* grow = g.row_ptr(r);
      for (std::size_t c = 0; c < g.cols; ++c) drow[c] += grow[c];
    }
  });
}

/// Row-wise layer normalisation with learned gain and bias (1×d each).
inline Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps = 1e-5) {
  const Matrix& X = t.value(x);
  const Matrix& G = t.value(gain);
  const Matrix& B = t.value(bias);
  if (G.cols != X.cols || B.cols != X.cols) throw InputError("layer_norm: shape mismatch");
  const std::size_t d = X.cols;
  Matrix xhat(X.rows, d);
  std::vector<double> inv_sigma(X.rows);
  Matrix out(X.rows, d);
  for (std::size_t r = 0; r < X.rows; ++r) {
    const double* xr = X.row_ptr(r);
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += xr[c];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[r] = is;
    for (std::size_t c = 0; c < d; ++c) {
      xhat(r, c) = (xr[c] - mean) * is;
      out(r, c) = G.data[c] * xhat(r, c) + B.data[c];
    }
  }
  if (!t.recording()) return t.op(std::move(out), {x, gain, bias}, {});
  return t.op(std::move(out), {x, gain, bias},
              [x, gain, bias, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](Tape& tp, Var self) {
                const Matrix& g = tp.grad(self);
                const Matrix& G = tp.value(gain);
                const std::size_t d = g.cols;
                if (tp.needs_grad(gain) || tp.needs_grad(bias)) {
                  Matrix& dg = tp.grad(gain);
                  Matrix& db = tp.grad(bias);
                  for (std::size_t r = 0; r < g.rows; ++r)
                    for (std::size_t c = 0; c < d; ++c) {
                      dg.data[c] += g(r, c) * xhat(r, c);
                      db.data[c] += g(r, c);
                    }
                }
                if (!tp.needs_grad(x)) return;
                Matrix& dx = tp.grad(x);
                std::vector<double> dxhat(d);
                for (std::size_t r = 0; r < g.rows; ++r) {
                  double m1 = 0.0, m2 = 0.0;
                  for (std::size_t c = 0; c < d; ++c) {
                    dxhat[c] = g(r, c) * G.data[c];
                    m1 += dxhat[c];
                    m2 += dxhat[c] * xhat(r, c);
                  }
                  m1 /= static_cast<double>(d);
                  m2 /= static_cast<double>(d);
                  for (std::size_t c = 0; c < d; ++c)
                    dx(r, c) += inv_sigma[r] * (dxhat[c] - m1 - xhat(r, c) * m2);
                }
              });
}

/// Multi-head scaled dot-product attention over already projected Q, K, V
/// (each rows×d, heads split along columns). With `causal`, query i only sees
/// keys 0..i.
inline Var attention(Tape& t, Var q, Var k, Var v, std::size_t heads, bool causal) {
  const Matrix& Q = t.value(q);
  const Matrix& K = t.value(k);
  const Matrix& V = t.value(v);
  if (Q.cols != K.cols || K.cols != V.cols || K.rows != V.rows || Q.cols % heads != 0)
    throw InputError("attention: shape mismatch");
  const std::size_t lq = Q.rows, lk = K.rows, d = Q.cols, dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  // probs[h] is lq×lk
  std::vector<Matrix> probs(heads, Matrix(lq, lk));
  Matrix out(lq, d);
  for (std::size_t h = 0; h < heads; ++h) {
    Matrix& P = probs[h];
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < lq; ++i) {
      const std::size_t visible = causal ? std::min(i + 1, lk) : lk;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < visible; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += Q(i, off + c) * K(j, off + c);
        P(i, j) = s * inv_sqrt;
        mx = std::max(mx, P(i, j));
      }
      double z = 0.0;
      for (std::size_t j = 0; j < visible; ++j) {
        P(i, j) = std::exp(P(i, j) - mx);
        z += P(i, j);
      }
      for (std::size_t j = 0; j < visible; ++j) P(i, j) /= z;
      for (std::size_t j = visible; j < lk; ++j) P(i, j) = 0.0;
      for (std::size_t j = 0; j < visible; ++j) {
        const double p = P(i, j);
        for (std::size_t c = 0; c < dh; ++c) out(i, off + c) += p * V(j, off + c);
      }
    }
  }
  if (!t.recording()) return t.op(std::move(out), {q, k, v}, {});
  return t.op(std::move(out), {q, k, v},
              [q, k, v, heads, dh, inv_sqrt, probs = std::move(probs)](Tape& tp, Var self) {
                const Matrix& g = tp.grad(self);
                const Matrix& Q = tp.value(q);
                const Matrix& K = tp.value(k);
                const Matrix& V = tp.value(v);
                const bool gq = tp.needs_grad(q), gk = tp.needs_grad(k), gv = tp.needs_grad(v);
                Matrix* dQ = gq ? &tp.grad(q) : nullptr;
                Matrix* dK = gk ? &tp.grad(k) : nullptr;
                Matrix* dV = gv ? &tp.grad(v) : nullptr;
                const std::size_t lq = Q.rows, lk = K.rows;
                std::vector<double> dp(lk);
                for (std::size_t h = 0; h < heads; ++h) {
                  const Matrix& P = probs[h];
                  const std::size_t off = h * dh;
                  for (std::size_t i = 0; i < lq; ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < lk; ++j) {
                      const double p = P(i, j);
                      if (p == 0.0) {
                        dp[j] = 0.0;
                        continue;
                      }
                      double s = 0.0;
                      for (std::size_t c = 0; c < dh; ++c) s += g(i, off + c) * V(j, off + c);
                      dp[j] = s;
                      dot += s * p;
                      if (dV)
                        for (std::size_t c = 0; c < dh; ++c) (*dV)(j, off + c) += p * g(i, off + c);
                    }
                    for (std::size_t j = 0; j < lk; ++j) {
                      const double p = P(i, j);
                      if (p == 0.0) continue;
                      const double ds = p * (dp[j] - dot) * inv_sqrt;
                      if (dQ)
                        for (std::size_t c = 0; c < dh; ++c) (*dQ)(i, off + c) += ds * K(j, off + c);
                      if (dK)
                        for (std::size_t c = 0; c < dh; ++c) (*dK)(j, off + c) += ds * Q(i, off + c);
                    }
                  }
                }
              });
}

inline Var log_softmax(Tape& t, Var a) {
  Matrix out = t.value(a);
  for (std::size_t r = 0; r < out.rows; ++r) {
    double* row = out.row_ptr(r);
    const double mx = *std::max_element(row, row + out.cols);
    double z = 0.0;
    for (std::size_t c = 0; c < out.cols; ++c) z += std::exp(row[c] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t c = 0; c < out.cols; ++c) row[c] -= lz;
  }
  return t.op(std::move(out), {a}, [a](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    const Matrix& y = tp.value(self);
    Matrix& d = tp.grad(a);
    for (std::size_t r = 0; r < g.rows; ++r) {
      double gs = 0.0;
      for (std::size_t c = 0; c < g.cols; ++c) gs += g(r, c);
      for (std::size_t c = 0; c < g.cols; ++c) d(r, c) += g(r, c) - std::exp(y(r, c)) * gs;
    }
  });
}

inline Var softmax(Tape& t, Var a) {
  Matrix out = t.value(a);
  kernel::softmax_rows_inplace(out);
  return t.op(std::move(out), {a}, [a](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    const Matrix& y = tp.value(self);
    Matrix& d = tp.grad(a);
    for (std::size_t r = 0; r < g.rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < g.cols; ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < g.cols; ++c) d(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

/// Σᵢⱼ Aᵢⱼ·Wᵢⱼ for a constant weight matrix W (scalar output).
inline Var weighted_sum(Tape& t, Var a, Matrix weights) {
  const Matrix& A = t.value(a);
  check_same_shape(A, weights, "weighted_sum");
  double s = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) s += A.data[i] * weights.data[i];
  return t.op(Matrix::scalar(s), {a}, [a, w = std::move(weights)](Tape& tp, Var self) {
    const double g = tp.grad(self).data[0];
    Matrix& d = tp.grad(a);
    for (std::size_t i = 0; i < w.size(); ++i) d.data[i] += g * w.data[i];
  });
}

/// One term wᵢ·|A(rᵢ, cᵢ) − targetᵢ| of a sparse absolute-difference sum.
struct AbsTerm {
  std::size_t row = 0;
  std::size_t col = 0;
  double target = 0.0;
  double weight = 1.0;
};

/// Σ wᵢ·|A(rᵢ,cᵢ) − targetᵢ|. Subgradient 0 at the kink.
inline Var sparse_abs_sum(Tape& t, Var a, std::vector<AbsTerm> terms) {
  const Matrix& A = t.value(a);
  double s = 0.0;
  for (const auto& term : terms) {
    if (term.row >= A.rows || term.col >= A.cols) throw InputError("sparse_abs_sum: index out of range");
    s += term.weight * std::abs(A(term.row, term.col) - term.target);
  }
  return t.op(Matrix::scalar(s), {a}, [a, terms = std::move(terms)](Tape& tp, Var self) {
    const double g = tp.grad(self).data[0];
    const Matrix& A = tp.value(a);
    Matrix& d = tp.grad(a);
    for (const auto& term : terms) {
      const double diff = A(term.row, term.col) - term.target;
      const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      d(term.row, term.col) += g * term.weight * sign;
    }
  });
}

/// Σ of all entries (scalar output).
inline Var sum(Tape& t, Var a) {
  const Matrix& A = t.value(a);
  return t.op(Matrix::scalar(std::accumulate(A.data.begin(), A.data.end(), 0.0)), {a},
              [a](Tape& tp, Var self) {
                const double g = tp.grad(self).data[0];
                for (double& d : tp.grad(a).data) d += g;
              });
}

}  // namespace softalign::ad
