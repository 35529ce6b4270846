// SPDX-License-Identifier: Apache-2.0
/**
 * @file   ops.hpp
 * @brief  Differentiable operations over Graph expressions.
 *
 * Shapes: scalars are rank 0, vectors rank 1, matrices rank 2 (row-major).
 * No broadcasting beyond the bias add inside linear().
 */
#pragma once

#include <copygen/core/graph.hpp>

#include <limits>
#include <optional>
#include <random>

namespace copygen {

namespace detail {

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

inline void require_rank(const char* op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank)
    throw RankError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                    shape_string(a.shape()));
}

inline void add_into(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

template <class F, class D>
Expr unary(const char* kind, Expr x, F&& fwd, D dydx) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  const std::size_t xi = x.id;
  return x.graph->record(kind, std::move(out), {xi},
                         [xi, dydx](Graph& g, const Tensor& y, std::span<const double> dy) {
                           const Tensor& xv = g.value(xi);
                           auto dx = g.grad_buffer(xi);
                           for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * dydx(xv[i], y[i]);
                         });
}

// Row-major (n x k) * (k x m) with n, m possibly 1.
inline void gemm(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                 std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
    }
  }
}

// dA += dC * B^T ; dB += A^T * dC
inline void gemm_backward(const double* a, const double* b, const double* dc, double* da, double* db,
                          std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* dci = dc + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * m;
      if (da) {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += dci[j] * bp[j];
        da[i * k + p] += s;
      }
      if (db) {
        const double aip = a[i * k + p];
        if (aip == 0.0) continue;
        double* dbp = db + p * m;
        for (std::size_t j = 0; j < m; ++j) dbp[j] += aip * dci[j];
      }
    }
  }
}

struct MatmulDims {
  std::size_t n, k, m;
  Shape out;
};

inline MatmulDims matmul_dims(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rank() == 2 && b.rank() == 2 && a.shape()[1] == b.shape()[0])
    return {a.shape()[0], a.shape()[1], b.shape()[1], Shape{a.shape()[0], b.shape()[1]}};
  if (a.rank() == 1 && b.rank() == 2 && a.shape()[0] == b.shape()[0])
    return {1, a.shape()[0], b.shape()[1], Shape{b.shape()[1]}};
  if (a.rank() == 2 && b.rank() == 1 && a.shape()[1] == b.shape()[0])
    return {a.shape()[0], a.shape()[1], 1, Shape{a.shape()[0]}};
  throw DimensionError(std::string(op) + ": inner dimensions disagree, " + shape_string(a.shape()) +
                       " vs " + shape_string(b.shape()));
}

}  // namespace detail

inline Expr matmul(Expr a, Expr b) {
  const auto d = detail::matmul_dims("matmul", a.value(), b.value());
  Tensor out(d.out);
  detail::gemm(a.value().data(), b.value().data(), out.data(), d.n, d.k, d.m);
  const std::size_t ai = a.id, bi = b.id;
  return a.graph->record("matmul", std::move(out), {ai, bi},
                         [ai, bi, d](Graph& g, const Tensor&, std::span<const double> dy) {
                           double* da = g.needs_grad(ai) ? g.grad_buffer(ai).data() : nullptr;
                           double* db = g.needs_grad(bi) ? g.grad_buffer(bi).data() : nullptr;
                           detail::gemm_backward(g.value(ai).data(), g.value(bi).data(), dy.data(), da,
                                                 db, d.n, d.k, d.m);
                         });
}

/// out[i,j] = sum_k x[i,k] W[k,j] + b[j]. `x` may be a single row vector.
inline Expr linear(Expr x, Expr w, Expr b) {
  const auto d = detail::matmul_dims("linear", x.value(), w.value());
  if (w.value().rank() != 2 || b.value().rank() != 1 || b.value().size() != d.m)
    throw DimensionError("linear: bias " + shape_string(b.shape()) + " does not match weight " +
                         shape_string(w.shape()));
  Tensor out(d.out);
  const double* bv = b.value().data();
  for (std::size_t i = 0; i < d.n; ++i)
    std::copy(bv, bv + d.m, out.data() + i * d.m);
  detail::gemm(x.value().data(), w.value().data(), out.data(), d.n, d.k, d.m);
  const std::size_t xi = x.id, wi = w.id, bi = b.id;
  return x.graph->record("linear", std::move(out), {xi, wi, bi},
                         [xi, wi, bi, d](Graph& g, const Tensor&, std::span<const double> dy) {
                           double* dx = g.needs_grad(xi) ? g.grad_buffer(xi).data() : nullptr;
                           double* dw = g.needs_grad(wi) ? g.grad_buffer(wi).data() : nullptr;
                           detail::gemm_backward(g.value(xi).data(), g.value(wi).data(), dy.data(), dx,
                                                 dw, d.n, d.k, d.m);
                           if (g.needs_grad(bi)) {
                             auto db = g.grad_buffer(bi);
                             for (std::size_t i = 0; i < d.n; ++i)
                               for (std::size_t j = 0; j < d.m; ++j) db[j] += dy[i * d.m + j];
                           }
                         });
}

/// Adds the vector `b` to every row of the matrix `m`.
inline Expr add_bias(Expr m, Expr b) {
  detail::require_rank("add_bias", m.value(), 2);
  const std::size_t rows = m.value().rows(), cols = m.value().cols();
  if (b.value().rank() != 1 || b.size() != cols)
    throw DimensionError("add_bias: bias " + shape_string(b.shape()) + " vs matrix " + shape_string(m.shape()));
  Tensor out = m.value();
  for (std::size_t r = 0; r < rows; ++r) detail::add_into(out.row(r), b.value().values());
  const std::size_t mi = m.id, bi = b.id;
  return m.graph->record("add_bias", std::move(out), {mi, bi},
                         [mi, bi, rows, cols](Graph& g, const Tensor&, std::span<const double> dy) {
                           if (g.needs_grad(mi)) detail::add_into(g.grad_buffer(mi), dy);
                           if (g.needs_grad(bi)) {
                             auto db = g.grad_buffer(bi);
                             for (std::size_t r = 0; r < rows; ++r) detail::add_into(db, dy.subspan(r * cols, cols));
                           }
                         });
}

inline Expr add(Expr a, Expr b) {
  detail::require_same_shape("add", a.value(), b.value());
  Tensor out = a.value();
  detail::add_into(out.values(), b.value().values());
  const std::size_t ai = a.id, bi = b.id;
  return a.graph->record("add", std::move(out), {ai, bi},
                         [ai, bi](Graph& g, const Tensor&, std::span<const double> dy) {
                           if (g.needs_grad(ai)) detail::add_into(g.grad_buffer(ai), dy);
                           if (g.needs_grad(bi)) detail::add_into(g.grad_buffer(bi), dy);
                         });
}

/// Sum of same-shaped expressions.
inline Expr add_n(std::span<const Expr> xs) {
  if (xs.empty()) throw DimensionError("add_n: no operands");
  Tensor out(xs[0].shape());
  std::vector<std::size_t> ids;
  for (const auto& x : xs) {
    detail::require_same_shape("add_n", out, x.value());
    detail::add_into(out.values(), x.value().values());
    ids.push_back(x.id);
  }
  return xs[0].graph->record("add_n", std::move(out), ids,
                             [ids](Graph& g, const Tensor&, std::span<const double> dy) {
                               for (auto i : ids)
                                 if (g.needs_grad(i)) detail::add_into(g.grad_buffer(i), dy);
                             });
}

inline Expr sub(Expr a, Expr b) {
  detail::require_same_shape("sub", a.value(), b.value());
  Tensor out = a.value();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t ai = a.id, bi = b.id;
  return a.graph->record("sub", std::move(out), {ai, bi},
                         [ai, bi](Graph& g, const Tensor&, std::span<const double> dy) {
                           if (g.needs_grad(ai)) detail::add_into(g.grad_buffer(ai), dy);
                           if (g.needs_grad(bi)) {
                             auto db = g.grad_buffer(bi);
                             for (std::size_t i = 0; i < dy.size(); ++i) db[i] -= dy[i];
                           }
                         });
}

/// Elementwise (Hadamard) product.
inline Expr mul(Expr a, Expr b) {
  detail::require_same_shape("mul", a.value(), b.value());
  Tensor out = a.value();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ai = a.id, bi = b.id;
  return a.graph->record("mul", std::move(out), {ai, bi},
                         [ai, bi](Graph& g, const Tensor&, std::span<const double> dy) {
                           const auto& av = g.value(ai);
                           const auto& bv = g.value(bi);
                           if (g.needs_grad(ai)) {
                             auto da = g.grad_buffer(ai);
                             for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bv[i];
                           }
                           if (g.needs_grad(bi)) {
                             auto db = g.grad_buffer(bi);
                             for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * av[i];
                           }
                         });
}

inline Expr scale(Expr x, double c) {
  return detail::unary("scale", x, [c](double v) { return c * v; },
                       [c](double, double) { return c; });
}

inline Expr neg(Expr x) { return scale(x, -1.0); }

inline Expr one_minus(Expr x) {
  return detail::unary("one_minus", x, [](double v) { return 1.0 - v; },
                       [](double, double) { return -1.0; });
}

/// Multiplies every element of `x` by the scalar expression `s`.
inline Expr scale_by(Expr x, Expr s) {
  if (s.value().size() != 1) throw DimensionError("scale_by: factor must be scalar, got " + shape_string(s.shape()));
  const double c = s.value()[0];
  Tensor out = x.value();
  for (auto& v : out.values()) v *= c;
  const std::size_t xi = x.id, si = s.id;
  return x.graph->record("scale_by", std::move(out), {xi, si},
                         [xi, si](Graph& g, const Tensor&, std::span<const double> dy) {
                           const double c = g.value(si)[0];
                           if (g.needs_grad(xi)) {
                             auto dx = g.grad_buffer(xi);
                             for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * c;
                           }
                           if (g.needs_grad(si)) {
                             const auto& xv = g.value(xi);
                             double acc = 0.0;
                             for (std::size_t i = 0; i < dy.size(); ++i) acc += dy[i] * xv[i];
                             g.grad_buffer(si)[0] += acc;
                           }
                         });
}

inline Expr tanh(Expr x) {
  return detail::unary("tanh", x, [](double v) { return std::tanh(v); },
                       [](double, double y) { return 1.0 - y * y; });
}

inline Expr sigmoid(Expr x) {
  return detail::unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

inline Expr exp(Expr x) {
  return detail::unary("exp", x, [](double v) { return std::exp(v); },
                       [](double, double y) { return y; });
}

inline Expr log(Expr x) {
  return detail::unary("log", x, [](double v) { return std::log(v); },
                       [](double v, double) { return 1.0 / v; });
}

inline Expr sum(Expr x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  const std::size_t xi = x.id;
  return x.graph->record("sum", Tensor::scalar(s), {xi},
                         [xi](Graph& g, const Tensor&, std::span<const double> dy) {
                           for (auto& v : g.grad_buffer(xi)) v += dy[0];
                         });
}

/// Element `i` of a vector as a scalar.
inline Expr pick(Expr x, std::size_t i) {
  detail::require_rank("pick", x.value(), 1);
  if (i >= x.size())
    throw IndexError("pick: index " + std::to_string(i) + " out of range for " + shape_string(x.shape()));
  const std::size_t xi = x.id;
  return x.graph->record("pick", Tensor::scalar(x.value()[i]), {xi},
                         [xi, i](Graph& g, const Tensor&, std::span<const double> dy) {
                           g.grad_buffer(xi)[i] += dy[0];
                         });
}

/**
 * Softmax over a vector, stabilized by max-subtraction. Masked-out positions
 * (mask[i] == false) get exactly zero probability.
 */
inline Expr softmax(Expr x, std::optional<std::vector<bool>> mask = std::nullopt) {
  const Tensor& xv = x.value();
  detail::require_rank("softmax", xv, 1);
  const std::size_t n = xv.size();
  if (mask && mask->size() != n)
    throw DimensionError("softmax: mask length " + std::to_string(mask->size()) + " vs input " +
                         shape_string(xv.shape()));
  auto live = [&](std::size_t i) { return !mask || (*mask)[i]; };
  double mx = -std::numeric_limits<double>::infinity();
  std::size_t support = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (live(i)) {
      mx = std::max(mx, xv[i]);
      ++support;
    }
  if (support == 0) throw EmptySupportError("softmax: every position is masked");
  Tensor out(xv.shape());
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (live(i)) z += (out[i] = std::exp(xv[i] - mx));
  for (auto& v : out.values()) v /= z;
  const std::size_t xi = x.id;
  return x.graph->record("softmax", std::move(out), {xi},
                         [xi](Graph& g, const Tensor& y, std::span<const double> dy) {
                           double dot = 0.0;
                           for (std::size_t i = 0; i < dy.size(); ++i) dot += dy[i] * y[i];
                           auto dx = g.grad_buffer(xi);
                           for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += y[i] * (dy[i] - dot);
                         });
}

/// Concatenation of vectors.
inline Expr concat(std::span<const Expr> xs) {
  if (xs.empty()) throw DimensionError("concat: no operands");
  std::size_t total = 0;
  for (const auto& x : xs) {
    detail::require_rank("concat", x.value(), 1);
    total += x.size();
  }
  Tensor out(Shape{total});
  std::vector<std::size_t> ids;
  std::size_t off = 0;
  for (const auto& x : xs) {
    std::copy(x.value().data(), x.value().data() + x.size(), out.data() + off);
    off += x.size();
    ids.push_back(x.id);
  }
  return xs[0].graph->record("concat", std::move(out), ids,
                             [ids](Graph& g, const Tensor&, std::span<const double> dy) {
                               std::size_t off = 0;
                               for (auto i : ids) {
                                 const std::size_t n = g.value(i).size();
                                 if (g.needs_grad(i)) detail::add_into(g.grad_buffer(i), dy.subspan(off, n));
                                 off += n;
                               }
                             });
}

inline Expr concat(std::initializer_list<Expr> xs) { return concat(std::span<const Expr>(xs.begin(), xs.size())); }

/// Column-wise concatenation of matrices with equal row counts.
inline Expr concat_cols(std::span<const Expr> xs) {
  if (xs.empty()) throw DimensionError("concat_cols: no operands");
  const std::size_t rows = xs[0].value().rows();
  std::size_t total = 0;
  std::vector<std::size_t> ids, widths;
  for (const auto& x : xs) {
    detail::require_rank("concat_cols", x.value(), 2);
    if (x.value().rows() != rows)
      throw DimensionError("concat_cols: row mismatch " + shape_string(xs[0].shape()) + " vs " +
                           shape_string(x.shape()));
    total += x.value().cols();
    ids.push_back(x.id);
    widths.push_back(x.value().cols());
  }
  Tensor out(Shape{rows, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Tensor& v = xs[k].value();
    for (std::size_t r = 0; r < rows; ++r) std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + off);
    off += widths[k];
  }
  return xs[0].graph->record("concat_cols", std::move(out), ids,
                             [ids, widths, rows, total](Graph& g, const Tensor&, std::span<const double> dy) {
                               std::size_t off = 0;
                               for (std::size_t k = 0; k < ids.size(); ++k) {
                                 if (g.needs_grad(ids[k])) {
                                   auto dx = g.grad_buffer(ids[k]);
                                   for (std::size_t r = 0; r < rows; ++r)
                                     for (std::size_t c = 0; c < widths[k]; ++c)
                                       dx[r * widths[k] + c] += dy[r * total + off + c];
                                 }
                                 off += widths[k];
                               }
                             });
}

inline Expr concat_cols(std::initializer_list<Expr> xs) {
  return concat_cols(std::span<const Expr>(xs.begin(), xs.size()));
}

/// Contiguous sub-vector [start, start + len).
inline Expr slice(Expr x, std::size_t start, std::size_t len) {
  detail::require_rank("slice", x.value(), 1);
  if (start + len > x.size() || len == 0)
    throw IndexError("slice: [" + std::to_string(start) + ", " + std::to_string(start + len) +
                     ") out of range for " + shape_string(x.shape()));
  Tensor out(Shape{len});
  std::copy(x.value().data() + start, x.value().data() + start + len, out.data());
  const std::size_t xi = x.id;
  return x.graph->record("slice", std::move(out), {xi},
                         [xi, start](Graph& g, const Tensor&, std::span<const double> dy) {
                           detail::add_into(g.grad_buffer(xi).subspan(start, dy.size()), dy);
                         });
}

/// Row `r` of a matrix as a vector.
inline Expr row(Expr m, std::size_t r) {
  detail::require_rank("row", m.value(), 2);
  if (r >= m.value().rows())
    throw IndexError("row: " + std::to_string(r) + " out of range for " + shape_string(m.shape()));
  const std::size_t cols = m.value().cols();
  Tensor out(Shape{cols});
  std::copy(m.value().row(r).begin(), m.value().row(r).end(), out.data());
  const std::size_t mi = m.id;
  return m.graph->record("row", std::move(out), {mi},
                         [mi, r, cols](Graph& g, const Tensor&, std::span<const double> dy) {
                           detail::add_into(g.grad_buffer(mi).subspan(r * cols, cols), dy);
                         });
}

/// Stacks equal-length vectors as the rows of a matrix.
inline Expr stack_rows(std::span<const Expr> xs) {
  if (xs.empty()) throw DimensionError("stack_rows: no operands");
  const std::size_t cols = xs[0].size();
  Tensor out(Shape{xs.size(), cols});
  std::vector<std::size_t> ids;
  for (std::size_t r = 0; r < xs.size(); ++r) {
    detail::require_rank("stack_rows", xs[r].value(), 1);
    if (xs[r].size() != cols)
      throw DimensionError("stack_rows: length mismatch " + shape_string(xs[0].shape()) + " vs " +
                           shape_string(xs[r].shape()));
    std::copy(xs[r].value().data(), xs[r].value().data() + cols, out.row(r).begin());
    ids.push_back(xs[r].id);
  }
  return xs[0].graph->record("stack_rows", std::move(out), ids,
                             [ids, cols](Graph& g, const Tensor&, std::span<const double> dy) {
                               for (std::size_t r = 0; r < ids.size(); ++r)
                                 if (g.needs_grad(ids[r])) detail::add_into(g.grad_buffer(ids[r]), dy.subspan(r * cols, cols));
                             });
}

/**
 * Gathers rows `ids` of the named embedding table into a (|ids| x dim) matrix.
 * The gradient is scattered straight into the table's GradientMap entry, so
 * no per-graph copy of the table is made.
 */
inline Expr lookup(Graph& g, const std::string& name, const Tensor& table, std::span<const int> ids) {
  detail::require_rank("lookup", table, 2);
  if (ids.empty()) throw DimensionError("lookup: no ids");
  const std::size_t dim = table.cols();
  Tensor out(Shape{ids.size(), dim});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= table.rows())
      throw IndexError("lookup '" + name + "': id " + std::to_string(ids[r]) + " out of range [0, " +
                       std::to_string(table.rows()) + ")");
    const auto src = table.row(static_cast<std::size_t>(ids[r]));
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  Graph::BackwardFn fn;
  const bool tracked = g.recording() && table.requires_grad();
  if (tracked) {
    std::vector<int> idv(ids.begin(), ids.end());
    Shape tshape = table.shape();
    fn = [name, idv, tshape, dim](Graph& g, const Tensor&, std::span<const double> dy) {
      auto dt = g.param_grad(name, tshape);
      for (std::size_t r = 0; r < idv.size(); ++r)
        detail::add_into(dt.subspan(static_cast<std::size_t>(idv[r]) * dim, dim), dy.subspan(r * dim, dim));
    };
  }
  if (!tracked) return g.constant(std::move(out));
  return g.record_leaf("lookup", std::move(out), std::move(fn));
}

/// out[ids[i]] += x[i] over an output vector of length `n`.
inline Expr scatter_add(Expr x, std::span<const int> ids, std::size_t n) {
  detail::require_rank("scatter_add", x.value(), 1);
  if (ids.size() != x.size())
    throw DimensionError("scatter_add: " + std::to_string(ids.size()) + " ids for " + shape_string(x.shape()));
  Tensor out(Shape{n});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= n)
      throw IndexError("scatter_add: id " + std::to_string(ids[i]) + " out of range [0, " + std::to_string(n) + ")");
    out[static_cast<std::size_t>(ids[i])] += x.value()[i];
  }
  std::vector<int> idv(ids.begin(), ids.end());
  const std::size_t xi = x.id;
  return x.graph->record("scatter_add", std::move(out), {xi},
                         [xi, idv](Graph& g, const Tensor&, std::span<const double> dy) {
                           auto dx = g.grad_buffer(xi);
                           for (std::size_t i = 0; i < idv.size(); ++i) dx[i] += dy[static_cast<std::size_t>(idv[i])];
                         });
}

/// Zero-extends a vector to length `n`.
inline Expr pad(Expr x, std::size_t n) {
  detail::require_rank("pad", x.value(), 1);
  if (n < x.size()) throw DimensionError("pad: target " + std::to_string(n) + " shorter than " + shape_string(x.shape()));
  if (n == x.size()) return x;
  Tensor out(Shape{n});
  std::copy(x.value().data(), x.value().data() + x.size(), out.data());
  const std::size_t xi = x.id;
  return x.graph->record("pad", std::move(out), {xi},
                         [xi](Graph& g, const Tensor&, std::span<const double> dy) {
                           auto dx = g.grad_buffer(xi);
                           detail::add_into(dx, dy.subspan(0, dx.size()));
                         });
}

/// Inverted dropout: kept units are scaled by 1/(1-p) so inference needs no rescaling.
template <class Rng>
Expr dropout(Expr x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
  std::bernoulli_distribution keep(1.0 - p);
  Tensor mask(x.shape());
  for (auto& m : mask.values()) m = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
  return mul(x, x.graph->constant(std::move(mask)));
}

inline Expr operator+(Expr a, Expr b) { return add(a, b); }
inline Expr operator-(Expr a, Expr b) { return sub(a, b); }
inline Expr operator*(Expr a, Expr b) { return mul(a, b); }
inline Expr operator*(double c, Expr x) { return scale(x, c); }

}  // namespace copygen
