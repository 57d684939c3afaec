#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "elink/numerics/rng.hpp"
#include "elink/numerics/tape.hpp"
#include "elink/numerics/tensor.hpp"

// Differentiable tensor operations. Every op records its backward rule on
// the tape of its first operand; operands must share one tape.
namespace elink::ops {

namespace detail {

template <class Real>
void require_same_shape(const char* op, const Var<Real>& a, const Var<Real>& b) {
  if (a.shape() != b.shape()) throw_dimension_error(op, a.shape(), b.shape());
}

template <class Real>
void accumulate(Tape<Real>& t, std::size_t target, std::span<const Real> delta) {
  if (!t.needs_grad(target)) return;
  auto g = t.grad(target).data();
  for (std::size_t i = 0; i < delta.size(); ++i) g[i] += delta[i];
}

}  // namespace detail

template <class Real>
Var<Real> add(const Var<Real>& a, const Var<Real>& b) {
  detail::require_same_shape("add", a, b);
  Tensor<Real> out(a.shape());
  const auto x = a.value().data(), y = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(std::move(out), {ia, ib}, [ia, ib](Tape<Real>& t, std::size_t self) {
    const auto g = t.grad(self).data();
    detail::accumulate<Real>(t, ia, g);
    detail::accumulate<Real>(t, ib, t.grad(self).data());
  });
}

template <class Real>
Var<Real> sub(const Var<Real>& a, const Var<Real>& b) {
  detail::require_same_shape("sub", a, b);
  Tensor<Real> out(a.shape());
  const auto x = a.value().data(), y = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(std::move(out), {ia, ib}, [ia, ib](Tape<Real>& t, std::size_t self) {
    detail::accumulate<Real>(t, ia, t.grad(self).data());
    if (t.needs_grad(ib)) {
      auto gb = t.grad(ib).data();
      const auto g = t.grad(self).data();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

/// Elementwise product.
template <class Real>
Var<Real> mul(const Var<Real>& a, const Var<Real>& b) {
  detail::require_same_shape("mul", a, b);
  Tensor<Real> out(a.shape());
  const auto x = a.value().data(), y = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(std::move(out), {ia, ib}, [ia, ib](Tape<Real>& t, std::size_t self) {
    const auto g = t.grad(self).data();
    const auto x = t.value(ia).data(), y = t.value(ib).data();
    if (t.needs_grad(ia)) {
      auto ga = t.grad(ia).data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (t.needs_grad(ib)) {
      auto gb = t.grad(ib).data();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

template <class Real>
Var<Real> scale(const Var<Real>& a, Real c) {
  Tensor<Real> out(a.shape());
  const auto x = a.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * x[i];
  const std::size_t ia = a.id();
  return a.tape().push(std::move(out), {ia}, [ia, c](Tape<Real>& t, std::size_t self) {
    auto ga = t.grad(ia).data();
    const auto g = t.grad(self).data();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

template <class Real>
Var<Real> neg(const Var<Real>& a) {
  return scale(a, Real{-1});
}

/// x + b with b broadcast along every trailing-axis row of x.
template <class Real>
Var<Real> add_bias(const Var<Real>& x, const Var<Real>& b) {
  const std::size_t w = x.value().last_dim();
  if (b.value().rank() != 1 || b.value().size() != w) throw_dimension_error("add_bias", x.shape(), b.shape());
  Tensor<Real> out = x.value();
  const auto bb = b.value().data();
  for (std::size_t r = 0; r < out.outer_size(); ++r)
    for (std::size_t k = 0; k < w; ++k) out.at(r, k) += bb[k];
  const std::size_t ix = x.id(), ib = b.id();
  return x.tape().push(std::move(out), {ix, ib}, [ix, ib, w](Tape<Real>& t, std::size_t self) {
    const Tensor<Real>& g = t.grad(self);
    detail::accumulate<Real>(t, ix, g.data());
    if (t.needs_grad(ib)) {
      auto gb = t.grad(ib).data();
      for (std::size_t r = 0; r < g.outer_size(); ++r)
        for (std::size_t k = 0; k < w; ++k) gb[k] += g.at(r, k);
    }
  });
}

/// Matrix product with numpy-style 1-D promotion: (m,k)(k,n), (k)(k,n), (m,k)(k), (k)(k).
template <class Real>
Var<Real> matmul(const Var<Real>& a, const Var<Real>& b) {
  const Tensor<Real>& A = a.value();
  const Tensor<Real>& B = b.value();
  if (A.rank() < 1 || A.rank() > 2 || B.rank() < 1 || B.rank() > 2) throw_dimension_error("matmul", A.shape(), B.shape());
  const std::size_t m = A.rank() == 2 ? A.dim(0) : 1;
  const std::size_t k = A.rank() == 2 ? A.dim(1) : A.dim(0);
  const std::size_t kb = B.dim(0);
  const std::size_t n = B.rank() == 2 ? B.dim(1) : 1;
  if (k != kb) throw_dimension_error("matmul", A.shape(), B.shape());
  Shape out_shape;
  if (A.rank() == 2) out_shape.push_back(m);
  if (B.rank() == 2) out_shape.push_back(n);
  Tensor<Real> out(out_shape);
  const auto x = A.data(), y = B.data();
  auto o = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = x[i * k + p];
      if (av == Real{0}) continue;
      for (std::size_t j = 0; j < n; ++j) o[i * n + j] += av * y[p * n + j];
    }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(std::move(out), {ia, ib}, [ia, ib, m, k, n](Tape<Real>& t, std::size_t self) {
    const auto g = t.grad(self).data();
    const auto x = t.value(ia).data(), y = t.value(ib).data();
    if (t.needs_grad(ia)) {
      auto ga = t.grad(ia).data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          Real s = 0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * y[p * n + j];
          ga[i * k + p] += s;
        }
    }
    if (t.needs_grad(ib)) {
      auto gb = t.grad(ib).data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const Real av = x[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
        }
    }
  });
}

/// x Wᵀ for x of shape (k) or (rows, k) and W of shape (m, k).
template <class Real>
Var<Real> linear(const Var<Real>& x, const Var<Real>& w) {
  const Tensor<Real>& X = x.value();
  const Tensor<Real>& W = w.value();
  if (W.rank() != 2 || X.rank() < 1 || X.rank() > 2 || X.last_dim() != W.dim(1)) {
    throw_dimension_error("linear", X.shape(), W.shape());
  }
  const std::size_t rows = X.rank() == 2 ? X.dim(0) : 1;
  const std::size_t k = W.dim(1), m = W.dim(0);
  Shape out_shape = X.rank() == 2 ? Shape{rows, m} : Shape{m};
  Tensor<Real> out(out_shape);
  const auto xv = X.data(), wv = W.data();
  auto o = out.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < m; ++j) {
      Real s = 0;
      const Real* xr = xv.data() + r * k;
      const Real* wr = wv.data() + j * k;
      for (std::size_t p = 0; p < k; ++p) s += xr[p] * wr[p];
      o[r * m + j] = s;
    }
  const std::size_t ix = x.id(), iw = w.id();
  return x.tape().push(std::move(out), {ix, iw}, [ix, iw, rows, k, m](Tape<Real>& t, std::size_t self) {
    const auto g = t.grad(self).data();
    const auto xv = t.value(ix).data(), wv = t.value(iw).data();
    if (t.needs_grad(ix)) {
      auto gx = t.grad(ix).data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < m; ++j) {
          const Real gj = g[r * m + j];
          if (gj == Real{0}) continue;
          for (std::size_t p = 0; p < k; ++p) gx[r * k + p] += gj * wv[j * k + p];
        }
    }
    if (t.needs_grad(iw)) {
      auto gw = t.grad(iw).data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < m; ++j) {
          const Real gj = g[r * m + j];
          if (gj == Real{0}) continue;
          for (std::size_t p = 0; p < k; ++p) gw[j * k + p] += gj * xv[r * k + p];
        }
    }
  });
}

/// Concatenation along the trailing axis; leading shapes must agree.
template <class Real>
Var<Real> concat(const std::vector<Var<Real>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no operands");
  const Tensor<Real>& first = parts.front().value();
  Shape lead(first.shape().begin(), first.shape().end() - (first.rank() ? 1 : 0));
  std::size_t width = 0;
  std::vector<std::size_t> widths, ids;
  for (const auto& p : parts) {
    const Tensor<Real>& v = p.value();
    Shape l(v.shape().begin(), v.shape().end() - (v.rank() ? 1 : 0));
    if (l != lead || v.rank() != first.rank() || v.rank() == 0) throw_dimension_error("concat", first.shape(), v.shape());
    widths.push_back(v.last_dim());
    ids.push_back(p.id());
    width += v.last_dim();
  }
  Shape out_shape = lead;
  out_shape.push_back(width);
  Tensor<Real> out(out_shape);
  const std::size_t rows = out.outer_size();
  std::size_t offset = 0;
  for (std::size_t q = 0; q < parts.size(); ++q) {
    const Tensor<Real>& v = parts[q].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.row(r).begin(), widths[q], out.row(r).begin() + offset);
    offset += widths[q];
  }
  return parts.front().tape().push(std::move(out), ids, [ids, widths, rows](Tape<Real>& t, std::size_t self) {
    const Tensor<Real>& g = t.grad(self);
    std::size_t offset = 0;
    for (std::size_t q = 0; q < ids.size(); ++q) {
      if (t.needs_grad(ids[q])) {
        Tensor<Real>& gq = t.grad(ids[q]);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[q]; ++c) gq.at(r, c) += g.at(r, offset + c);
      }
      offset += widths[q];
    }
  });
}

/// Columns [begin, end) of the trailing axis.
template <class Real>
Var<Real> slice(const Var<Real>& x, std::size_t begin, std::size_t end) {
  const Tensor<Real>& X = x.value();
  if (X.rank() == 0 || begin > end || end > X.last_dim()) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of shape " +
                         shape_string(X.shape()));
  }
  Shape out_shape = X.shape();
  out_shape.back() = end - begin;
  Tensor<Real> out(out_shape);
  const std::size_t rows = X.outer_size();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(X.row(r).begin() + begin, end - begin, out.row(r).begin());
  const std::size_t ix = x.id();
  return x.tape().push(std::move(out), {ix}, [ix, begin, end, rows](Tape<Real>& t, std::size_t self) {
    const Tensor<Real>& g = t.grad(self);
    Tensor<Real>& gx = t.grad(ix);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = begin; c < end; ++c) gx.at(r, c) += g.at(r, c - begin);
  });
}

template <class Real>
Var<Real> reshape(const Var<Real>& x, Shape shape) {
  Tensor<Real> out = x.value().reshaped(std::move(shape));
  const std::size_t ix = x.id();
  return x.tape().push(std::move(out), {ix}, [ix](Tape<Real>& t, std::size_t self) {
    detail::accumulate<Real>(t, ix, t.grad(self).data());
  });
}

/// Stacks equally sized 1-D vectors into a (n, d) matrix.
template <class Real>
Var<Real> stack_rows(const std::vector<Var<Real>>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no operands");
  const std::size_t d = rows.front().size();
  std::vector<std::size_t> ids;
  Tensor<Real> out({rows.size(), d});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].value().rank() != 1 || rows[r].size() != d) {
      throw_dimension_error("stack_rows", rows.front().shape(), rows[r].shape());
    }
    std::copy_n(rows[r].value().data().begin(), d, out.row(r).begin());
    ids.push_back(rows[r].id());
  }
  return rows.front().tape().push(std::move(out), ids, [ids, d](Tape<Real>& t, std::size_t self) {
    const Tensor<Real>& g = t.grad(self);
    for (std::size_t r = 0; r < ids.size(); ++r) detail::accumulate<Real>(t, ids[r], g.row(r));
  });
}

/// Repeats a 1-D vector as n identical rows.
template <class Real>
Var<Real> broadcast_rows(const Var<Real>& v, std::size_t n) {
  if (v.value().rank() != 1) throw DimensionError("broadcast_rows: expected a vector, got " + shape_string(v.shape()));
  const std::size_t d = v.size();
  Tensor<Real> out({n, d});
  for (std::size_t r = 0; r < n; ++r) std::copy_n(v.value().data().begin(), d, out.row(r).begin());
  const std::size_t iv = v.id();
  return v.tape().push(std::move(out), {iv}, [iv, n, d](Tape<Real>& t, std::size_t self) {
    const Tensor<Real>& g = t.grad(self);
    auto gv = t.grad(iv).data();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) gv[c] += g.at(r, c);
  });
}

/// Rows `ids` of a (V, d) table as an (n, d) matrix.
template <class Real>
Var<Real> gather_rows(const Var<Real>& table, std::vector<std::size_t> ids) {
  const Tensor<Real>& T = table.value();
  if (T.rank() != 2) throw DimensionError("gather_rows: table must be 2-D, got " + shape_string(T.shape()));
  const std::size_t d = T.dim(1);
  Tensor<Real> out({ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= T.dim(0)) throw std::out_of_range("gather_rows: row " + std::to_string(ids[r]) + " of " + shape_string(T.shape()));
    std::copy_n(T.row(ids[r]).begin(), d, out.row(r).begin());
  }
  const std::size_t it = table.id();
  return table.tape().push(std::move(out), {it}, [it, ids = std::move(ids), d](Tape<Real>& t, std::size_t self) {
    const Tensor<Real>& g = t.grad(self);
    Tensor<Real>& gt = t.grad(it);
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::size_t c = 0; c < d; ++c) gt.at(ids[r], c) += g.at(r, c);
  });
}

/// Row `id` of a (V, d) table as a d-vector.
template <class Real>
Var<Real> gather_row(const Var<Real>& table, std::size_t id) {
  const Tensor<Real>& T = table.value();
  if (T.rank() != 2) throw DimensionError("gather_row: table must be 2-D, got " + shape_string(T.shape()));
  if (id >= T.dim(0)) throw std::out_of_range("gather_row: row " + std::to_string(id) + " of " + shape_string(T.shape()));
  const std::size_t d = T.dim(1);
  Tensor<Real> out({d});
  std::copy_n(T.row(id).begin(), d, out.data().begin());
  const std::size_t it = table.id();
  return table.tape().push(std::move(out), {it}, [it, id, d](Tape<Real>& t, std::size_t self) {
    const auto g = t.grad(self).data();
    auto row = t.grad(it).row(id);
    for (std::size_t c = 0; c < d; ++c) row[c] += g[c];
  });
}

/// Entries `idx` of a 1-D vector.
template <class Real>
Var<Real> select(const Var<Real>& x, std::vector<std::size_t> idx) {
  if (x.value().rank() != 1) throw DimensionError("select: expected a vector, got " + shape_string(x.shape()));
  Tensor<Real> out({idx.size()});
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = x.value().data()[idx.at(i)];
  const std::size_t ix = x.id();
  return x.tape().push(std::move(out), {ix}, [ix, idx = std::move(idx)](Tape<Real>& t, std::size_t self) {
    const auto g = t.grad(self).data();
    auto gx = t.grad(ix).data();
    for (std::size_t i = 0; i < idx.size(); ++i) gx[idx[i]] += g[i];
  });
}

/// Scalar entry i of a tensor (flat index).
template <class Real>
Var<Real> pick(const Var<Real>& x, std::size_t i) {
  if (i >= x.size()) throw std::out_of_range("pick: index " + std::to_string(i) + " of " + shape_string(x.shape()));
  const std::size_t ix = x.id();
  return x.tape().push(Tensor<Real>::scalar(x.value()[i]), {ix}, [ix, i](Tape<Real>& t, std::size_t self) {
    t.grad(ix)[i] += t.grad(self)[0];
  });
}

template <class Real>
Var<Real> sum(const Var<Real>& x) {
  Real s = 0;
  for (Real v : x.value().data()) s += v;
  const std::size_t ix = x.id();
  return x.tape().push(Tensor<Real>::scalar(s), {ix}, [ix](Tape<Real>& t, std::size_t self) {
    const Real g = t.grad(self)[0];
    for (Real& v : t.grad(ix).data()) v += g;
  });
}

template <class Real>
Var<Real> mean(const Var<Real>& x) {
  return scale(sum(x), Real{1} / static_cast<Real>(x.size()));
}

template <class Real>
Var<Real> dot(const Var<Real>& a, const Var<Real>& b) {
  return sum(mul(a, b));
}

/// Σ_i coef_i · x_i over scalar operands, recorded as one node.
template <class Real>
Var<Real> weighted_sum(const std::vector<Var<Real>>& scalars, const std::vector<Real>& coefs) {
  if (scalars.empty()) throw std::invalid_argument("weighted_sum: no operands");
  if (scalars.size() != coefs.size()) throw std::invalid_argument("weighted_sum: operand/coefficient count mismatch");
  Real s = 0;
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    s += coefs[i] * scalars[i].item();
    ids.push_back(scalars[i].id());
  }
  return scalars.front().tape().push(Tensor<Real>::scalar(s), ids, [ids, coefs](Tape<Real>& t, std::size_t self) {
    const Real g = t.grad(self)[0];
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (t.needs_grad(ids[i])) t.grad(ids[i])[0] += coefs[i] * g;
  });
}

// ---- elementwise nonlinearities ------------------------------------------------

template <class Real>
Var<Real> sigmoid(const Var<Real>& x) {
  Tensor<Real> out(x.shape());
  const auto in = x.value().data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const Real v = in[i];
    out[i] = v >= 0 ? Real{1} / (Real{1} + std::exp(-v)) : std::exp(v) / (Real{1} + std::exp(v));
  }
  const std::size_t ix = x.id();
  return x.tape().push(std::move(out), {ix}, [ix](Tape<Real>& t, std::size_t self) {
    const auto g = t.grad(self).data();
    const auto y = t.value(self).data();
    auto gx = t.grad(ix).data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (Real{1} - y[i]);
  });
}

template <class Real>
Var<Real> tanh(const Var<Real>& x) {
  Tensor<Real> out(x.shape());
  const auto in = x.value().data();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::tanh(in[i]);
  const std::size_t ix = x.id();
  return x.tape().push(std::move(out), {ix}, [ix](Tape<Real>& t, std::size_t self) {
    const auto g = t.grad(self).data();
    const auto y = t.value(self).data();
    auto gx = t.grad(ix).data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (Real{1} - y[i] * y[i]);
  });
}

template <class Real>
Var<Real> leaky_relu(const Var<Real>& x, Real slope) {
  Tensor<Real> out(x.shape());
  const auto in = x.value().data();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0 ? in[i] : slope * in[i];
  const std::size_t ix = x.id();
  return x.tape().push(std::move(out), {ix}, [ix, slope](Tape<Real>& t, std::size_t self) {
    const auto g = t.grad(self).data();
    const auto in = t.value(ix).data();
    auto gx = t.grad(ix).data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += in[i] > 0 ? g[i] : slope * g[i];
  });
}

template <class Real>
Var<Real> relu(const Var<Real>& x) {
  return leaky_relu(x, Real{0});
}

template <class Real>
Var<Real> exp(const Var<Real>& x) {
  Tensor<Real> out(x.shape());
  const auto in = x.value().data();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::exp(in[i]);
  const std::size_t ix = x.id();
  return x.tape().push(std::move(out), {ix}, [ix](Tape<Real>& t, std::size_t self) {
    const auto g = t.grad(self).data();
    const auto y = t.value(self).data();
    auto gx = t.grad(ix).data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i];
  });
}

template <class Real>
Var<Real> log(const Var<Real>& x) {
  Tensor<Real> out(x.shape());
  const auto in = x.value().data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!(in[i] > 0)) throw std::domain_error("log: non-positive input");
    out[i] = std::log(in[i]);
  }
  const std::size_t ix = x.id();
  return x.tape().push(std::move(out), {ix}, [ix](Tape<Real>& t, std::size_t self) {
    const auto g = t.grad(self).data();
    const auto in = t.value(ix).data();
    auto gx = t.grad(ix).data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / in[i];
  });
}

// ---- normalizations -------------------------------------------------------------

/// Softmax along the trailing axis.
template <class Real>
Var<Real> softmax(const Var<Real>& x) {
  Tensor<Real> out(x.shape());
  const Tensor<Real>& X = x.value();
  const std::size_t w = X.last_dim();
  for (std::size_t r = 0; r < X.outer_size(); ++r) {
    const auto in = X.row(r);
    auto o = out.row(r);
    const Real mx = *std::max_element(in.begin(), in.end());
    Real z = 0;
    for (std::size_t c = 0; c < w; ++c) z += (o[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < w; ++c) o[c] /= z;
  }
  const std::size_t ix = x.id();
  return x.tape().push(std::move(out), {ix}, [ix, w](Tape<Real>& t, std::size_t self) {
    const Tensor<Real>& g = t.grad(self);
    const Tensor<Real>& y = t.value(self);
    Tensor<Real>& gx = t.grad(ix);
    for (std::size_t r = 0; r < g.outer_size(); ++r) {
      Real s = 0;
      for (std::size_t c = 0; c < w; ++c) s += g.at(r, c) * y.at(r, c);
      for (std::size_t c = 0; c < w; ++c) gx.at(r, c) += y.at(r, c) * (g.at(r, c) - s);
    }
  });
}

/// Softmax along the trailing axis restricted to entries with mask != 0;
/// masked entries receive probability exactly 0.
template <class Real>
Var<Real> masked_softmax(const Var<Real>& x, const std::vector<bool>& mask) {
  const Tensor<Real>& X = x.value();
  if (mask.size() != X.size()) {
    throw DimensionError("masked_softmax: mask of size " + std::to_string(mask.size()) + " for shape " + shape_string(X.shape()));
  }
  const std::size_t w = X.last_dim();
  Tensor<Real> out(X.shape());
  for (std::size_t r = 0; r < X.outer_size(); ++r) {
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t c = 0; c < w; ++c)
      if (mask[r * w + c]) mx = std::max(mx, X.at(r, c));
    if (!std::isfinite(mx)) throw std::invalid_argument("masked_softmax: every entry of a row is masked");
    Real z = 0;
    for (std::size_t c = 0; c < w; ++c)
      if (mask[r * w + c]) z += (out.at(r, c) = std::exp(X.at(r, c) - mx));
    for (std::size_t c = 0; c < w; ++c) out.at(r, c) /= z;
  }
  const std::size_t ix = x.id();
  return x.tape().push(std::move(out), {ix}, [ix, w](Tape<Real>& t, std::size_t self) {
    const Tensor<Real>& g = t.grad(self);
    const Tensor<Real>& y = t.value(self);
    Tensor<Real>& gx = t.grad(ix);
    for (std::size_t r = 0; r < g.outer_size(); ++r) {
      Real s = 0;
      for (std::size_t c = 0; c < w; ++c) s += g.at(r, c) * y.at(r, c);
      for (std::size_t c = 0; c < w; ++c) gx.at(r, c) += y.at(r, c) * (g.at(r, c) - s);
    }
  });
}

/// Log-softmax along the trailing axis.
template <class Real>
Var<Real> log_softmax(const Var<Real>& x) {
  Tensor<Real> out(x.shape());
  const Tensor<Real>& X = x.value();
  const std::size_t w = X.last_dim();
  for (std::size_t r = 0; r < X.outer_size(); ++r) {
    const auto in = X.row(r);
    auto o = out.row(r);
    const Real mx = *std::max_element(in.begin(), in.end());
    Real z = 0;
    for (std::size_t c = 0; c < w; ++c) z += std::exp(in[c] - mx);
    const Real lz = mx + std::log(z);
    for (std::size_t c = 0; c < w; ++c) o[c] = in[c] - lz;
  }
  const std::size_t ix = x.id();
  return x.tape().push(std::move(out), {ix}, [ix, w](Tape<Real>& t, std::size_t self) {
    const Tensor<Real>& g = t.grad(self);
    const Tensor<Real>& y = t.value(self);
    Tensor<Real>& gx = t.grad(ix);
    for (std::size_t r = 0; r < g.outer_size(); ++r) {
      Real s = 0;
      for (std::size_t c = 0; c < w; ++c) s += g.at(r, c);
      for (std::size_t c = 0; c < w; ++c) gx.at(r, c) += g.at(r, c) - std::exp(y.at(r, c)) * s;
    }
  });
}

/// Layer normalization over the trailing axis, without affine parameters.
template <class Real>
Var<Real> layer_norm(const Var<Real>& x, Real eps) {
  const Tensor<Real>& X = x.value();
  const std::size_t w = X.last_dim();
  Tensor<Real> out(X.shape());
  std::vector<Real> inv_std(X.outer_size());
  for (std::size_t r = 0; r < X.outer_size(); ++r) {
    const auto in = X.row(r);
    Real mu = 0;
    for (Real v : in) mu += v;
    mu /= static_cast<Real>(w);
    Real var = 0;
    for (Real v : in) var += (v - mu) * (v - mu);
    var /= static_cast<Real>(w);
    inv_std[r] = Real{1} / std::sqrt(var + eps);
    for (std::size_t c = 0; c < w; ++c) out.at(r, c) = (in[c] - mu) * inv_std[r];
  }
  const std::size_t ix = x.id();
  return x.tape().push(std::move(out), {ix}, [ix, w, inv_std = std::move(inv_std)](Tape<Real>& t, std::size_t self) {
    const Tensor<Real>& g = t.grad(self);
    const Tensor<Real>& y = t.value(self);
    Tensor<Real>& gx = t.grad(ix);
    for (std::size_t r = 0; r < g.outer_size(); ++r) {
      Real mg = 0, mgy = 0;
      for (std::size_t c = 0; c < w; ++c) {
        mg += g.at(r, c);
        mgy += g.at(r, c) * y.at(r, c);
      }
      mg /= static_cast<Real>(w);
      mgy /= static_cast<Real>(w);
      for (std::size_t c = 0; c < w; ++c) gx.at(r, c) += inv_std[r] * (g.at(r, c) - mg - y.at(r, c) * mgy);
    }
  });
}

/// Layer normalization followed by the per-feature affine map gamma * x̂ + beta.
template <class Real>
Var<Real> layer_norm(const Var<Real>& x, const Var<Real>& gamma, const Var<Real>& beta, Real eps) {
  const Var<Real> normalized = layer_norm(x, eps);
  const std::size_t rows = normalized.value().outer_size();
  const Var<Real> g = normalized.value().rank() == 1 ? gamma : broadcast_rows(gamma, rows);
  return add_bias(mul(normalized, g), beta);
}

/// Inverted dropout; identity when not training or rate is zero.
template <class Real>
Var<Real> dropout(const Var<Real>& x, double rate, Rng& rng, bool training) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  const Real keep_scale = static_cast<Real>(1.0 / (1.0 - rate));
  Tensor<Real> mask(x.shape());
  for (Real& m : mask.data()) m = rng.uniform() < rate ? Real{0} : keep_scale;
  return mul(x, x.tape().constant(std::move(mask)));
}

// ---- structured ops ---------------------------------------------------------------

/// 2-D cross-correlation, stride 1, zero padding of `pad` cells on each side.
/// input (C, H, W), kernel (O, C, kh, kw), bias (O) -> (O, H + 2 pad - kh + 1, W + 2 pad - kw + 1).
template <class Real>
Var<Real> conv2d(const Var<Real>& input, const Var<Real>& kernel, const Var<Real>& bias, std::size_t pad = 0) {
  const Tensor<Real>& X = input.value();
  const Tensor<Real>& K = kernel.value();
  if (X.rank() != 3 || K.rank() != 4 || K.dim(1) != X.dim(0)) throw_dimension_error("conv2d", X.shape(), K.shape());
  if (bias.value().rank() != 1 || bias.size() != K.dim(0)) throw_dimension_error("conv2d(bias)", K.shape(), bias.shape());
  const std::size_t C = X.dim(0), H = X.dim(1), W = X.dim(2);
  const std::size_t O = K.dim(0), kh = K.dim(2), kw = K.dim(3);
  if (H + 2 * pad < kh || W + 2 * pad < kw) throw_dimension_error("conv2d", X.shape(), K.shape());
  const std::size_t Ho = H + 2 * pad - kh + 1, Wo = W + 2 * pad - kw + 1;
  Tensor<Real> out({O, Ho, Wo});
  const auto x = X.data(), k = K.data(), b = bias.value().data();
  auto o = out.data();
  for (std::size_t oc = 0; oc < O; ++oc)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        Real s = b[oc];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t u = 0; u < kh; ++u) {
            const std::ptrdiff_t yi = static_cast<std::ptrdiff_t>(i + u) - static_cast<std::ptrdiff_t>(pad);
            if (yi < 0 || yi >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t v = 0; v < kw; ++v) {
              const std::ptrdiff_t xj = static_cast<std::ptrdiff_t>(j + v) - static_cast<std::ptrdiff_t>(pad);
              if (xj < 0 || xj >= static_cast<std::ptrdiff_t>(W)) continue;
              s += k[((oc * C + c) * kh + u) * kw + v] * x[(c * H + yi) * W + xj];
            }
          }
        o[(oc * Ho + i) * Wo + j] = s;
      }
  const std::size_t ii = input.id(), ik = kernel.id(), ib = bias.id();
  return input.tape().push(
      std::move(out), {ii, ik, ib}, [=](Tape<Real>& t, std::size_t self) {
        const auto g = t.grad(self).data();
        const auto x = t.value(ii).data(), k = t.value(ik).data();
        const bool need_x = t.needs_grad(ii), need_k = t.needs_grad(ik);
        Real* gx = need_x ? t.grad(ii).data().data() : nullptr;
        Real* gk = need_k ? t.grad(ik).data().data() : nullptr;
        if (t.needs_grad(ib)) {
          auto gb = t.grad(ib).data();
          for (std::size_t oc = 0; oc < O; ++oc)
            for (std::size_t p = 0; p < Ho * Wo; ++p) gb[oc] += g[oc * Ho * Wo + p];
        }
        for (std::size_t oc = 0; oc < O; ++oc)
          for (std::size_t i = 0; i < Ho; ++i)
            for (std::size_t j = 0; j < Wo; ++j) {
              const Real go = g[(oc * Ho + i) * Wo + j];
              if (go == Real{0}) continue;
              for (std::size_t c = 0; c < C; ++c)
                for (std::size_t u = 0; u < kh; ++u) {
                  const std::ptrdiff_t yi = static_cast<std::ptrdiff_t>(i + u) - static_cast<std::ptrdiff_t>(pad);
                  if (yi < 0 || yi >= static_cast<std::ptrdiff_t>(H)) continue;
                  for (std::size_t v = 0; v < kw; ++v) {
                    const std::ptrdiff_t xj = static_cast<std::ptrdiff_t>(j + v) - static_cast<std::ptrdiff_t>(pad);
                    if (xj < 0 || xj >= static_cast<std::ptrdiff_t>(W)) continue;
                    const std::size_t kidx = ((oc * C + c) * kh + u) * kw + v;
                    const std::size_t xidx = (c * H + yi) * W + xj;
                    if (gx) gx[xidx] += go * k[kidx];
                    if (gk) gk[kidx] += go * x[xidx];
                  }
                }
            }
      });
}

/// Mean binary cross-entropy between logits and constant targets in [0, 1].
template <class Real>
Var<Real> bce_with_logits(const Var<Real>& logits, const Tensor<Real>& targets) {
  if (logits.shape() != targets.shape()) throw_dimension_error("bce_with_logits", logits.shape(), targets.shape());
  const auto x = logits.value().data(), y = targets.data();
  const std::size_t n = x.size();
  Real loss = 0;
  for (std::size_t i = 0; i < n; ++i) loss += std::max(x[i], Real{0}) - x[i] * y[i] + std::log1p(std::exp(-std::abs(x[i])));
  loss /= static_cast<Real>(n);
  const std::size_t il = logits.id();
  return logits.tape().push(Tensor<Real>::scalar(loss), {il}, [il, targets, n](Tape<Real>& t, std::size_t self) {
    const Real g = t.grad(self)[0] / static_cast<Real>(n);
    const auto x = t.value(il).data();
    auto gx = t.grad(il).data();
    for (std::size_t i = 0; i < n; ++i) {
      const Real s = x[i] >= 0 ? Real{1} / (Real{1} + std::exp(-x[i])) : std::exp(x[i]) / (Real{1} + std::exp(x[i]));
      gx[i] += g * (s - targets[i]);
    }
  });
}

/// Entropy -Σ p log p of the distribution given by log-probabilities.
template <class Real>
Var<Real> entropy_from_log_probs(const Var<Real>& log_probs) {
  return neg(sum(mul(exp(log_probs), log_probs)));
}

// ---- recurrent cell -----------------------------------------------------------------

template <class Real>
struct LstmState {
  Var<Real> hidden;
  Var<Real> cell;
};

/// One LSTM cell step with gate order (input, forget, candidate, output):
///   z = W_ih x + W_hh h + b;  c' = σ(f) c + σ(i) tanh(g);  h' = σ(o) tanh(c').
template <class Real>
LstmState<Real> lstm_cell(const Var<Real>& x, const LstmState<Real>& state, const Var<Real>& w_ih,
                          const Var<Real>& w_hh, const Var<Real>& bias) {
  const std::size_t hidden = state.hidden.size();
  if (w_ih.value().rank() != 2 || w_ih.value().dim(0) != 4 * hidden) throw_dimension_error("lstm_cell(W_ih)", w_ih.shape(), state.hidden.shape());
  if (w_hh.value().rank() != 2 || w_hh.value().dim(0) != 4 * hidden) throw_dimension_error("lstm_cell(W_hh)", w_hh.shape(), state.hidden.shape());
  const Var<Real> z = add(add(linear(x, w_ih), linear(state.hidden, w_hh)), bias);
  const Var<Real> in_gate = sigmoid(slice(z, 0, hidden));
  const Var<Real> forget_gate = sigmoid(slice(z, hidden, 2 * hidden));
  const Var<Real> candidate = tanh(slice(z, 2 * hidden, 3 * hidden));
  const Var<Real> out_gate = sigmoid(slice(z, 3 * hidden, 4 * hidden));
  const Var<Real> cell = add(mul(forget_gate, state.cell), mul(in_gate, candidate));
  return {mul(out_gate, tanh(cell)), cell};
}

}  // namespace elink::ops
