#include "tactis/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace tactis::ad {

namespace {

using ImplPtr = std::shared_ptr<TensorImpl>;

bool wants_grad(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr) return false;
  for (const auto* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

bool wants_grad(const std::vector<Tensor>& inputs) {
  if (active_tape() == nullptr) return false;
  for (const auto& t : inputs)
    if (t.requires_grad()) return true;
  return false;
}

void record(std::string_view op, const Tensor& out, std::vector<ImplPtr> inputs,
            std::function<void()> backward) {
  active_tape()->record({op, out.impl(), std::move(inputs), std::move(backward)});
}

Shape broadcast_shape(std::string_view op, const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da == db || db == 1) {
      out[i] = da;
    } else if (da == 1) {
      out[i] = db;
    } else {
      throw ShapeError(op, {a, b}, "not broadcastable");
    }
  }
  return out;
}

std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t s = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    const std::size_t oi = i + out.size() - in.size();
    strides[oi] = in[i] == 1 ? 0 : s;
    s *= in[i];
  }
  return strides;
}

template <class F>
void for_each_index(const Shape& out, const std::vector<std::size_t>& sa,
                    const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t n = numel(out);
  const std::size_t r = out.size();
  if (r == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  std::vector<std::size_t> ctr(r, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < n; ++i) {
    f(i, ia, ib);
    for (std::size_t d = r; d-- > 0;) {
      ++ctr[d];
      ia += sa[d];
      ib += sb[d];
      if (ctr[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      ctr[d] = 0;
    }
  }
}

// fwd(x, y) -> value; da(x, y) and db(x, y) are the partial derivatives.
template <class Fwd, class DA, class DB>
Tensor binary(std::string_view name, const Tensor& a, const Tensor& b, Fwd fwd, DA da, DB db) {
  const auto& xa = a.impl()->data;
  const auto& xb = b.impl()->data;
  const bool same = a.shape() == b.shape();
  Shape shape = same ? a.shape() : broadcast_shape(name, a.shape(), b.shape());
  std::vector<double> out(numel(shape));
  std::vector<std::size_t> sa, sb;
  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xa[i], xb[i]);
  } else {
    sa = broadcast_strides(a.shape(), shape);
    sb = broadcast_strides(b.shape(), shape);
    for_each_index(shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      out[i] = fwd(xa[ia], xb[ib]);
    });
  }
  Tensor result = Tensor::constant(shape, std::move(out));
  if (wants_grad({&a, &b})) {
    auto ai = a.impl(), bi = b.impl();
    auto* oi = result.impl().get();
    record(name, result, {ai, bi}, [ai, bi, oi, same, sa, sb, fwd, da, db]() {
      const auto& g = oi->grad;
      const auto& xa = ai->data;
      const auto& xb = bi->data;
      double* ga = ai->requires_grad ? ai->ensure_grad().data() : nullptr;
      double* gb = bi->requires_grad ? bi->ensure_grad().data() : nullptr;
      if (same) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (ga) ga[i] += g[i] * da(xa[i], xb[i]);
          if (gb) gb[i] += g[i] * db(xa[i], xb[i]);
        }
      } else {
        for_each_index(oi->shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
          if (ga) ga[ia] += g[i] * da(xa[ia], xb[ib]);
          if (gb) gb[ib] += g[i] * db(xa[ia], xb[ib]);
        });
      }
    });
  }
  return result;
}

// fwd(x) -> y; deriv(x, y) -> dy/dx.
template <class Fwd, class Deriv>
Tensor unary(std::string_view name, const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto& xs = x.impl()->data;
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = fwd(xs[i]);
  Tensor result = Tensor::constant(x.shape(), std::move(out));
  if (wants_grad({&x})) {
    auto xi = x.impl();
    auto* oi = result.impl().get();
    record(name, result, {xi}, [xi, oi, deriv]() {
      auto& gx = xi->ensure_grad();
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xi->data[i], oi->data[i]);
    });
  }
  return result;
}

struct AxisLayout {
  std::size_t outer, n, inner;
};

AxisLayout layout(std::string_view op, const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) throw ShapeError(op, {shape}, "axis " + std::to_string(axis));
  AxisLayout l{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) l.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) l.inner *= shape[i];
  return l;
}

Shape reduced_shape(const Shape& shape, std::size_t axis, bool keepdim) {
  Shape out = shape;
  if (keepdim) {
    out[axis] = 1;
  } else {
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  return out;
}

double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// C(m,n) += A(m,k) B(k,n)
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// dA(m,k) += dC(m,n) B(k,n)^T ; dB(k,n) += A(m,k)^T dC(m,n)
void gemm_backward(const double* a, const double* b, const double* dc, double* da, double* db,
                   std::size_t m, std::size_t k, std::size_t n) {
  if (da) {
    // axpy over B^T rows instead of dot products: vectorizes without reassociation
    thread_local std::vector<double> bt;
    bt.resize(n * k);
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
    for (std::size_t i = 0; i < m; ++i) {
      const double* dci = dc + i * n;
      double* dai = da + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const double g = dci[j];
        const double* btj = bt.data() + j * k;
        for (std::size_t p = 0; p < k; ++p) dai[p] += g * btj[p];
      }
    }
  }
  if (db) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* dci = dc + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a[i * k + p];
        double* dbp = db + p * n;
        for (std::size_t j = 0; j < n; ++j) dbp[j] += av * dci[j];
      }
    }
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Tensor add(const Tensor& a, double b) {
  return unary(
      "add_scalar", a, [b](double x) { return x + b; }, [](double, double) { return 1.0; });
}

Tensor mul(const Tensor& a, double b) {
  return unary(
      "mul_scalar", a, [b](double x) { return x * b; }, [b](double, double) { return b; });
}

Tensor neg(const Tensor& a) { return mul(a, -1.0); }

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
  return unary("softplus", x, softplus_value, [](double v, double) { return sigmoid_value(v); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.dim() < 2 || b.dim() < 2) throw ShapeError("matmul", {a.shape(), b.shape()}, "rank < 2");
  const std::size_t m = a.shape()[a.dim() - 2];
  const std::size_t k = a.shape().back();
  const std::size_t kb = b.shape()[b.dim() - 2];
  const std::size_t n = b.shape().back();
  if (k != kb) throw ShapeError("matmul", {a.shape(), b.shape()}, "inner dimensions differ");

  const bool shared_rhs = b.dim() == 2;
  if (!shared_rhs) {
    if (a.dim() != b.dim() ||
        !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin())) {
      throw ShapeError("matmul", {a.shape(), b.shape()}, "batch dimensions differ");
    }
  }
  const std::size_t batch = a.numel() / (m * k);
  Shape shape(a.shape().begin(), a.shape().end() - 1);
  shape.push_back(n);
  std::vector<double> out(numel(shape), 0.0);
  const double* ad = a.impl()->data.data();
  const double* bd = b.impl()->data.data();
  if (shared_rhs) {
    gemm(ad, bd, out.data(), batch * m, k, n);
  } else {
    for (std::size_t i = 0; i < batch; ++i)
      gemm(ad + i * m * k, bd + i * k * n, out.data() + i * m * n, m, k, n);
  }
  Tensor result = Tensor::constant(std::move(shape), std::move(out));
  if (wants_grad({&a, &b})) {
    auto ai = a.impl(), bi = b.impl();
    auto* oi = result.impl().get();
    record("matmul", result, {ai, bi}, [ai, bi, oi, shared_rhs, batch, m, k, n]() {
      double* da = ai->requires_grad ? ai->ensure_grad().data() : nullptr;
      double* db = bi->requires_grad ? bi->ensure_grad().data() : nullptr;
      const double* g = oi->grad.data();
      if (shared_rhs) {
        gemm_backward(ai->data.data(), bi->data.data(), g, da, db, batch * m, k, n);
      } else {
        for (std::size_t i = 0; i < batch; ++i) {
          gemm_backward(ai->data.data() + i * m * k, bi->data.data() + i * k * n, g + i * m * n,
                        da ? da + i * m * k : nullptr, db ? db + i * k * n : nullptr, m, k, n);
        }
      }
    });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  const auto& xs = x.impl()->data;
  Tensor result = Tensor::scalar(std::accumulate(xs.begin(), xs.end(), 0.0));
  if (wants_grad({&x})) {
    auto xi = x.impl();
    auto* oi = result.impl().get();
    record("sum", result, {xi}, [xi, oi]() {
      auto& gx = xi->ensure_grad();
      for (auto& v : gx) v += oi->grad[0];
    });
  }
  return result;
}

Tensor sum(const Tensor& x, std::size_t axis, bool keepdim) {
  const auto l = layout("sum", x.shape(), axis);
  const auto& xs = x.impl()->data;
  std::vector<double> out(l.outer * l.inner, 0.0);
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t j = 0; j < l.n; ++j)
      for (std::size_t i = 0; i < l.inner; ++i)
        out[o * l.inner + i] += xs[(o * l.n + j) * l.inner + i];
  Tensor result = Tensor::constant(reduced_shape(x.shape(), axis, keepdim), std::move(out));
  if (wants_grad({&x})) {
    auto xi = x.impl();
    auto* oi = result.impl().get();
    record("sum_axis", result, {xi}, [xi, oi, l]() {
      auto& gx = xi->ensure_grad();
      for (std::size_t o = 0; o < l.outer; ++o)
        for (std::size_t j = 0; j < l.n; ++j)
          for (std::size_t i = 0; i < l.inner; ++i)
            gx[(o * l.n + j) * l.inner + i] += oi->grad[o * l.inner + i];
    });
  }
  return result;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean", {x.shape()}, "empty tensor");
  return mul(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mean(const Tensor& x, std::size_t axis, bool keepdim) {
  const auto l = layout("mean", x.shape(), axis);
  if (l.n == 0) throw ShapeError("mean", {x.shape()}, "empty axis");
  return mul(sum(x, axis, keepdim), 1.0 / static_cast<double>(l.n));
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto l = layout("softmax", x.shape(), axis);
  const auto& xs = x.impl()->data;
  std::vector<double> out(xs.size());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      const std::size_t base = o * l.n * l.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < l.n; ++j) mx = std::max(mx, xs[base + j * l.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < l.n; ++j) {
        const double e = std::exp(xs[base + j * l.inner] - mx);
        out[base + j * l.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < l.n; ++j) out[base + j * l.inner] /= total;
    }
  }
  Tensor result = Tensor::constant(x.shape(), std::move(out));
  if (wants_grad({&x})) {
    auto xi = x.impl();
    auto* oi = result.impl().get();
    record("softmax", result, {xi}, [xi, oi, l]() {
      auto& gx = xi->ensure_grad();
      const auto& y = oi->data;
      const auto& g = oi->grad;
      for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t i = 0; i < l.inner; ++i) {
          const std::size_t base = o * l.n * l.inner + i;
          double dot = 0.0;
          for (std::size_t j = 0; j < l.n; ++j) dot += g[base + j * l.inner] * y[base + j * l.inner];
          for (std::size_t j = 0; j < l.n; ++j) {
            const std::size_t idx = base + j * l.inner;
            gx[idx] += y[idx] * (g[idx] - dot);
          }
        }
      }
    });
  }
  return result;
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  const auto l = layout("log_softmax", x.shape(), axis);
  const auto& xs = x.impl()->data;
  std::vector<double> out(xs.size());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      const std::size_t base = o * l.n * l.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < l.n; ++j) mx = std::max(mx, xs[base + j * l.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < l.n; ++j) total += std::exp(xs[base + j * l.inner] - mx);
      const double lse = mx + std::log(total);
      for (std::size_t j = 0; j < l.n; ++j) out[base + j * l.inner] = xs[base + j * l.inner] - lse;
    }
  }
  Tensor result = Tensor::constant(x.shape(), std::move(out));
  if (wants_grad({&x})) {
    auto xi = x.impl();
    auto* oi = result.impl().get();
    record("log_softmax", result, {xi}, [xi, oi, l]() {
      auto& gx = xi->ensure_grad();
      const auto& y = oi->data;
      const auto& g = oi->grad;
      for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t i = 0; i < l.inner; ++i) {
          const std::size_t base = o * l.n * l.inner + i;
          double gsum = 0.0;
          for (std::size_t j = 0; j < l.n; ++j) gsum += g[base + j * l.inner];
          for (std::size_t j = 0; j < l.n; ++j) {
            const std::size_t idx = base + j * l.inner;
            gx[idx] += g[idx] - std::exp(y[idx]) * gsum;
          }
        }
      }
    });
  }
  return result;
}

Tensor logsumexp(const Tensor& x, std::size_t axis, bool keepdim) {
  const auto l = layout("logsumexp", x.shape(), axis);
  const auto& xs = x.impl()->data;
  std::vector<double> out(l.outer * l.inner);
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      const std::size_t base = o * l.n * l.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < l.n; ++j) mx = std::max(mx, xs[base + j * l.inner]);
      if (!std::isfinite(mx)) {
        out[o * l.inner + i] = mx;
        continue;
      }
      double total = 0.0;
      for (std::size_t j = 0; j < l.n; ++j) total += std::exp(xs[base + j * l.inner] - mx);
      out[o * l.inner + i] = mx + std::log(total);
    }
  }
  Tensor result = Tensor::constant(reduced_shape(x.shape(), axis, keepdim), std::move(out));
  if (wants_grad({&x})) {
    auto xi = x.impl();
    auto* oi = result.impl().get();
    record("logsumexp", result, {xi}, [xi, oi, l]() {
      auto& gx = xi->ensure_grad();
      for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t i = 0; i < l.inner; ++i) {
          const std::size_t base = o * l.n * l.inner + i;
          const double lse = oi->data[o * l.inner + i];
          const double g = oi->grad[o * l.inner + i];
          if (!std::isfinite(lse)) continue;
          for (std::size_t j = 0; j < l.n; ++j) {
            const std::size_t idx = base + j * l.inner;
            gx[idx] += g * std::exp(xi->data[idx] - lse);
          }
        }
      }
    });
  }
  return result;
}

Tensor layer_norm(const Tensor& x) {
  if (x.dim() == 0) throw ShapeError("layer_norm", {x.shape()}, "rank 0");
  const std::size_t n = x.shape().back();
  const std::size_t rows = n == 0 ? 0 : x.numel() / n;
  const auto& xs = x.impl()->data;
  std::vector<double> out(xs.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xs.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = (row[j] - mu) * inv_std[r];
  }
  Tensor result = Tensor::constant(x.shape(), std::move(out));
  if (wants_grad({&x})) {
    auto xi = x.impl();
    auto* oi = result.impl().get();
    record("layer_norm", result, {xi}, [xi, oi, n, rows, inv_std = std::move(inv_std)]() {
      auto& gx = xi->ensure_grad();
      const auto& y = oi->data;
      const auto& g = oi->grad;
      for (std::size_t r = 0; r < rows; ++r) {
        double gm = 0.0, gy = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          gm += g[r * n + j];
          gy += g[r * n + j] * y[r * n + j];
        }
        gm /= static_cast<double>(n);
        gy /= static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t idx = r * n + j;
          gx[idx] += inv_std[r] * (g[idx] - gm - y[idx] * gy);
        }
      }
    });
  }
  return result;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat", {}, "no inputs");
  Shape shape = parts.front().shape();
  if (axis >= shape.size()) throw ShapeError("concat", {shape}, "axis " + std::to_string(axis));
  std::size_t total = 0;
  std::vector<Shape> shapes;
  for (const auto& p : parts) shapes.push_back(p.shape());
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != shape.size()) throw ShapeError("concat", shapes, "rank differs");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != shape[i]) throw ShapeError("concat", shapes);
    total += s[axis];
  }
  shape[axis] = total;
  const auto l = layout("concat", shape, axis);
  std::vector<double> out(numel(shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t w = p.shape()[axis] * l.inner;
    const auto& src = p.impl()->data;
    for (std::size_t o = 0; o < l.outer; ++o)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(o * w), w,
                  out.begin() + static_cast<std::ptrdiff_t>(o * total * l.inner + off * l.inner));
    off += p.shape()[axis];
  }
  Tensor result = Tensor::constant(std::move(shape), std::move(out));
  if (wants_grad(parts)) {
    std::vector<ImplPtr> inputs;
    for (const auto& p : parts) inputs.push_back(p.impl());
    auto* oi = result.impl().get();
    record("concat", result, inputs, [inputs, oi, offsets, l, total, axis]() {
      for (std::size_t pi = 0; pi < inputs.size(); ++pi) {
        auto& in = *inputs[pi];
        if (!in.requires_grad) continue;
        auto& gx = in.ensure_grad();
        const std::size_t w = in.shape[axis] * l.inner;
        for (std::size_t o = 0; o < l.outer; ++o) {
          const double* src = oi->grad.data() + o * total * l.inner + offsets[pi] * l.inner;
          for (std::size_t i = 0; i < w; ++i) gx[o * w + i] += src[i];
        }
      }
    });
  }
  return result;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto l = layout("slice", x.shape(), axis);
  if (begin > end || end > l.n) {
    throw ShapeError("slice", {x.shape()},
                     "range [" + std::to_string(begin) + "," + std::to_string(end) + ")");
  }
  Shape shape = x.shape();
  shape[axis] = end - begin;
  const std::size_t w = (end - begin) * l.inner;
  std::vector<double> out(l.outer * w);
  const auto& xs = x.impl()->data;
  for (std::size_t o = 0; o < l.outer; ++o)
    std::copy_n(xs.begin() + static_cast<std::ptrdiff_t>((o * l.n + begin) * l.inner), w,
                out.begin() + static_cast<std::ptrdiff_t>(o * w));
  Tensor result = Tensor::constant(std::move(shape), std::move(out));
  if (wants_grad({&x})) {
    auto xi = x.impl();
    auto* oi = result.impl().get();
    record("slice", result, {xi}, [xi, oi, l, begin, w]() {
      auto& gx = xi->ensure_grad();
      for (std::size_t o = 0; o < l.outer; ++o)
        for (std::size_t i = 0; i < w; ++i) gx[(o * l.n + begin) * l.inner + i] += oi->grad[o * w + i];
    });
  }
  return result;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) throw ShapeError("reshape", {x.shape(), shape});
  Tensor result = Tensor::constant(std::move(shape), x.impl()->data);
  if (wants_grad({&x})) {
    auto xi = x.impl();
    auto* oi = result.impl().get();
    record("reshape", result, {xi}, [xi, oi]() {
      auto& gx = xi->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += oi->grad[i];
    });
  }
  return result;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const std::size_t r = x.dim();
  if (axes.size() != r) throw ShapeError("permute", {x.shape()}, "axes count");
  std::vector<bool> seen(r, false);
  for (auto a : axes) {
    if (a >= r || seen[a]) throw ShapeError("permute", {x.shape()}, "invalid axes");
    seen[a] = true;
  }
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * x.shape()[i];
  Shape shape(r);
  std::vector<std::size_t> strides(r);
  for (std::size_t i = 0; i < r; ++i) {
    shape[i] = x.shape()[axes[i]];
    strides[i] = in_strides[axes[i]];
  }
  std::vector<double> out(x.numel());
  const auto& xs = x.impl()->data;
  const std::vector<std::size_t> unused(r, 0);
  for_each_index(shape, strides, unused,
                 [&](std::size_t i, std::size_t src, std::size_t) { out[i] = xs[src]; });
  Tensor result = Tensor::constant(shape, std::move(out));
  if (wants_grad({&x})) {
    auto xi = x.impl();
    auto* oi = result.impl().get();
    record("permute", result, {xi}, [xi, oi, shape, strides, unused]() {
      auto& gx = xi->ensure_grad();
      for_each_index(shape, strides, unused,
                     [&](std::size_t i, std::size_t src, std::size_t) { gx[src] += oi->grad[i]; });
    });
  }
  return result;
}

Tensor transpose(const Tensor& x, std::size_t axis_a, std::size_t axis_b) {
  std::vector<std::size_t> axes(x.dim());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  if (axis_a >= axes.size() || axis_b >= axes.size()) throw ShapeError("transpose", {x.shape()});
  std::swap(axes[axis_a], axes[axis_b]);
  return permute(x, axes);
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  if (broadcast_shape("broadcast_to", x.shape(), shape) != shape)
    throw ShapeError("broadcast_to", {x.shape(), shape});
  const auto strides = broadcast_strides(x.shape(), shape);
  const std::vector<std::size_t> unused(shape.size(), 0);
  std::vector<double> out(numel(shape));
  const auto& xs = x.impl()->data;
  for_each_index(shape, strides, unused,
                 [&](std::size_t i, std::size_t src, std::size_t) { out[i] = xs[src]; });
  Tensor result = Tensor::constant(shape, std::move(out));
  if (wants_grad({&x})) {
    auto xi = x.impl();
    auto* oi = result.impl().get();
    record("broadcast_to", result, {xi}, [xi, oi, shape, strides, unused]() {
      auto& gx = xi->ensure_grad();
      for_each_index(shape, strides, unused,
                     [&](std::size_t i, std::size_t src, std::size_t) { gx[src] += oi->grad[i]; });
    });
  }
  return result;
}

Tensor masked_fill(const Tensor& x, std::span<const std::uint8_t> mask, double value) {
  if (mask.size() != x.numel())
    throw ShapeError("masked_fill", {x.shape(), Shape{mask.size()}}, "mask size");
  std::vector<double> out = x.impl()->data;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask[i]) out[i] = value;
  Tensor result = Tensor::constant(x.shape(), std::move(out));
  if (wants_grad({&x})) {
    auto xi = x.impl();
    auto* oi = result.impl().get();
    std::vector<std::uint8_t> m(mask.begin(), mask.end());
    record("masked_fill", result, {xi}, [xi, oi, m = std::move(m)]() {
      auto& gx = xi->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i)
        if (!m[i]) gx[i] += oi->grad[i];
    });
  }
  return result;
}

Tensor index_select(const Tensor& x, std::span<const std::size_t> indices) {
  if (x.dim() == 0) throw ShapeError("index_select", {x.shape()}, "rank 0");
  const std::size_t rows = x.shape()[0];
  const std::size_t w = rows == 0 ? 0 : x.numel() / rows;
  Shape shape = x.shape();
  shape[0] = indices.size();
  std::vector<double> out(indices.size() * w);
  const auto& xs = x.impl()->data;
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= rows)
      throw ShapeError("index_select", {x.shape()}, "index " + std::to_string(indices[r]));
    std::copy_n(xs.begin() + static_cast<std::ptrdiff_t>(indices[r] * w), w,
                out.begin() + static_cast<std::ptrdiff_t>(r * w));
  }
  Tensor result = Tensor::constant(std::move(shape), std::move(out));
  if (wants_grad({&x})) {
    auto xi = x.impl();
    auto* oi = result.impl().get();
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    record("index_select", result, {xi}, [xi, oi, w, idx = std::move(idx)]() {
      auto& gx = xi->ensure_grad();
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t i = 0; i < w; ++i) gx[idx[r] * w + i] += oi->grad[r * w + i];
    });
  }
  return result;
}

Tensor take_along_last(const Tensor& x, std::span<const std::size_t> indices) {
  if (x.dim() == 0) throw ShapeError("take_along_last", {x.shape()}, "rank 0");
  const std::size_t b = x.shape().back();
  const std::size_t rows = b == 0 ? 0 : x.numel() / b;
  if (indices.size() != rows)
    throw ShapeError("take_along_last", {x.shape(), Shape{indices.size()}}, "index count");
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  std::vector<double> out(rows);
  const auto& xs = x.impl()->data;
  for (std::size_t r = 0; r < rows; ++r) {
    if (indices[r] >= b)
      throw ShapeError("take_along_last", {x.shape()}, "index " + std::to_string(indices[r]));
    out[r] = xs[r * b + indices[r]];
  }
  Tensor result = Tensor::constant(std::move(shape), std::move(out));
  if (wants_grad({&x})) {
    auto xi = x.impl();
    auto* oi = result.impl().get();
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    record("take_along_last", result, {xi}, [xi, oi, b, idx = std::move(idx)]() {
      auto& gx = xi->ensure_grad();
      for (std::size_t r = 0; r < idx.size(); ++r) gx[r * b + idx[r]] += oi->grad[r];
    });
  }
  return result;
}

}  // namespace tactis::ad
