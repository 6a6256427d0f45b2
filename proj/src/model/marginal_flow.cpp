#include "tactis/model/marginal_flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tactis/error.hpp"

namespace tactis::model {

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double log_sigmoid(double x) { return -softplus(-x); }

double logsumexp(const double* v, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

// Returns log S and log(1 - S) of the last layer plus the accumulated log-derivative.
struct Pass {
  double log_s;
  double log_1ms;
  double log_deriv;
};

Pass run(double x, const FlowParams& p) {
  const std::size_t h = p.hidden;
  std::vector<double> t1(h), t2(h), t3(h);
  double y = x, log_deriv = 0.0, log_s = 0.0, log_1ms = 0.0;
  for (std::size_t k = 0; k < p.layers; ++k) {
    for (std::size_t j = 0; j < h; ++j) {
      const std::size_t q = k * h + j;
      const double t = p.a[q] * y + p.b[q];
      const double ls = log_sigmoid(t), lms = log_sigmoid(-t);
      t1[j] = p.log_w[q] + ls;
      t2[j] = p.log_w[q] + lms;
      t3[j] = p.log_w[q] + std::log(p.a[q]) + ls + lms;
    }
    log_s = logsumexp(t1.data(), h);
    log_1ms = logsumexp(t2.data(), h);
    log_deriv += logsumexp(t3.data(), h);
    if (k + 1 < p.layers) {
      log_deriv -= log_s + log_1ms;
      y = log_s - log_1ms;
    }
  }
  return {log_s, log_1ms, log_deriv};
}

}  // namespace

FlowParams FlowParams::from_raw(std::span<const double> raw, std::size_t layers, std::size_t hidden) {
  if (raw.size() != 3 * layers * hidden) throw ad::ShapeError("FlowParams::from_raw", {{raw.size()}, {3 * layers * hidden}});
  FlowParams p;
  p.layers = layers;
  p.hidden = hidden;
  p.a.resize(layers * hidden);
  p.b.resize(layers * hidden);
  p.log_w.resize(layers * hidden);
  for (std::size_t k = 0; k < layers; ++k) {
    const double* r = raw.data() + 3 * k * hidden;
    for (std::size_t j = 0; j < hidden; ++j) {
      p.a[k * hidden + j] = softplus(r[j]);
      p.b[k * hidden + j] = r[hidden + j];
    }
    const double lse = logsumexp(r + 2 * hidden, hidden);
    for (std::size_t j = 0; j < hidden; ++j) p.log_w[k * hidden + j] = r[2 * hidden + j] - lse;
  }
  return p;
}

double flow_cdf(double x, const FlowParams& p) { return std::exp(run(x, p).log_s); }

double flow_log_pdf(double x, const FlowParams& p) { return run(x, p).log_deriv; }

double flow_pdf(double x, const FlowParams& p) { return std::exp(flow_log_pdf(x, p)); }

double flow_inverse_cdf(double u, const FlowParams& p) {
  if (!(u > 0.0 && u < 1.0)) throw NumericalError("inverse_cdf: u must lie in (0, 1), got " + std::to_string(u));
  double lo = -1.0, hi = 1.0;
  constexpr int kMaxDoublings = 60;
  for (int i = 0; i < kMaxDoublings && flow_cdf(lo, p) > u; ++i) lo *= 2.0;
  for (int i = 0; i < kMaxDoublings && flow_cdf(hi, p) < u; ++i) hi *= 2.0;
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (flow_cdf(mid, p) < u)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

FlowOutput flow_forward(const Tensor& raw, const Tensor& x, std::size_t layers, std::size_t hidden) {
  const std::size_t n = raw.size(0);
  if (raw.dim() != 2 || raw.size(1) != 3 * layers * hidden || x.numel() != n)
    throw ad::ShapeError("flow_forward", {raw.shape(), x.shape()});
  Tensor y = ad::reshape(x, {n, 1});
  Tensor log_deriv, log_s, log_1ms;
  for (std::size_t k = 0; k < layers; ++k) {
    const std::size_t off = 3 * k * hidden;
    Tensor a = ad::softplus(ad::slice(raw, 1, off, off + hidden));
    Tensor b = ad::slice(raw, 1, off + hidden, off + 2 * hidden);
    Tensor log_w = ad::log_softmax(ad::slice(raw, 1, off + 2 * hidden, off + 3 * hidden), 1);
    Tensor t = a * y + b;
    Tensor ls = -ad::softplus(-t);
    Tensor lms = -ad::softplus(t);
    log_s = ad::logsumexp(log_w + ls, 1, true);
    log_1ms = ad::logsumexp(log_w + lms, 1, true);
    Tensor layer_deriv = ad::logsumexp(log_w + ad::log(a) + ls + lms, 1, true);
    if (k + 1 < layers) {
      layer_deriv = layer_deriv - log_s - log_1ms;
      y = log_s - log_1ms;
    }
    log_deriv = k == 0 ? layer_deriv : log_deriv + layer_deriv;
  }
  return {ad::reshape(ad::exp(log_s), {n}), ad::reshape(log_deriv, {n})};
}

MarginalFlow MarginalFlow::create(ParameterSet& ps, const FlowConfig& config, std::size_t input_dim,
                                  std::size_t mlp_dim, std::size_t mlp_layers, Rng& rng) {
  MarginalFlow f;
  f.config_ = config;
  f.network_ = Mlp::create(ps, "flow.params", input_dim, mlp_dim, mlp_layers, f.raw_size(), rng);
  return f;
}

Tensor MarginalFlow::raw_params(const Tensor& z) const { return network_(z); }

FlowOutput MarginalFlow::forward(const Tensor& z, const Tensor& x) const {
  return flow_forward(raw_params(z), x, config_.layers, config_.hidden_dim);
}

}  // namespace tactis::model
