#include "tactis/model/nn.hpp"

#include <atomic>
#include <cmath>

#include "tactis/error.hpp"

namespace tactis::model {

namespace {
std::atomic<std::size_t> g_attention_flops{0};
}

Tensor ParameterSet::add(const std::string& name, Shape shape, std::vector<double> values) {
  for (const auto& [n, t] : entries_)
    if (n == name) throw Error("duplicate parameter name " + name);
  Tensor t = Tensor::parameter(std::move(shape), std::move(values));
  entries_.emplace_back(name, t);
  return t;
}

Tensor ParameterSet::zeros(const std::string& name, Shape shape) {
  const auto n = ad::numel(shape);
  return add(name, std::move(shape), std::vector<double>(n, 0.0));
}

Tensor ParameterSet::ones(const std::string& name, Shape shape) {
  const auto n = ad::numel(shape);
  return add(name, std::move(shape), std::vector<double>(n, 1.0));
}

Tensor ParameterSet::glorot(const std::string& name, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(fan_in * fan_out);
  for (auto& x : v) x = (2.0 * rng.uniform() - 1.0) * limit;
  return add(name, {fan_in, fan_out}, std::move(v));
}

std::vector<Tensor> ParameterSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.second);
  return out;
}

const Tensor& ParameterSet::get(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  throw Error("no parameter named " + name);
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

Linear Linear::create(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                      bool with_bias) {
  Linear l{ps.glorot(name + ".weight", in, out, rng), Tensor()};
  if (with_bias) l.bias = ps.zeros(name + ".bias", {out});
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = ad::matmul(x, weight);
  return bias.defined() ? y + bias : y;
}

Mlp Mlp::create(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t hidden,
                std::size_t num_hidden, std::size_t out, Rng& rng, bool output_bias) {
  Mlp m;
  std::size_t width = in;
  for (std::size_t i = 0; i < num_hidden; ++i) {
    m.layers.push_back(Linear::create(ps, name + "." + std::to_string(i), width, hidden, rng));
    width = hidden;
  }
  m.layers.push_back(Linear::create(ps, name + "." + std::to_string(num_hidden), width, out, rng, output_bias));
  return m;
}

Tensor Mlp::operator()(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size()) h = ad::tanh(h);
  }
  return h;
}

LayerNorm LayerNorm::create(ParameterSet& ps, const std::string& name, std::size_t dim) {
  return LayerNorm{ps.ones(name + ".gain", {dim}), ps.zeros(name + ".bias", {dim})};
}

Tensor LayerNorm::operator()(const Tensor& x) const { return ad::layer_norm(x) * gain + bias; }

Tensor split_heads(const Tensor& x, std::size_t heads) {
  const std::size_t g = x.size(0), s = x.size(1), d = x.size(2);
  if (d % heads != 0) throw ad::ShapeError("split_heads", {x.shape()}, "width not divisible by heads");
  const std::size_t dh = d / heads;
  Tensor t = ad::reshape(x, {g, s, heads, dh});
  t = ad::permute(t, {0, 2, 1, 3});
  return ad::reshape(t, {g * heads, s, dh});
}

Tensor merge_heads(const Tensor& x, std::size_t heads) {
  const std::size_t gh = x.size(0), s = x.size(1), dh = x.size(2);
  Tensor t = ad::reshape(x, {gh / heads, heads, s, dh});
  t = ad::permute(t, {0, 2, 1, 3});
  return ad::reshape(t, {gh / heads, s, heads * dh});
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::span<const std::uint8_t> blocked) {
  const std::size_t g = q.size(0), t = q.size(1), dh = q.size(2), m = k.size(1);
  g_attention_flops += 2 * g * t * m * dh;
  Tensor scores = ad::matmul(q, ad::transpose(k, 1, 2)) * (1.0 / std::sqrt(static_cast<double>(dh)));
  if (!blocked.empty()) scores = ad::masked_fill(scores, blocked, ad::kMaskFill);
  return ad::matmul(ad::softmax(scores, 2), v);
}

MultiHeadAttention MultiHeadAttention::create(ParameterSet& ps, const std::string& name, std::size_t dim,
                                              std::size_t heads, Rng& rng) {
  MultiHeadAttention a;
  a.query = Linear::create(ps, name + ".query", dim, dim, rng);
  // a key bias shifts every score of a query equally, so softmax ignores it
  a.key = Linear::create(ps, name + ".key", dim, dim, rng, false);
  a.value = Linear::create(ps, name + ".value", dim, dim, rng);
  a.output = Linear::create(ps, name + ".output", dim, dim, rng);
  a.heads = heads;
  return a;
}

Tensor MultiHeadAttention::operator()(const Tensor& x) const {
  Tensor q = split_heads(query(x), heads);
  Tensor k = split_heads(key(x), heads);
  Tensor v = split_heads(value(x), heads);
  return output(merge_heads(attention(q, k, v), heads));
}

Tensor dropout(const Tensor& x, double rate, Rng* rng) {
  if (rate <= 0.0 || rng == nullptr) return x;
  std::vector<double> keep(x.numel());
  const double scale = 1.0 / (1.0 - rate);
  for (auto& k : keep) k = rng->uniform() < rate ? 0.0 : scale;
  return x * Tensor::constant(x.shape(), std::move(keep));
}

std::size_t attention_flops() { return g_attention_flops.load(); }
void reset_attention_flops() { g_attention_flops = 0; }

}  // namespace tactis::model
