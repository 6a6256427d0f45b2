#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tactis/autodiff/ops.hpp"
#include "tactis/data/rng.hpp"

namespace tactis::model {

using ad::Shape;
using ad::Tensor;

/// Named trainable tensors in creation order.
class ParameterSet {
 public:
  Tensor add(const std::string& name, Shape shape, std::vector<double> values);
  Tensor zeros(const std::string& name, Shape shape);
  Tensor ones(const std::string& name, Shape shape);
  /// (fan_in, fan_out) matrix, uniform in +-sqrt(6 / (fan_in + fan_out)).
  Tensor glorot(const std::string& name, std::size_t fan_in, std::size_t fan_out, Rng& rng);

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  const Tensor& get(const std::string& name) const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

struct Linear {
  Tensor weight;  // (in, out)
  Tensor bias;    // (out); undefined for bias-free maps

  static Linear create(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                       bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
};

/// Linear layers with tanh between them; no activation on the output.
struct Mlp {
  std::vector<Linear> layers;

  static Mlp create(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t hidden,
                    std::size_t num_hidden, std::size_t out, Rng& rng, bool output_bias = true);
  Tensor operator()(const Tensor& x) const;
};

/// layer_norm over the last axis followed by a learned gain and bias.
struct LayerNorm {
  Tensor gain;
  Tensor bias;

  static LayerNorm create(ParameterSet& ps, const std::string& name, std::size_t dim);
  Tensor operator()(const Tensor& x) const;
};

/// (G, S, H*dh) -> (G*H, S, dh)
Tensor split_heads(const Tensor& x, std::size_t heads);
/// (G*H, S, dh) -> (G, S, H*dh)
Tensor merge_heads(const Tensor& x, std::size_t heads);

/// Scaled dot-product attention on head-split tensors q (G,T,dh), k and v (G,M,dh).
/// `blocked`, when non-empty, has G*T*M entries; nonzero entries are excluded.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::span<const std::uint8_t> blocked = {});

struct MultiHeadAttention {
  Linear query, key, value, output;
  std::size_t heads = 1;

  static MultiHeadAttention create(ParameterSet& ps, const std::string& name, std::size_t dim,
                                   std::size_t heads, Rng& rng);
  /// Self-attention within each group: x is (G, S, dim).
  Tensor operator()(const Tensor& x) const;
};

/// Inverted dropout; identity when rate is 0 or rng is null.
Tensor dropout(const Tensor& x, double rate, Rng* rng);

/// Counts multiply-adds performed by attention score and mixing products.
std::size_t attention_flops();
void reset_attention_flops();

}  // namespace tactis::model
