#include "tactis/model/copula.hpp"

#include <cmath>

#include "tactis/error.hpp"

namespace tactis::model {

std::size_t bin_index(double u, std::size_t bins) {
  if (!(u >= 0.0 && u <= 1.0)) throw NumericalError("copula: u = " + std::to_string(u) + " lies outside [0, 1]");
  return std::min(static_cast<std::size_t>(std::floor(u * static_cast<double>(bins))), bins - 1);
}

AttentionalCopula AttentionalCopula::create(ParameterSet& ps, const CopulaConfig& config, std::size_t input_dim,
                                            Rng& rng) {
  if (config.heads == 0 || config.attention_dim % config.heads != 0)
    throw ConfigError("copula.attention_dim must be divisible by copula.heads");
  AttentionalCopula c;
  c.config_ = config;
  c.input_dim_ = input_dim;
  const std::size_t da = config.attention_dim, h = config.mlp_dim, nh = config.mlp_layers;
  std::size_t cur = input_dim;
  for (std::size_t k = 0; k < config.layers; ++k) {
    const std::string name = "copula.layer" + std::to_string(k);
    c.layers_.push_back(CopulaLayer{Mlp::create(ps, name + ".key", input_dim + 1, h, nh, da, rng, false),
                                    Mlp::create(ps, name + ".value", input_dim + 1, h, nh, da, rng),
                                    Mlp::create(ps, name + ".query", cur, h, nh, da, rng),
                                    Linear::create(ps, name + ".reshape", cur, da, rng),
                                    LayerNorm::create(ps, name + ".norm", da)});
    cur = da;
  }
  c.dist_params_ = Mlp::create(ps, "copula.dist_params", cur, h, nh, config.bins, rng);
  return c;
}

Tensor AttentionalCopula::conditional_log_weights(const Tensor& z_obs, const Tensor& u_obs, const Tensor& z_mis,
                                                  const Tensor& u_mis) const {
  const std::size_t bsz = z_mis.size(0), nm = z_mis.size(1), d = z_mis.size(2);
  const std::size_t no = z_obs.defined() ? z_obs.size(1) : 0;
  if (nm < 2) throw DataError("copula conditioner needs at least two missing tokens");
  if (d != input_dim_) throw ad::ShapeError("copula", {z_mis.shape()}, "encoding width mismatch");

  Tensor mis_mem = ad::concat({z_mis, ad::reshape(u_mis, {bsz, nm, 1})}, 2);
  Tensor mem = no == 0 ? mis_mem : ad::concat({ad::concat({z_obs, ad::reshape(u_obs, {bsz, no, 1})}, 2), mis_mem}, 1);
  const std::size_t m = no + nm, t = nm - 1, heads = config_.heads;

  // Target t (permutation position t + 1) sees observed rows and missing rows before it.
  std::vector<std::uint8_t> blocked(bsz * heads * t * m, 0);
  for (std::size_t g = 0; g < bsz * heads; ++g)
    for (std::size_t r = 0; r < t; ++r)
      for (std::size_t c = no + r + 1; c < m; ++c) blocked[(g * t + r) * m + c] = 1;

  Tensor cur = ad::slice(z_mis, 1, 1, nm);
  for (const auto& layer : layers_) {
    Tensor k = split_heads(layer.key(mem), heads);
    Tensor v = split_heads(layer.value(mem), heads);
    Tensor q = split_heads(layer.query(cur), heads);
    Tensor att = merge_heads(attention(q, k, v, blocked), heads);
    cur = layer.norm(att + layer.reshape(cur));
  }
  return ad::log_softmax(dist_params_(cur), 2);
}

Tensor AttentionalCopula::log_density(const Tensor& z_obs, const Tensor& u_obs, const Tensor& z_mis,
                                      const Tensor& u_mis) const {
  const std::size_t bsz = z_mis.size(0), nm = z_mis.size(1), bins = config_.bins;
  for (double u : u_mis.data()) bin_index(u, bins);
  if (nm < 2) return Tensor::zeros({bsz});
  Tensor lw = conditional_log_weights(z_obs, u_obs, z_mis, u_mis);
  std::vector<std::size_t> idx;
  idx.reserve(bsz * (nm - 1));
  for (std::size_t b = 0; b < bsz; ++b)
    for (std::size_t p = 1; p < nm; ++p) idx.push_back(bin_index(u_mis[b * nm + p], bins));
  Tensor picked = ad::take_along_last(lw, idx);
  return ad::sum(picked, 1) + static_cast<double>(nm - 1) * std::log(static_cast<double>(bins));
}

std::vector<double> AttentionalCopula::sample(const Tensor& z_obs, const Tensor& u_obs, const Tensor& z_mis,
                                              std::size_t num_samples, Rng& rng,
                                              std::vector<double>* log_density) const {
  ad::NoGradScope no_grad;
  const std::size_t s = num_samples, nm = z_mis.size(0), d = z_mis.size(1), bins = config_.bins;
  const std::size_t no = z_obs.defined() ? z_obs.size(0) : 0;
  const std::size_t heads = config_.heads, da = config_.attention_dim;
  std::vector<double> out(s * nm, 0.0);
  if (log_density) log_density->assign(s, 0.0);
  if (nm == 0 || s == 0) return out;

  std::vector<Tensor> k_obs(layers_.size()), v_obs(layers_.size());
  if (no > 0) {
    Tensor obs_mem = ad::reshape(ad::concat({z_obs, ad::reshape(u_obs, {no, 1})}, 1), {1, no, d + 1});
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      k_obs[l] = ad::broadcast_to(layers_[l].key(obs_mem), {s, no, da});
      v_obs[l] = ad::broadcast_to(layers_[l].value(obs_mem), {s, no, da});
    }
  }
  std::vector<std::vector<Tensor>> k_mis(layers_.size()), v_mis(layers_.size());

  auto token = [&](std::size_t p) { return ad::broadcast_to(ad::reshape(ad::slice(z_mis, 0, p, p + 1), {1, 1, d}), {s, 1, d}); };
  auto append = [&](std::size_t p) {
    std::vector<double> col(s);
    for (std::size_t i = 0; i < s; ++i) col[i] = out[i * nm + p];
    Tensor row = ad::concat({token(p), Tensor::constant({s, 1, 1}, std::move(col))}, 2);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      k_mis[l].push_back(layers_[l].key(row));
      v_mis[l].push_back(layers_[l].value(row));
    }
  };

  for (std::size_t i = 0; i < s; ++i) out[i * nm] = rng.uniform_open();
  append(0);
  const double log_bins = std::log(static_cast<double>(bins));
  for (std::size_t p = 1; p < nm; ++p) {
    Tensor cur = token(p);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      std::vector<Tensor> ks, vs;
      if (no > 0) {
        ks.push_back(k_obs[l]);
        vs.push_back(v_obs[l]);
      }
      ks.insert(ks.end(), k_mis[l].begin(), k_mis[l].end());
      vs.insert(vs.end(), v_mis[l].begin(), v_mis[l].end());
      Tensor k = split_heads(ad::concat(ks, 1), heads);
      Tensor v = split_heads(ad::concat(vs, 1), heads);
      Tensor q = split_heads(layers_[l].query(cur), heads);
      Tensor att = merge_heads(attention(q, k, v), heads);
      cur = layers_[l].norm(att + layers_[l].reshape(cur));
    }
    const Tensor lw = ad::log_softmax(dist_params_(cur), 2);
    const auto w = lw.data();
    for (std::size_t i = 0; i < s; ++i) {
      const double r = rng.uniform();
      double acc = 0.0;
      std::size_t bin = bins - 1;
      for (std::size_t j = 0; j < bins; ++j) {
        acc += std::exp(w[i * bins + j]);
        if (r < acc) {
          bin = j;
          break;
        }
      }
      double u = (static_cast<double>(bin) + rng.uniform_open()) / static_cast<double>(bins);
      if (u >= 1.0 || bin_index(u, bins) != bin) u = (static_cast<double>(bin) + 0.5) / static_cast<double>(bins);  // rounding at the upper edge
      out[i * nm + p] = u;
      if (log_density) (*log_density)[i] += log_bins + w[i * bins + bin];
    }
    append(p);
  }
  return out;
}

}  // namespace tactis::model
