#include "tactis/model/encoder.hpp"

#include <cmath>

#include "tactis/error.hpp"

namespace tactis::model {

Tensor sinusoidal_encoding(std::span<const double> positions, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw ConfigError("positional encoding needs an even, positive width");
  std::vector<double> out(positions.size() * dim);
  for (std::size_t p = 0; p < positions.size(); ++p) {
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
      out[p * dim + 2 * i] = std::sin(positions[p] * freq);
      out[p * dim + 2 * i + 1] = std::cos(positions[p] * freq);
    }
  }
  return Tensor::constant({positions.size(), dim}, std::move(out));
}

Tensor positional_encoding(std::size_t length, std::size_t dim) {
  std::vector<double> pos(length);
  for (std::size_t j = 0; j < length; ++j) pos[j] = static_cast<double>(j);
  return sinusoidal_encoding(pos, dim);
}

Encoder Encoder::create(ParameterSet& ps, const EncoderConfig& config, std::size_t num_covariates,
                        std::size_t num_series_embeddings, Rng& rng) {
  if (config.embed_dim == 0 || config.embed_dim % 2 != 0) throw ConfigError("encoder.embed_dim must be positive and even");
  if (config.heads == 0 || config.embed_dim % config.heads != 0)
    throw ConfigError("encoder.embed_dim must be divisible by encoder.heads");
  Encoder e;
  e.config_ = config;
  e.num_covariates_ = num_covariates;
  e.num_series_embeddings_ = num_series_embeddings;
  const std::size_t d = config.embed_dim;
  if (config.series_embed_dim > 0) {
    std::vector<double> table(num_series_embeddings * config.series_embed_dim);
    for (auto& v : table) v = rng.normal(0.0, 1.0);
    e.series_table_ = ps.add("encoder.series_embedding", {num_series_embeddings, config.series_embed_dim}, std::move(table));
  }
  e.token_embedding_ = Mlp::create(ps, "encoder.embedding", e.input_features(), d, 1, d, rng);
  for (std::size_t k = 0; k < 2 * config.layer_pairs; ++k) {
    const std::string name = "encoder.layer" + std::to_string(k);
    e.layers_.push_back(EncoderLayer{LayerNorm::create(ps, name + ".attention_norm", d),
                                     MultiHeadAttention::create(ps, name + ".attention", d, config.heads, rng),
                                     LayerNorm::create(ps, name + ".feedforward_norm", d),
                                     Mlp::create(ps, name + ".feedforward", d, config.ff_dim, 1, d, rng)});
  }
  e.final_norm_ = LayerNorm::create(ps, "encoder.final_norm", d);
  return e;
}

std::size_t Encoder::input_features() const { return 2 + num_covariates_ + config_.series_embed_dim; }

Tensor Encoder::embed(const std::vector<const data::TimeSeriesBatch*>& windows,
                      const std::vector<std::vector<std::size_t>>& embedding_ids) const {
  if (windows.empty()) throw DataError("encoder: empty batch");
  const std::size_t bsz = windows.size();
  const std::size_t n = windows[0]->num_series, l = windows[0]->length;
  const std::size_t c = num_covariates_;
  const std::size_t d = config_.embed_dim;
  if (embedding_ids.size() != bsz) throw DataError("encoder: one id list per window expected");

  std::vector<double> feats(bsz * n * l * (2 + c));
  std::vector<std::size_t> rows;
  rows.reserve(bsz * n);
  for (std::size_t b = 0; b < bsz; ++b) {
    const auto& w = *windows[b];
    if (w.num_series != n || w.length != l)
      throw ad::ShapeError("encoder", {{w.num_series, w.length}, {n, l}}, "windows in a batch must share their shape");
    if (w.num_covariates != c)
      throw DataError("encoder: expected " + std::to_string(c) + " covariates, window has " +
                      std::to_string(w.num_covariates));
    if (embedding_ids[b].size() != n) throw DataError("encoder: one embedding id per series expected");
    for (std::size_t i = 0; i < n; ++i) {
      if (embedding_ids[b][i] >= num_series_embeddings_)
        throw DataError("encoder: series embedding id " + std::to_string(embedding_ids[b][i]) + " out of range");
      rows.push_back(embedding_ids[b][i]);
      for (std::size_t j = 0; j < l; ++j) {
        double* f = &feats[((b * n + i) * l + j) * (2 + c)];
        const bool obs = w.observed(i, j);
        f[0] = obs ? w.value(i, j) : 0.0;
        f[1] = obs ? 1.0 : 0.0;
        for (std::size_t k = 0; k < c; ++k) f[2 + k] = w.covariate(i, j, k);
      }
    }
  }
  Tensor x = Tensor::constant({bsz, n, l, 2 + c}, std::move(feats));
  if (config_.series_embed_dim > 0) {
    const std::size_t s = config_.series_embed_dim;
    Tensor emb = ad::reshape(ad::index_select(series_table_, rows), {bsz, n, 1, s});
    x = ad::concat({x, ad::broadcast_to(emb, {bsz, n, l, s})}, 3);
  }
  Tensor e = token_embedding_(x) * std::sqrt(static_cast<double>(d));
  return e + positional_encoding(l, d);
}

Tensor Encoder::run_layer(const EncoderLayer& layer, const Tensor& h, bool across_series, Rng* dropout_rng) const {
  const std::size_t bsz = h.size(0), n = h.size(1), l = h.size(2), d = h.size(3);
  Tensor grouped;
  if (config_.variant == EncoderVariant::standard) {
    grouped = ad::reshape(layer.attention_norm(h), {bsz, n * l, d});
  } else if (!across_series) {
    grouped = ad::reshape(layer.attention_norm(h), {bsz * n, l, d});
  } else {
    grouped = ad::reshape(ad::permute(layer.attention_norm(h), {0, 2, 1, 3}), {bsz * l, n, d});
  }
  Tensor att = layer.attention(grouped);
  if (config_.variant == EncoderVariant::temporal && across_series)
    att = ad::permute(ad::reshape(att, {bsz, l, n, d}), {0, 2, 1, 3});
  else
    att = ad::reshape(att, {bsz, n, l, d});
  Tensor out = h + dropout(att, config_.dropout, dropout_rng);
  return out + dropout(layer.feedforward(layer.feedforward_norm(out)), config_.dropout, dropout_rng);
}

Tensor Encoder::encode(const std::vector<const data::TimeSeriesBatch*>& windows,
                       const std::vector<std::vector<std::size_t>>& embedding_ids, Rng* dropout_rng) const {
  if (config_.variant == EncoderVariant::temporal)
    for (const auto* w : windows)
      if (!w->aligned)
        throw DataError("temporal encoder requires series with aligned timestamps; use encoder.variant = standard");
  Tensor h = embed(windows, embedding_ids);
  for (std::size_t k = 0; k < layers_.size(); ++k) h = run_layer(layers_[k], h, k % 2 == 1, dropout_rng);
  return final_norm_(h);
}

}  // namespace tactis::model
