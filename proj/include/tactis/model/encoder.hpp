#pragma once

#include <span>
#include <vector>

#include "tactis/config.hpp"
#include "tactis/data/timeseries.hpp"
#include "tactis/model/nn.hpp"

namespace tactis::model {

/// Sinusoidal encoding of real-valued positions: row p has
/// sin(p * f_i) at column 2i and cos(p * f_i) at column 2i+1, f_i = 10000^(-2i/d).
Tensor sinusoidal_encoding(std::span<const double> positions, std::size_t dim);
/// Encoding of the integer positions 0..length-1, shape (length, dim).
Tensor positional_encoding(std::size_t length, std::size_t dim);

struct EncoderLayer {
  LayerNorm attention_norm;
  MultiHeadAttention attention;
  LayerNorm feedforward_norm;
  Mlp feedforward;
};

/// Token embedding followed by a stack of pre-norm self-attention layers.
///
/// Input features per token: value (zeroed when missing), mask bit,
/// covariates and a learned embedding of the token's series.
class Encoder {
 public:
  static Encoder create(ParameterSet& ps, const EncoderConfig& config, std::size_t num_covariates,
                        std::size_t num_series_embeddings, Rng& rng);

  /// Embeddings e' = e * sqrt(d) + p for a batch of same-shaped windows: (B, n, l, d).
  /// embedding_ids[b][i] selects the series-embedding row of series i in window b.
  Tensor embed(const std::vector<const data::TimeSeriesBatch*>& windows,
               const std::vector<std::vector<std::size_t>>& embedding_ids) const;
  /// Full encoding, (B, n, l, d). `dropout_rng` enables dropout when non-null.
  Tensor encode(const std::vector<const data::TimeSeriesBatch*>& windows,
                const std::vector<std::vector<std::size_t>>& embedding_ids, Rng* dropout_rng = nullptr) const;

  const EncoderConfig& config() const { return config_; }
  std::size_t input_features() const;

 private:
  Tensor run_layer(const EncoderLayer& layer, const Tensor& h, bool across_series, Rng* dropout_rng) const;

  EncoderConfig config_;
  std::size_t num_covariates_ = 0;
  std::size_t num_series_embeddings_ = 0;
  Tensor series_table_;  // (num_series_embeddings, series_embed_dim)
  Mlp token_embedding_;
  std::vector<EncoderLayer> layers_;
  LayerNorm final_norm_;
};

}  // namespace tactis::model
