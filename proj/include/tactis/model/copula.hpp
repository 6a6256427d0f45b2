#pragma once

#include <vector>

#include "tactis/config.hpp"
#include "tactis/model/nn.hpp"

namespace tactis::model {

struct CopulaLayer {
  Mlp key;
  Mlp value;
  Mlp query;
  Linear reshape;
  LayerNorm norm;
};

/// Index of the bin holding u; u = 1 belongs to the last bin.
std::size_t bin_index(double u, std::size_t bins);

/// Autoregressive copula over the missing tokens of a window.
///
/// The memory holds (z, u) rows of all observed tokens followed by the
/// missing tokens in permutation order. The k-th missing token attends to
/// the observed rows and to the missing rows before it; the first missing
/// token is uniform on [0, 1].
class AttentionalCopula {
 public:
  static AttentionalCopula create(ParameterSet& ps, const CopulaConfig& config, std::size_t input_dim, Rng& rng);

  /// Bin log-weights of missing tokens 1..Nm-1 (permutation order), shape (B, Nm-1, bins).
  /// z_obs (B, No, d), u_obs (B, No), z_mis (B, Nm, d), u_mis (B, Nm); Nm >= 2.
  Tensor conditional_log_weights(const Tensor& z_obs, const Tensor& u_obs, const Tensor& z_mis,
                                 const Tensor& u_mis) const;
  /// log c for each batch element, shape (B). Missing tensors are in permutation order.
  Tensor log_density(const Tensor& z_obs, const Tensor& u_obs, const Tensor& z_mis, const Tensor& u_mis) const;

  /// Draws num_samples joint u vectors; result is (num_samples x Nm) in permutation
  /// order. z_obs (No, d), u_obs (No), z_mis (Nm, d). When log_density is non-null it
  /// receives the log copula density of each draw.
  std::vector<double> sample(const Tensor& z_obs, const Tensor& u_obs, const Tensor& z_mis, std::size_t num_samples,
                             Rng& rng, std::vector<double>* log_density = nullptr) const;

  const CopulaConfig& config() const { return config_; }
  const std::vector<CopulaLayer>& layers() const { return layers_; }
  const Mlp& dist_params() const { return dist_params_; }

 private:
  CopulaConfig config_;
  std::size_t input_dim_ = 0;
  std::vector<CopulaLayer> layers_;
  Mlp dist_params_;
};

}  // namespace tactis::model
