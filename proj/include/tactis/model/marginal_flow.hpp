#pragma once

#include <vector>

#include "tactis/config.hpp"
#include "tactis/model/nn.hpp"

namespace tactis::model {

/// Constrained parameters of one token's sigmoidal flow. For layer k and
/// unit j the flat index is k * hidden + j.
struct FlowParams {
  std::size_t layers = 0;
  std::size_t hidden = 0;
  std::vector<double> a;      // > 0
  std::vector<double> b;
  std::vector<double> log_w;  // each layer's exp(log_w) sums to 1

  /// Builds from unconstrained values laid out per layer as [a_raw, b, w_raw].
  static FlowParams from_raw(std::span<const double> raw, std::size_t layers, std::size_t hidden);
};

// Each layer maps y to S(y) = sum_j w_j sigmoid(a_j y + b_j). Inner layers
// pass logit(S) to the next layer, the last one returns S itself, so the
// composition is a CDF on the real line.
double flow_cdf(double x, const FlowParams& p);
double flow_log_pdf(double x, const FlowParams& p);
double flow_pdf(double x, const FlowParams& p);
/// Bisection inverse: doubles [-1, 1] outward until it straddles u, then 80 halvings.
double flow_inverse_cdf(double u, const FlowParams& p);

struct FlowOutput {
  Tensor u;        // (N) cdf values
  Tensor log_pdf;  // (N)
};

/// Differentiable flow evaluated per row: raw (N, layers * 3 * hidden), x (N).
FlowOutput flow_forward(const Tensor& raw, const Tensor& x, std::size_t layers, std::size_t hidden);

/// Shared network mapping token encodings to flow parameters.
class MarginalFlow {
 public:
  static MarginalFlow create(ParameterSet& ps, const FlowConfig& config, std::size_t input_dim,
                             std::size_t mlp_dim, std::size_t mlp_layers, Rng& rng);

  /// Unconstrained parameters, (N, layers * 3 * hidden), for encodings z (N, input_dim).
  Tensor raw_params(const Tensor& z) const;
  FlowOutput forward(const Tensor& z, const Tensor& x) const;
  std::size_t raw_size() const { return 3 * config_.layers * config_.hidden_dim; }
  const FlowConfig& config() const { return config_; }

 private:
  FlowConfig config_;
  Mlp network_;
};

}  // namespace tactis::model
