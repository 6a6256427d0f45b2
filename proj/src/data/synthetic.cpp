#include "tactis/data/synthetic.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "tactis/error.hpp"

namespace tactis::data {

TimeSeriesBatch generate_stochastic_volatility(std::size_t length,
                                               const StochasticVolatilityParams& p, Rng& rng) {
  if (!(std::abs(p.phi) < 1.0)) throw DataError("stochastic volatility: |phi| must be below 1");
  if (!(p.sigma > 0.0)) throw DataError("stochastic volatility: sigma must be positive");
  if (length == 0) throw DataError("stochastic volatility: length must be positive");

  TimeSeriesBatch b = TimeSeriesBatch::create(1, length);
  double h = rng.normal(p.mu, p.sigma / std::sqrt(1.0 - p.phi * p.phi));
  double x = 1.0;
  b.value(0, 0) = x;
  for (std::size_t t = 1; t < length; ++t) {
    h = rng.normal(p.mu + p.phi * (h - p.mu), p.sigma);
    x += rng.normal(0.0, std::exp(0.5 * h));
    b.value(0, t) = x;
  }
  return b;
}

TimeSeriesBatch generate_correlated_gaussian(std::size_t num_series, std::size_t length,
                                             double correlation, Rng& rng) {
  if (!(correlation > -1.0 && correlation < 1.0))
    throw DataError("correlated gaussian: correlation must lie in (-1, 1)");
  if (num_series == 0 || length == 0)
    throw DataError("correlated gaussian: series count and length must be positive");

  // Cholesky factor of the equicorrelation matrix.
  const std::size_t n = num_series;
  std::vector<double> chol(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = (i == j) ? 1.0 : correlation;
      for (std::size_t k = 0; k < j; ++k) s -= chol[i * n + k] * chol[j * n + k];
      if (i == j) {
        if (!(s > 1e-12))
          throw DataError("correlated gaussian: correlation " + std::to_string(correlation) +
                          " gives a degenerate correlation matrix for " + std::to_string(n) +
                          " series");
        chol[i * n + i] = std::sqrt(s);
      } else {
        chol[i * n + j] = s / chol[j * n + j];
      }
    }
  }

  TimeSeriesBatch b = TimeSeriesBatch::create(n, length);
  std::vector<double> z(n);
  for (std::size_t t = 0; t < length; ++t) {
    for (auto& v : z) v = rng.normal();
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k <= i; ++k) s += chol[i * n + k] * z[k];
      b.value(i, t) = s;
    }
  }
  return b;
}

}  // namespace tactis::data
