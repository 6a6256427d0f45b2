#pragma once

#include <cstddef>

#include "tactis/data/rng.hpp"
#include "tactis/data/timeseries.hpp"

namespace tactis::data {

struct StochasticVolatilityParams {
  double mu = -9.0;    // log-variance level
  double phi = 0.99;   // persistence
  double sigma = 0.04; // volatility of the log-variance
};

/// Univariate random walk x_t = x_{t-1} + y_t with x_1 = 1, where
/// y_t ~ N(0, exp h_t) and h_t is a stationary AR(1) log-variance:
///   h_0 ~ N(mu, sigma^2 / (1 - phi^2)),  h_t ~ N(mu + phi (h_{t-1} - mu), sigma^2).
TimeSeriesBatch generate_stochastic_volatility(std::size_t length,
                                               const StochasticVolatilityParams& params, Rng& rng);

/// n series drawn i.i.d. in time from N(0, R) where R has unit diagonal and
/// every off-diagonal entry equal to `correlation`.
TimeSeriesBatch generate_correlated_gaussian(std::size_t num_series, std::size_t length,
                                             double correlation, Rng& rng);

}  // namespace tactis::data
