#pragma once

#include <cstddef>
#include <vector>

namespace tactis::data {

/// Joint draws over the predicted region: S samples x n series x T steps.
struct ForecastSamples {
  std::size_t num_samples = 0;
  std::size_t num_series = 0;
  std::size_t horizon = 0;
  std::vector<double> values;      // S x n x T
  std::vector<double> timestamps;  // T
  std::vector<int> series_ids;     // n

  static ForecastSamples create(std::size_t s, std::size_t n, std::size_t t) {
    ForecastSamples f;
    f.num_samples = s;
    f.num_series = n;
    f.horizon = t;
    f.values.assign(s * n * t, 0.0);
    f.timestamps.assign(t, 0.0);
    f.series_ids.assign(n, 0);
    return f;
  }

  double at(std::size_t s, std::size_t i, std::size_t t) const {
    return values[(s * num_series + i) * horizon + t];
  }
  double& at(std::size_t s, std::size_t i, std::size_t t) {
    return values[(s * num_series + i) * horizon + t];
  }
};

}  // namespace tactis::data
