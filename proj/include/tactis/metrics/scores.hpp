#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tactis/data/forecast_samples.hpp"
#include "tactis/data/timeseries.hpp"

namespace tactis::metrics {

/// Empirical CRPS: mean |X_s - x| - 1/(2 S^2) sum_{s,s'} |X_s - X_s'|, via sorting.
double crps(std::span<const double> samples, double observation);
/// Same estimator with the explicit O(S^2) double sum.
double crps_naive(std::span<const double> samples, double observation);

/// CRPS of the across-series sums, averaged over time steps.
/// observations: n x T, row-major, matching the sample layout.
double crps_sum(const data::ForecastSamples& samples, std::span<const double> observations);
/// Mean per-token CRPS; per_series, when non-null, receives each series' mean.
double crps_mean(const data::ForecastSamples& samples, std::span<const double> observations,
                 std::vector<double>* per_series = nullptr);

/// Energy score with beta = 1 and the Frobenius norm over the n x T matrix.
double energy_score(const data::ForecastSamples& samples, std::span<const double> observations);

/// Order-1 Wasserstein distance between two empirical distributions (exact).
double wasserstein_1d(std::span<const double> a, std::span<const double> b);

struct ScoreRow {
  std::string metric;
  int series_id = -1;  // -1: whole forecast
  double value = 0.0;
};

/// Observed values of the sample grid, looked up by series id and timestamp.
std::vector<double> observations_for(const data::ForecastSamples& samples, const data::TimeSeriesBatch& truth);

/// crps (overall and per series), crps_sum and energy_score.
std::vector<ScoreRow> score_forecast(const data::ForecastSamples& samples, std::span<const double> observations);

void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoreRow>& rows);
/// "metric value" lines for terminal output.
std::string format_summary(const std::vector<ScoreRow>& rows);

}  // namespace tactis::metrics
