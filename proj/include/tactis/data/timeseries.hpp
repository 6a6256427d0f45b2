#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <variant>
#include <vector>

#include "tactis/data/rng.hpp"

namespace tactis::data {

/// Values, observation mask, covariates and timestamps of n series of equal
/// length l. Aligned batches share one timestamp vector; unaligned batches
/// carry one row of timestamps per series.
struct TimeSeriesBatch {
  std::size_t num_series = 0;
  std::size_t length = 0;
  std::size_t num_covariates = 0;
  std::vector<double> values;        // n x l
  std::vector<std::uint8_t> mask;    // n x l, 1 = observed
  std::vector<double> covariates;    // n x l x d
  std::vector<double> timestamps;    // l when aligned, n x l otherwise
  bool aligned = true;
  std::vector<int> series_ids;       // n

  /// Fully observed batch of zeros with timestamps 0..l-1 and ids 0..n-1.
  static TimeSeriesBatch create(std::size_t n, std::size_t l, std::size_t d = 0);

  double value(std::size_t i, std::size_t j) const { return values[i * length + j]; }
  double& value(std::size_t i, std::size_t j) { return values[i * length + j]; }
  bool observed(std::size_t i, std::size_t j) const { return mask[i * length + j] != 0; }
  void set_observed(std::size_t i, std::size_t j, bool o) { mask[i * length + j] = o ? 1 : 0; }
  double covariate(std::size_t i, std::size_t j, std::size_t c) const {
    return covariates[(i * length + j) * num_covariates + c];
  }
  double timestamp(std::size_t i, std::size_t j) const {
    return aligned ? timestamps[j] : timestamps[i * length + j];
  }

  std::size_t num_observed() const;
  std::size_t num_missing() const { return num_series * length - num_observed(); }

  /// Throws DataError when sizes disagree or timestamps are not strictly increasing.
  void validate() const;
};

struct StandardizationState {
  std::vector<double> mean;
  std::vector<double> variance;  // floored to 1 for constant series

  double scale(std::size_t i) const;
  double apply(std::size_t i, double x) const;
  double invert(std::size_t i, double x) const;
};

/// Per-series affine normalization from observed tokens only, applied to
/// observed and missing values alike. Population variance; a zero variance
/// is replaced by one.
std::pair<TimeSeriesBatch, StandardizationState> standardize(const TimeSeriesBatch& batch);
TimeSeriesBatch destandardize(const TimeSeriesBatch& batch, const StandardizationState& state);

struct ForecastSuffix {};
struct InterpolationGap {
  std::size_t offset = 0;
  std::size_t gap_length = 0;
};
struct ExplicitMask {
  std::vector<std::uint8_t> mask;  // n x window length, 1 = observed
};
using MaskPattern = std::variant<ForecastSuffix, InterpolationGap, ExplicitMask>;

struct WindowSpec {
  std::size_t history_length = 0;
  std::size_t prediction_length = 0;
  MaskPattern pattern = ForecastSuffix{};

  std::size_t window_length() const { return history_length + prediction_length; }
  void validate() const;
  /// Observation mask of an n-series window.
  std::vector<std::uint8_t> mask(std::size_t num_series) const;
};

/// Copies columns [begin, end) of every series.
TimeSeriesBatch slice_time(const TimeSeriesBatch& batch, std::size_t begin, std::size_t end);
/// Copies the given series, in order.
TimeSeriesBatch select_series(const TimeSeriesBatch& batch, const std::vector<std::size_t>& series);

/// Window starting at `start` with its mask set by the window spec argument.
TimeSeriesBatch extract_window(const TimeSeriesBatch& dataset, std::size_t start,
                               const WindowSpec& spec);

/// Uniformly random complete window whose last index is below `end_limit`
/// (the dataset length when zero). The source range must be fully observed.
TimeSeriesBatch sample_training_window(const TimeSeriesBatch& dataset, const WindowSpec& spec,
                                       Rng& rng, std::size_t end_limit = 0,
                                       std::size_t* start_out = nullptr);

}  // namespace tactis::data
