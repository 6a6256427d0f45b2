#include "tactis/data/timeseries.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "tactis/error.hpp"

namespace tactis::data {

TimeSeriesBatch TimeSeriesBatch::create(std::size_t n, std::size_t l, std::size_t d) {
  TimeSeriesBatch b;
  b.num_series = n;
  b.length = l;
  b.num_covariates = d;
  b.values.assign(n * l, 0.0);
  b.mask.assign(n * l, 1);
  b.covariates.assign(n * l * d, 0.0);
  b.timestamps.resize(l);
  std::iota(b.timestamps.begin(), b.timestamps.end(), 0.0);
  b.series_ids.resize(n);
  std::iota(b.series_ids.begin(), b.series_ids.end(), 0);
  return b;
}

std::size_t TimeSeriesBatch::num_observed() const {
  std::size_t n = 0;
  for (auto m : mask) n += m != 0;
  return n;
}

void TimeSeriesBatch::validate() const {
  const std::size_t cells = num_series * length;
  if (values.size() != cells || mask.size() != cells)
    throw DataError("batch: values/mask do not match " + std::to_string(num_series) + "x" +
                    std::to_string(length));
  if (covariates.size() != cells * num_covariates)
    throw DataError("batch: covariate count does not match");
  if (series_ids.size() != num_series) throw DataError("batch: series id count does not match");
  const std::size_t rows = aligned ? 1 : num_series;
  if (timestamps.size() != rows * length) throw DataError("batch: timestamp count does not match");
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 1; j < length; ++j)
      if (!(timestamps[r * length + j] > timestamps[r * length + j - 1]))
        throw DataError("batch: timestamps not strictly increasing at index " + std::to_string(j));
}

double StandardizationState::scale(std::size_t i) const { return std::sqrt(variance[i]); }
double StandardizationState::apply(std::size_t i, double x) const {
  return (x - mean[i]) / scale(i);
}
double StandardizationState::invert(std::size_t i, double x) const {
  return scale(i) * x + mean[i];
}

std::pair<TimeSeriesBatch, StandardizationState> standardize(const TimeSeriesBatch& batch) {
  StandardizationState state;
  state.mean.resize(batch.num_series);
  state.variance.resize(batch.num_series);
  TimeSeriesBatch out = batch;
  for (std::size_t i = 0; i < batch.num_series; ++i) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t j = 0; j < batch.length; ++j) {
      if (batch.observed(i, j)) {
        total += batch.value(i, j);
        ++count;
      }
    }
    if (count == 0)
      throw DataError("standardize: series " + std::to_string(batch.series_ids[i]) +
                      " has no observed tokens");
    const double mean = total / static_cast<double>(count);
    double var = 0.0;
    for (std::size_t j = 0; j < batch.length; ++j)
      if (batch.observed(i, j)) var += (batch.value(i, j) - mean) * (batch.value(i, j) - mean);
    var /= static_cast<double>(count);
    state.mean[i] = mean;
    state.variance[i] = var > 0.0 ? var : 1.0;
    for (std::size_t j = 0; j < batch.length; ++j) out.value(i, j) = state.apply(i, batch.value(i, j));
  }
  return {std::move(out), std::move(state)};
}

TimeSeriesBatch destandardize(const TimeSeriesBatch& batch, const StandardizationState& state) {
  TimeSeriesBatch out = batch;
  for (std::size_t i = 0; i < batch.num_series; ++i)
    for (std::size_t j = 0; j < batch.length; ++j) out.value(i, j) = state.invert(i, batch.value(i, j));
  return out;
}

void WindowSpec::validate() const {
  if (history_length == 0 && std::holds_alternative<ForecastSuffix>(pattern))
    throw DataError("window: history length must be positive");
  if (prediction_length == 0) throw DataError("window: prediction length must be positive");
  if (const auto* gap = std::get_if<InterpolationGap>(&pattern)) {
    if (gap->gap_length == 0 || gap->offset + gap->gap_length > window_length())
      throw DataError("window: interpolation gap does not fit inside the window");
  }
}

std::vector<std::uint8_t> WindowSpec::mask(std::size_t num_series) const {
  const std::size_t l = window_length();
  std::vector<std::uint8_t> m(num_series * l, 1);
  if (std::holds_alternative<ForecastSuffix>(pattern)) {
    for (std::size_t i = 0; i < num_series; ++i)
      for (std::size_t j = history_length; j < l; ++j) m[i * l + j] = 0;
  } else if (const auto* gap = std::get_if<InterpolationGap>(&pattern)) {
    for (std::size_t i = 0; i < num_series; ++i)
      for (std::size_t j = gap->offset; j < gap->offset + gap->gap_length; ++j) m[i * l + j] = 0;
  } else {
    const auto& explicit_mask = std::get<ExplicitMask>(pattern).mask;
    if (explicit_mask.size() != m.size())
      throw DataError("window: explicit mask has " + std::to_string(explicit_mask.size()) +
                      " entries, expected " + std::to_string(m.size()));
    m = explicit_mask;
  }
  return m;
}

TimeSeriesBatch slice_time(const TimeSeriesBatch& batch, std::size_t begin, std::size_t end) {
  if (begin > end || end > batch.length) throw DataError("slice_time: range out of bounds");
  const std::size_t l = end - begin;
  const std::size_t d = batch.num_covariates;
  TimeSeriesBatch out;
  out.num_series = batch.num_series;
  out.length = l;
  out.num_covariates = d;
  out.aligned = batch.aligned;
  out.series_ids = batch.series_ids;
  out.values.resize(batch.num_series * l);
  out.mask.resize(batch.num_series * l);
  out.covariates.resize(batch.num_series * l * d);
  for (std::size_t i = 0; i < batch.num_series; ++i) {
    for (std::size_t j = 0; j < l; ++j) {
      out.values[i * l + j] = batch.value(i, begin + j);
      out.mask[i * l + j] = batch.mask[i * batch.length + begin + j];
      for (std::size_t c = 0; c < d; ++c)
        out.covariates[(i * l + j) * d + c] = batch.covariate(i, begin + j, c);
    }
  }
  if (batch.aligned) {
    out.timestamps.assign(batch.timestamps.begin() + static_cast<std::ptrdiff_t>(begin),
                          batch.timestamps.begin() + static_cast<std::ptrdiff_t>(end));
  } else {
    out.timestamps.resize(batch.num_series * l);
    for (std::size_t i = 0; i < batch.num_series; ++i)
      for (std::size_t j = 0; j < l; ++j) out.timestamps[i * l + j] = batch.timestamp(i, begin + j);
  }
  return out;
}

TimeSeriesBatch select_series(const TimeSeriesBatch& batch, const std::vector<std::size_t>& series) {
  const std::size_t l = batch.length;
  const std::size_t d = batch.num_covariates;
  TimeSeriesBatch out;
  out.num_series = series.size();
  out.length = l;
  out.num_covariates = d;
  out.aligned = batch.aligned;
  if (batch.aligned) out.timestamps = batch.timestamps;
  for (auto i : series) {
    if (i >= batch.num_series) throw DataError("select_series: index out of range");
    out.series_ids.push_back(batch.series_ids[i]);
    out.values.insert(out.values.end(), batch.values.begin() + static_cast<std::ptrdiff_t>(i * l),
                      batch.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * l));
    out.mask.insert(out.mask.end(), batch.mask.begin() + static_cast<std::ptrdiff_t>(i * l),
                    batch.mask.begin() + static_cast<std::ptrdiff_t>((i + 1) * l));
    out.covariates.insert(out.covariates.end(),
                          batch.covariates.begin() + static_cast<std::ptrdiff_t>(i * l * d),
                          batch.covariates.begin() + static_cast<std::ptrdiff_t>((i + 1) * l * d));
    if (!batch.aligned)
      out.timestamps.insert(out.timestamps.end(),
                            batch.timestamps.begin() + static_cast<std::ptrdiff_t>(i * l),
                            batch.timestamps.begin() + static_cast<std::ptrdiff_t>((i + 1) * l));
  }
  return out;
}

TimeSeriesBatch extract_window(const TimeSeriesBatch& dataset, std::size_t start,
                               const WindowSpec& spec) {
  spec.validate();
  const std::size_t l = spec.window_length();
  if (start + l > dataset.length)
    throw DataError("window [" + std::to_string(start) + "," + std::to_string(start + l) +
                    ") exceeds dataset length " + std::to_string(dataset.length));
  TimeSeriesBatch w = slice_time(dataset, start, start + l);
  w.mask = spec.mask(dataset.num_series);
  return w;
}

TimeSeriesBatch sample_training_window(const TimeSeriesBatch& dataset, const WindowSpec& spec,
                                       Rng& rng, std::size_t end_limit, std::size_t* start_out) {
  spec.validate();
  const std::size_t limit = end_limit == 0 ? dataset.length : end_limit;
  const std::size_t l = spec.window_length();
  if (limit > dataset.length) throw DataError("sample_training_window: limit beyond dataset");
  if (l > limit)
    throw DataError("dataset too short: window of length " + std::to_string(l) +
                    " does not fit in " + std::to_string(limit) + " steps");
  const std::size_t start = rng.index(limit - l + 1);
  for (std::size_t i = 0; i < dataset.num_series; ++i)
    for (std::size_t j = start; j < start + l; ++j)
      if (!dataset.observed(i, j))
        throw DataError("training windows require observed source values (series " +
                        std::to_string(dataset.series_ids[i]) + ", index " + std::to_string(j) +
                        ")");
  if (start_out) *start_out = start;
  return extract_window(dataset, start, spec);
}

}  // namespace tactis::data
