#pragma once

#include <filesystem>
#include <string>

#include "tactis/data/forecast_samples.hpp"
#include "tactis/data/timeseries.hpp"

namespace tactis::data {

// Dataset files:  timestamp,series_id,value,observed[,cov_1..cov_d]
// Sample files:   sample_id,series_id,timestamp,value
//
// Numbers are written in shortest round-trip form so save/load is lossless.
// Parse failures raise DataError with a "<path>:<line>:" prefix.

TimeSeriesBatch load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const TimeSeriesBatch& batch);

ForecastSamples load_samples(const std::filesystem::path& path);
void save_samples(const std::filesystem::path& path, const ForecastSamples& samples);

/// Shortest decimal form that parses back to exactly `x`.
std::string format_double(double x);

}  // namespace tactis::data
