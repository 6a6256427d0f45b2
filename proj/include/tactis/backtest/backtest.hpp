#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "tactis/config.hpp"
#include "tactis/data/timeseries.hpp"
#include "tactis/metrics/scores.hpp"

namespace tactis::backtest {

/// Rolling retrain/forecast schedule resolved to dataset indices.
struct BacktestPlan {
  std::vector<std::size_t> retrain_indices;              // idx(tau_i), strictly increasing
  std::vector<std::vector<std::size_t>> forecast_indices; // per retrain, first predicted index
  std::size_t history_length = 0;
  std::size_t prediction_length = 0;
  std::size_t trials = 1;
  std::size_t epochs = 0;
};

/// Resolves backtest.* against the dataset's (aligned) timestamps and checks that
/// every training range and forecast window fits. Throws before anything is trained.
BacktestPlan make_plan(const data::TimeSeriesBatch& dataset, const Config& config);

struct Cell {
  std::size_t retrain = 0;  // position in the plan
  std::size_t trial = 0;
  std::size_t forecast = 0;  // position within the retrain's forecasts
  std::size_t forecast_index = 0;
  double forecast_timestamp = 0.0;
  std::vector<metrics::ScoreRow> scores;
};

struct AggregateRow {
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single cell
  std::size_t count = 0;
};

struct BacktestReport {
  std::vector<Cell> cells;
  std::vector<AggregateRow> aggregate;
};

struct BacktestOptions {
  std::size_t num_samples = 100;
  std::function<void(const std::string&)> log;
};

/// For each retrain point and trial: train for backtest.epochs epochs on indices
/// before idx(tau_i), then forecast and score every window of that retrain point.
BacktestReport run_backtest(const data::TimeSeriesBatch& dataset, const Config& config,
                            const BacktestOptions& options = {});

/// Mean and standard deviation per whole-forecast metric over all cells.
std::vector<AggregateRow> aggregate(const std::vector<Cell>& cells);

/// cell_r<i>_t<trial>_f<j>.csv per cell and aggregate.csv ("metric,mean,std,count").
void write_report(const std::filesystem::path& dir, const BacktestReport& report);

}  // namespace tactis::backtest
