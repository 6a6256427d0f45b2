#include "tactis/backtest/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "tactis/data/csv_io.hpp"
#include "tactis/error.hpp"
#include "tactis/training/train.hpp"

namespace tactis::backtest {

namespace {

std::string idx_str(std::size_t i) { return std::to_string(i); }

}  // namespace

BacktestPlan make_plan(const data::TimeSeriesBatch& dataset, const Config& config) {
  const auto& bc = config.backtest;
  if (bc.retrain_times.empty()) throw ConfigError("backtest.retrain_times is empty");
  if (bc.forecast_offsets.empty()) throw ConfigError("backtest.forecast_offsets is empty");
  if (!dataset.aligned) throw DataError("backtest needs a dataset with shared timestamps");
  if (bc.epochs == 0) throw ConfigError("backtest.epochs must be positive");

  BacktestPlan plan;
  plan.prediction_length = bc.prediction_length ? bc.prediction_length : config.window.prediction_length;
  plan.history_length = config.train.ratio * plan.prediction_length;
  plan.trials = bc.trials;
  plan.epochs = bc.epochs;
  const std::size_t w = plan.history_length + plan.prediction_length;
  const auto& ts = dataset.timestamps;

  for (std::size_t i = 0; i < bc.retrain_times.size(); ++i) {
    const double tau = bc.retrain_times[i];
    if (i > 0 && !(tau > bc.retrain_times[i - 1]))
      throw ConfigError("backtest.retrain_times must be strictly increasing");
    const auto it = std::lower_bound(ts.begin(), ts.end(), tau);
    if (it == ts.end())
      throw DataError("retrain time " + data::format_double(tau) + " is after the last timestamp");
    const std::size_t idx = static_cast<std::size_t>(it - ts.begin());
    if (!plan.retrain_indices.empty() && idx == plan.retrain_indices.back())
      throw DataError("retrain times " + data::format_double(bc.retrain_times[i - 1]) + " and " +
                      data::format_double(tau) + " resolve to the same index");
    if (idx < w)
      throw DataError("retrain time " + data::format_double(tau) + ": only " + idx_str(idx) +
                      " steps before it, a training window needs " + idx_str(w));
    plan.retrain_indices.push_back(idx);
  }
  for (std::size_t i = 0; i < plan.retrain_indices.size(); ++i) {
    const std::size_t idx = plan.retrain_indices[i];
    const std::size_t next = i + 1 < plan.retrain_indices.size() ? plan.retrain_indices[i + 1] : dataset.length;
    std::vector<std::size_t> forecasts;
    for (std::size_t off : bc.forecast_offsets) {
      const std::size_t f = idx + off;
      if (f >= next)
        throw DataError("forecast offset " + idx_str(off) + " after retrain time " +
                        data::format_double(bc.retrain_times[i]) + " reaches the next retrain point");
      if (f + plan.prediction_length > dataset.length)
        throw DataError("forecast window at index " + idx_str(f) + " runs past the end of the data (length " +
                        idx_str(dataset.length) + ")");
      forecasts.push_back(f);
    }
    plan.forecast_indices.push_back(std::move(forecasts));
  }
  return plan;
}

std::vector<AggregateRow> aggregate(const std::vector<Cell>& cells) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> values;
  for (const auto& c : cells)
    for (const auto& r : c.scores) {
      if (r.series_id >= 0) continue;
      if (!values.count(r.metric)) order.push_back(r.metric);
      values[r.metric].push_back(r.value);
    }
  std::vector<AggregateRow> out;
  for (const auto& m : order) {
    const auto& v = values[m];
    AggregateRow row{m, 0.0, 0.0, v.size()};
    for (double x : v) row.mean += x;
    row.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - row.mean) * (x - row.mean);
      row.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    out.push_back(row);
  }
  return out;
}

BacktestReport run_backtest(const data::TimeSeriesBatch& dataset, const Config& config,
                            const BacktestOptions& options) {
  config.validate();
  dataset.validate();
  const auto plan = make_plan(dataset, config);
  Config cfg = config;
  cfg.window.prediction_length = plan.prediction_length;
  cfg.window.pattern = WindowPattern::forecast;
  cfg.validate();
  if (cfg.train.bag_size > dataset.num_series)
    throw ConfigError("train.bag_size = " + idx_str(cfg.train.bag_size) + " exceeds the " +
                      idx_str(dataset.num_series) + " series of the dataset");
  const data::WindowSpec spec{plan.history_length, plan.prediction_length, data::ForecastSuffix{}};
  const Rng root(config.train.seed);

  BacktestReport report;
  for (std::size_t i = 0; i < plan.retrain_indices.size(); ++i) {
    const std::size_t cut = plan.retrain_indices[i];
    for (std::size_t trial = 0; trial < plan.trials; ++trial) {
      Config cell_cfg = cfg;
      cell_cfg.train.seed = root.split("trial").split(i).split(trial).seed();
      training::TrainOptions opt;
      opt.end_limit = cut;
      opt.fixed_epochs = plan.epochs;
      if (options.log)
        options.log("retrain " + idx_str(i + 1) + "/" + idx_str(plan.retrain_indices.size()) + " trial " +
                    idx_str(trial + 1) + ": training on indices < " + idx_str(cut));
      const auto result = training::train(dataset, cell_cfg, opt);
      if (result.max_window_end > cut)
        throw Error("temporal hygiene violated: a training window ended at index " +
                    idx_str(result.max_window_end) + " > " + idx_str(cut));
      Rng sample_rng = Rng(cell_cfg.train.seed).split("sampling");
      for (std::size_t j = 0; j < plan.forecast_indices[i].size(); ++j) {
        const std::size_t f = plan.forecast_indices[i][j];
        const std::size_t start = f - plan.history_length;
        const auto window = data::extract_window(dataset, start, spec);
        const auto truth = data::slice_time(dataset, start, start + spec.window_length());
        const auto samples = training::forecast(result.model, window, options.num_samples, sample_rng);
        Cell cell{i, trial, j, f, dataset.timestamps[f],
                  metrics::score_forecast(samples, metrics::observations_for(samples, truth))};
        report.cells.push_back(std::move(cell));
      }
    }
  }
  report.aggregate = aggregate(report.cells);
  return report;
}

void write_report(const std::filesystem::path& dir, const BacktestReport& report) {
  std::filesystem::create_directories(dir);
  for (const auto& c : report.cells)
    metrics::write_scores_csv(dir / ("cell_r" + idx_str(c.retrain) + "_t" + idx_str(c.trial) + "_f" +
                                     idx_str(c.forecast) + ".csv"),
                              c.scores);
  const auto path = dir / "aggregate.csv";
  std::ofstream out(path);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out << "metric,mean,std,count\n";
  for (const auto& r : report.aggregate)
    out << r.metric << ',' << data::format_double(r.mean) << ',' << data::format_double(r.stddev) << ','
        << r.count << '\n';
  if (!out) throw DataError(path.string() + ": write failed");
}

}  // namespace tactis::backtest
