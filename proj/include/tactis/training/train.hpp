#pragma once

#include <functional>
#include <vector>

#include "tactis/config.hpp"
#include "tactis/data/forecast_samples.hpp"
#include "tactis/data/timeseries.hpp"
#include "tactis/model/tactis.hpp"

namespace tactis::training {

using model::TactisModel;

/// Window geometry from window.* and train.ratio.
data::WindowSpec window_spec(const Config& config);

/// Mean over windows of the per-token negative log-likelihood of the missing
/// values, in the units of the raw data. Each window is standardized from its
/// observed tokens and scored under one permutation drawn from `rng`.
ad::Tensor nll_loss(const TactisModel& model, const std::vector<data::TimeSeriesBatch>& windows, Rng& rng,
                    Rng* dropout_rng = nullptr);
/// Same, with explicit permutations (positions into the window's missing tokens).
ad::Tensor nll_loss(const TactisModel& model, const std::vector<data::TimeSeriesBatch>& windows,
                    const std::vector<std::vector<std::size_t>>& permutations, Rng* dropout_rng = nullptr);

/// Scales all gradients so their global norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(model::ParameterSet& params, double max_norm);

/// RMSprop with decoupled state per parameter; weight decay is added to the gradient.
class Rmsprop {
 public:
  Rmsprop(double lr, double weight_decay, double alpha = 0.99, double eps = 1e-8);
  void step(model::ParameterSet& params);

 private:
  double lr_, weight_decay_, alpha_, eps_;
  std::vector<std::vector<double>> square_avg_;
};

struct EpochReport {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double validation_loss = 0.0;  // NaN without validation
  bool improved = false;
};

struct TrainOptions {
  /// Only indices below this are used (0: the whole dataset).
  std::size_t end_limit = 0;
  /// When nonzero: train exactly this many epochs without validation and keep the last state.
  std::size_t fixed_epochs = 0;
  std::function<void(const EpochReport&)> on_epoch;
};

struct TrainResult {
  TactisModel model;
  model::CheckpointInfo info;
  std::vector<EpochReport> epochs;
  std::vector<double> step_losses;
  std::size_t iterations_per_epoch = 0;
  std::size_t max_window_end = 0;  // exclusive end of the latest training window drawn
  std::size_t validation_start = 0;
};

/// Iterations per epoch: floor(samples_per_epoch / batch_size) * floor(n / bag_size).
std::size_t iterations_per_epoch(const TrainConfig& config, std::size_t num_series);

/// Fits a model. The final 10% of the usable range is held out for validation
/// (unless fixed_epochs is set) and the best-validation state is returned.
TrainResult train(const data::TimeSeriesBatch& dataset, const Config& config, const TrainOptions& options = {});

/// Deterministic validation windows: all series, ends inside [validation_start, end).
std::vector<data::TimeSeriesBatch> validation_windows(const data::TimeSeriesBatch& dataset,
                                                      const data::WindowSpec& spec, std::size_t validation_start,
                                                      std::size_t end, std::size_t max_windows = 64);
/// Mean per-token NLL over windows with permutations fixed by `seed`.
double evaluate_nll(const TactisModel& model, const std::vector<data::TimeSeriesBatch>& windows, std::uint64_t seed);

/// Joint forecast of the masked tokens of `batch` in data units. Columns are the
/// time steps holding at least one missing token; observed entries inside them
/// are copied from the batch.
data::ForecastSamples forecast(const TactisModel& model, const data::TimeSeriesBatch& batch,
                               std::size_t num_samples, Rng& rng);

/// Per missing token: Wasserstein distance between its copula samples and as many U[0,1] draws.
std::vector<double> copula_uniformity_report(const TactisModel& model, const data::TimeSeriesBatch& batch,
                                             std::size_t num_samples, Rng& rng);

}  // namespace tactis::training
