#include "tactis/training/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "tactis/error.hpp"
#include "tactis/metrics/scores.hpp"

namespace tactis::training {

data::WindowSpec window_spec(const Config& config) {
  const std::size_t g = config.window.prediction_length;
  data::WindowSpec spec;
  if (config.window.pattern == WindowPattern::forecast) {
    spec.history_length = config.train.ratio * g;
    spec.prediction_length = g;
    spec.pattern = data::ForecastSuffix{};
  } else {
    spec.history_length = (config.train.ratio + config.window.ratio_after) * g;
    spec.prediction_length = g;
    spec.pattern = data::InterpolationGap{config.train.ratio * g, g};
  }
  spec.validate();
  return spec;
}

ad::Tensor nll_loss(const TactisModel& model, const std::vector<data::TimeSeriesBatch>& windows, Rng& rng,
                    Rng* dropout_rng) {
  std::vector<std::vector<std::size_t>> perms;
  perms.reserve(windows.size());
  for (const auto& w : windows) perms.push_back(rng.permutation(w.num_missing()));
  return nll_loss(model, windows, perms, dropout_rng);
}

ad::Tensor nll_loss(const TactisModel& model, const std::vector<data::TimeSeriesBatch>& windows,
                    const std::vector<std::vector<std::size_t>>& permutations, Rng* dropout_rng) {
  if (windows.empty()) throw DataError("nll_loss: empty batch");
  std::vector<data::TimeSeriesBatch> standardized;
  standardized.reserve(windows.size());
  std::vector<double> jacobian(windows.size()), inv_count(windows.size());
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const auto& w = windows[b];
    const std::size_t nm = w.num_missing();
    if (nm == 0) throw DataError("nll_loss: window has no missing tokens");
    auto [s, state] = data::standardize(w);
    // density of the raw values = density of the standardized ones / prod(scale)
    double jac = 0.0;
    for (std::size_t i = 0; i < w.num_series; ++i)
      for (std::size_t j = 0; j < w.length; ++j)
        if (!w.observed(i, j)) jac += std::log(state.scale(i));
    jacobian[b] = jac;
    inv_count[b] = 1.0 / static_cast<double>(nm);
    standardized.push_back(std::move(s));
  }
  std::vector<const data::TimeSeriesBatch*> ptrs;
  for (const auto& s : standardized) ptrs.push_back(&s);
  const std::size_t n = windows.size();
  ad::Tensor ll = model.log_likelihood(ptrs, permutations, dropout_rng);
  ad::Tensor per_token = (ad::Tensor::constant({n}, jacobian) - ll) * ad::Tensor::constant({n}, inv_count);
  return ad::mean(per_token);
}

double clip_grad_norm(model::ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (ad::Tensor t : params.tensors())
    if (t.has_grad())
      for (double g : t.mutable_grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / (norm + 1e-6);
    for (ad::Tensor t : params.tensors())
      if (t.has_grad())
        for (double& g : t.mutable_grad()) g *= scale;
  }
  return norm;
}

Rmsprop::Rmsprop(double lr, double weight_decay, double alpha, double eps)
    : lr_(lr), weight_decay_(weight_decay), alpha_(alpha), eps_(eps) {}

void Rmsprop::step(model::ParameterSet& params) {
  const auto& entries = params.entries();
  if (square_avg_.empty())
    for (const auto& e : entries) square_avg_.emplace_back(e.second.numel(), 0.0);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    ad::Tensor t = entries[k].second;
    if (!t.has_grad() && weight_decay_ == 0.0) continue;
    auto value = t.mutable_data();
    const auto grad = t.grad();
    auto& avg = square_avg_[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i] + weight_decay_ * value[i];
      avg[i] = alpha_ * avg[i] + (1.0 - alpha_) * g * g;
      value[i] -= lr_ * g / (std::sqrt(avg[i]) + eps_);
    }
  }
}

std::size_t iterations_per_epoch(const TrainConfig& config, std::size_t num_series) {
  return (config.samples_per_epoch / config.batch_size) * std::max<std::size_t>(1, num_series / config.bag_size);
}

std::vector<data::TimeSeriesBatch> validation_windows(const data::TimeSeriesBatch& dataset,
                                                      const data::WindowSpec& spec, std::size_t validation_start,
                                                      std::size_t end, std::size_t max_windows) {
  const std::size_t w = spec.window_length();
  if (end > dataset.length || end < w || validation_start >= end)
    throw DataError("validation range [" + std::to_string(validation_start) + "," + std::to_string(end) +
                    ") cannot hold a window of length " + std::to_string(w));
  const std::size_t lo = validation_start + 1 >= w ? validation_start + 1 - w : 0;
  const std::size_t hi = end - w;
  if (lo > hi) throw DataError("validation range too short for one window");
  std::vector<std::size_t> starts;
  const std::size_t count = hi - lo + 1;
  if (count <= max_windows) {
    for (std::size_t s = lo; s <= hi; ++s) starts.push_back(s);
  } else {
    for (std::size_t k = 0; k < max_windows; ++k) starts.push_back(lo + k * (count - 1) / (max_windows - 1));
  }
  std::vector<data::TimeSeriesBatch> out;
  for (std::size_t s : starts) out.push_back(data::extract_window(dataset, s, spec));
  return out;
}

double evaluate_nll(const TactisModel& model, const std::vector<data::TimeSeriesBatch>& windows, std::uint64_t seed) {
  if (windows.empty()) throw DataError("evaluate_nll: no windows");
  ad::NoGradScope no_grad;
  const Rng root(seed);
  constexpr std::size_t kChunk = 16;
  double total = 0.0;
  for (std::size_t b = 0; b < windows.size(); b += kChunk) {
    const std::size_t e = std::min(windows.size(), b + kChunk);
    std::vector<data::TimeSeriesBatch> chunk(windows.begin() + static_cast<std::ptrdiff_t>(b),
                                             windows.begin() + static_cast<std::ptrdiff_t>(e));
    std::vector<std::vector<std::size_t>> perms;
    for (std::size_t k = b; k < e; ++k) {
      Rng r = root.split(k);
      perms.push_back(r.permutation(windows[k].num_missing()));
    }
    total += nll_loss(model, chunk, perms).item() * static_cast<double>(e - b);
  }
  return total / static_cast<double>(windows.size());
}

TrainResult train(const data::TimeSeriesBatch& dataset, const Config& config, const TrainOptions& options) {
  config.validate();
  dataset.validate();
  const auto spec = window_spec(config);
  const auto& tc = config.train;
  const std::size_t n = dataset.num_series;
  if (tc.bag_size > n)
    throw ConfigError("train.bag_size = " + std::to_string(tc.bag_size) + " exceeds the " + std::to_string(n) +
                      " series of the dataset");
  const std::size_t usable = options.end_limit == 0 ? dataset.length : std::min(options.end_limit, dataset.length);
  const std::size_t w = spec.window_length();
  const bool validate = options.fixed_epochs == 0;

  std::size_t train_end = usable;
  std::vector<data::TimeSeriesBatch> val;
  if (validate) {
    const std::size_t val_len = std::max<std::size_t>(1, usable / 10);
    if (usable <= val_len) throw DataError("dataset too short to split off a validation range");
    train_end = usable - val_len;
    val = validation_windows(dataset, spec, train_end, usable);
  }
  if (train_end < w)
    throw DataError("dataset too short: training range of " + std::to_string(train_end) +
                    " steps cannot hold a window of length " + std::to_string(w));

  TrainResult result{TactisModel(config, dataset.num_covariates, dataset.series_ids, tc.seed), {}, {}, {}, 0, 0,
                     train_end};
  auto& model = result.model;
  const Rng root(tc.seed);
  Rng window_rng = root.split("windows"), bag_rng = root.split("bags"), perm_rng = root.split("permutations"),
      dropout_rng = root.split("dropout");
  const std::uint64_t val_seed = root.split("validation").seed();
  Rng* dropout = config.encoder.dropout > 0.0 ? &dropout_rng : nullptr;

  Rmsprop optimizer(tc.lr, tc.weight_decay);
  result.iterations_per_epoch = iterations_per_epoch(tc, n);
  const std::size_t epochs = validate ? tc.max_epochs : options.fixed_epochs;
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_state;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    double total = 0.0;
    for (std::size_t it = 0; it < result.iterations_per_epoch; ++it) {
      std::vector<data::TimeSeriesBatch> batch;
      batch.reserve(tc.batch_size);
      for (std::size_t k = 0; k < tc.batch_size; ++k) {
        std::size_t start = 0;
        auto win = data::sample_training_window(dataset, spec, window_rng, train_end, &start);
        result.max_window_end = std::max(result.max_window_end, start + w);
        if (tc.bag_size < n) {
          auto ids = bag_rng.sample_without_replacement(n, tc.bag_size);
          std::sort(ids.begin(), ids.end());
          win = data::select_series(win, ids);
        }
        batch.push_back(std::move(win));
      }
      double loss_value = 0.0;
      {
        ad::Tape tape;
        ad::TapeScope scope(tape);
        const ad::Tensor loss = nll_loss(model, batch, perm_rng, dropout);
        loss_value = loss.item();
        if (!std::isfinite(loss_value))
          throw NumericalError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                               ", iteration " + std::to_string(it + 1));
        tape.backward(loss);
      }
      clip_grad_norm(model.parameters(), tc.grad_clip);
      optimizer.step(model.parameters());
      model.parameters().zero_grad();
      result.step_losses.push_back(loss_value);
      total += loss_value;
    }

    EpochReport report;
    report.epoch = epoch;
    report.train_loss = total / static_cast<double>(result.iterations_per_epoch);
    report.validation_loss = std::numeric_limits<double>::quiet_NaN();
    if (validate) {
      report.validation_loss = evaluate_nll(model, val, val_seed);
      if (report.validation_loss < best) {
        best = report.validation_loss;
        best_state = model.snapshot();
        result.info = {epoch, best};
        report.improved = true;
        since_best = 0;
      } else {
        ++since_best;
      }
    }
    result.epochs.push_back(report);
    if (options.on_epoch) options.on_epoch(report);
    if (validate && tc.patience > 0 && since_best >= tc.patience) break;
  }

  if (validate) {
    if (best_state.empty()) throw NumericalError("validation loss was never finite");
    model.restore(best_state);
  } else {
    result.info = {epochs, std::numeric_limits<double>::quiet_NaN()};
  }
  return result;
}

data::ForecastSamples forecast(const TactisModel& model, const data::TimeSeriesBatch& batch, std::size_t num_samples,
                               Rng& rng) {
  if (num_samples == 0) throw DataError("forecast: num_samples must be positive");
  auto [standardized, state] = data::standardize(batch);
  const auto draws = model.sample(standardized, num_samples, rng);
  const std::size_t l = batch.length, n = batch.num_series, nm = draws.missing.size();

  std::set<std::size_t> column_set;
  for (std::size_t token : draws.missing) column_set.insert(token % l);
  const std::vector<std::size_t> columns(column_set.begin(), column_set.end());
  std::vector<std::size_t> column_of(l, 0);
  for (std::size_t c = 0; c < columns.size(); ++c) column_of[columns[c]] = c;

  auto out = data::ForecastSamples::create(num_samples, n, columns.size());
  out.series_ids = batch.series_ids;
  for (std::size_t c = 0; c < columns.size(); ++c)
    out.timestamps[c] = batch.aligned ? batch.timestamps[columns[c]] : static_cast<double>(columns[c]);
  for (std::size_t s = 0; s < num_samples; ++s) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < columns.size(); ++c) out.at(s, i, c) = batch.value(i, columns[c]);
    for (std::size_t k = 0; k < nm; ++k) {
      const std::size_t token = draws.missing[k], i = token / l;
      const double v = state.invert(i, draws.x[s * nm + k]);
      if (!std::isfinite(v)) throw NumericalError("forecast produced a non-finite sample");
      out.at(s, i, column_of[token % l]) = v;
    }
  }
  return out;
}

std::vector<double> copula_uniformity_report(const TactisModel& model, const data::TimeSeriesBatch& batch,
                                             std::size_t num_samples, Rng& rng) {
  auto [standardized, state] = data::standardize(batch);
  (void)state;
  const auto draws = model.sample(standardized, num_samples, rng, false);
  const std::size_t nm = draws.missing.size();
  std::vector<double> out(nm), col(num_samples), ref(num_samples);
  for (std::size_t k = 0; k < nm; ++k) {
    for (std::size_t s = 0; s < num_samples; ++s) col[s] = draws.u[s * nm + k];
    for (auto& r : ref) r = rng.uniform();
    out[k] = metrics::wasserstein_1d(col, ref);
  }
  return out;
}

}  // namespace tactis::training
