#include "tactis/interp/interp.hpp"

#include <cmath>

#include "tactis/data/csv_io.hpp"
#include "tactis/error.hpp"
#include "tactis/metrics/scores.hpp"
#include "tactis/training/train.hpp"

namespace tactis::interp {

std::vector<double> InterpolationTask::truth() const {
  return {window.values.begin() + static_cast<std::ptrdiff_t>(gap_offset),
          window.values.begin() + static_cast<std::ptrdiff_t>(gap_offset + gap_length)};
}

std::vector<InterpolationTask> make_tasks(const data::TimeSeriesBatch& series, const GapGeometry& geometry,
                                          std::size_t count) {
  const std::size_t w = geometry.window_length();
  if (count == 0) throw DataError("make_tasks: count must be positive");
  if (geometry.gap == 0 || geometry.before == 0 || geometry.after == 0)
    throw DataError("make_tasks: the gap needs observed values on both sides");
  if (series.num_series == 0 || series.length < count * w)
    throw DataError("make_tasks: " + std::to_string(count) + " windows of length " + std::to_string(w) +
                    " need " + std::to_string(count * w) + " steps, the series has " +
                    std::to_string(series.length));
  const data::WindowSpec spec{geometry.before + geometry.after, geometry.gap,
                              data::InterpolationGap{geometry.before, geometry.gap}};
  const auto first = data::select_series(series, {0});
  const std::size_t slack = series.length - count * w;
  std::vector<InterpolationTask> tasks;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t start = k * w + (count > 1 ? k * slack / (count - 1) : 0);
    tasks.push_back({data::extract_window(first, start, spec), geometry.before, geometry.gap});
  }
  return tasks;
}

data::ForecastSamples dummy_interpolate(const InterpolationTask& task, std::size_t num_samples) {
  const auto& w = task.window;
  if (task.gap_offset == 0 || task.gap_offset + task.gap_length >= w.length)
    throw DataError("dummy_interpolate: gap has no observed value on one side");
  if (!w.observed(0, task.gap_offset - 1) || !w.observed(0, task.gap_offset + task.gap_length))
    throw DataError("dummy_interpolate: boundary values are not observed");
  const double a = w.value(0, task.gap_offset - 1), b = w.value(0, task.gap_offset + task.gap_length);
  const double g1 = static_cast<double>(task.gap_length + 1);
  auto out = data::ForecastSamples::create(num_samples, 1, task.gap_length);
  out.series_ids = {w.series_ids[0]};
  for (std::size_t k = 0; k < task.gap_length; ++k) {
    out.timestamps[k] = w.timestamp(0, task.gap_offset + k);
    const double v = a + (b - a) * static_cast<double>(k + 1) / g1;
    for (std::size_t s = 0; s < num_samples; ++s) out.at(s, 0, k) = v;
  }
  return out;
}

InterpReport run_benchmark(const model::TactisModel& model, const std::vector<InterpolationTask>& tasks,
                           std::size_t num_samples, Rng& rng) {
  if (tasks.empty()) throw DataError("interp benchmark: no tasks");
  InterpReport r;
  std::vector<std::vector<double>> first_values(tasks.size());
  std::vector<double> boundary(tasks.size());
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    const auto& task = tasks[k];
    const auto truth = task.truth();
    const auto samples = training::forecast(model, task.window, num_samples, rng);
    if (samples.horizon != task.gap_length) throw DataError("interp benchmark: task mask does not match its gap");
    const auto dummy = dummy_interpolate(task);
    r.model_energy.push_back(metrics::energy_score(samples, truth));
    r.dummy_energy.push_back(metrics::energy_score(dummy, truth));
    boundary[k] = task.window.value(0, task.gap_offset - 1);
    for (std::size_t s = 0; s < num_samples; ++s) first_values[k].push_back(samples.at(s, 0, 0));
  }
  const double n = static_cast<double>(tasks.size());
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    r.mean_model += r.model_energy[k] / n;
    r.mean_dummy += r.dummy_energy[k] / n;
    const std::size_t other = (k + 1) % tasks.size();
    for (double v : first_values[k]) {
      r.boundary_jump += std::abs(v - boundary[k]);
      r.boundary_jump_shuffled += std::abs(v - boundary[other]);
    }
  }
  r.boundary_jump /= n * static_cast<double>(num_samples);
  r.boundary_jump_shuffled /= n * static_cast<double>(num_samples);
  return r;
}

void save_tasks(const std::filesystem::path& path, const std::vector<InterpolationTask>& tasks) {
  if (tasks.empty()) throw DataError("save_tasks: no tasks");
  const std::size_t l = tasks[0].window.length;
  auto b = data::TimeSeriesBatch::create(tasks.size(), l);
  b.aligned = false;
  b.timestamps.assign(tasks.size() * l, 0.0);
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    const auto& w = tasks[k].window;
    if (w.length != l || w.num_series != 1) throw DataError("save_tasks: tasks differ in shape");
    for (std::size_t j = 0; j < l; ++j) {
      b.value(k, j) = w.value(0, j);
      b.set_observed(k, j, w.observed(0, j));
      b.timestamps[k * l + j] = w.timestamp(0, j);
    }
    b.series_ids[k] = static_cast<int>(k);
  }
  data::save_dataset(path, b);
}

std::vector<InterpolationTask> load_tasks(const std::filesystem::path& path) {
  const auto b = data::load_dataset(path);
  std::vector<InterpolationTask> tasks;
  for (std::size_t k = 0; k < b.num_series; ++k) {
    // the task file numbers its series; every task is scored as series 0
    auto w = data::TimeSeriesBatch::create(1, b.length);
    std::size_t first = b.length, last = 0;
    for (std::size_t j = 0; j < b.length; ++j) {
      w.value(0, j) = b.value(k, j);
      w.set_observed(0, j, b.observed(k, j));
      w.timestamps[j] = b.timestamp(k, j);
      if (!b.observed(k, j)) {
        first = std::min(first, j);
        last = j;
      }
    }
    if (first == b.length) throw DataError(path.string() + ": task " + std::to_string(k) + " has no gap");
    for (std::size_t j = first; j <= last; ++j)
      if (b.observed(k, j))
        throw DataError(path.string() + ": task " + std::to_string(k) + " has more than one gap");
    tasks.push_back({std::move(w), first, last - first + 1});
  }
  return tasks;
}

}  // namespace tactis::interp
