#pragma once

#include <filesystem>
#include <vector>

#include "tactis/data/forecast_samples.hpp"
#include "tactis/data/rng.hpp"
#include "tactis/data/timeseries.hpp"
#include "tactis/model/tactis.hpp"

namespace tactis::interp {

struct GapGeometry {
  std::size_t before = 50;
  std::size_t gap = 25;
  std::size_t after = 50;
  std::size_t window_length() const { return before + gap + after; }
};

/// One univariate window with a masked gap; the window keeps the realized values.
struct InterpolationTask {
  data::TimeSeriesBatch window;
  std::size_t gap_offset = 0;
  std::size_t gap_length = 0;
  std::vector<double> truth() const;
};

/// `count` non-overlapping windows cut from the first series of `series`, spread evenly over it.
std::vector<InterpolationTask> make_tasks(const data::TimeSeriesBatch& series, const GapGeometry& geometry,
                                          std::size_t count);

/// Straight line a + (b - a) k / (G + 1), k = 1..G, between the values around the gap;
/// every sample is the same line.
data::ForecastSamples dummy_interpolate(const InterpolationTask& task, std::size_t num_samples = 2);

struct InterpReport {
  std::vector<double> model_energy;  // per task
  std::vector<double> dummy_energy;
  double mean_model = 0.0;
  double mean_dummy = 0.0;
  // mean |first gap sample - last observed value|, against the task's own boundary
  // and against the next task's boundary
  double boundary_jump = 0.0;
  double boundary_jump_shuffled = 0.0;
};

InterpReport run_benchmark(const model::TactisModel& model, const std::vector<InterpolationTask>& tasks,
                           std::size_t num_samples, Rng& rng);

/// Tasks as one dataset file: series k is task k, gap tokens written with observed = 0.
void save_tasks(const std::filesystem::path& path, const std::vector<InterpolationTask>& tasks);
std::vector<InterpolationTask> load_tasks(const std::filesystem::path& path);

}  // namespace tactis::interp
