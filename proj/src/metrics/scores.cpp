#include "tactis/metrics/scores.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "tactis/data/csv_io.hpp"
#include "tactis/error.hpp"

namespace tactis::metrics {

namespace {

void require_pairs(std::size_t s, const char* what) {
  if (s < 2) throw DataError(std::string(what) + " needs at least two samples");
}

void require_grid(const data::ForecastSamples& f, std::span<const double> obs, const char* what) {
  if (f.values.size() != f.num_samples * f.num_series * f.horizon)
    throw DataError(std::string(what) + ": sample array does not match its declared shape");
  if (obs.size() != f.num_series * f.horizon)
    throw DataError(std::string(what) + ": " + std::to_string(obs.size()) + " observations for a " +
                    std::to_string(f.num_series) + "x" + std::to_string(f.horizon) + " forecast");
}

}  // namespace

double crps(std::span<const double> samples, double observation) {
  require_pairs(samples.size(), "crps");
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  const double s = static_cast<double>(x.size());
  double abs_err = 0.0, pair = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    abs_err += std::abs(x[i] - observation);
    // x_(i) is larger than i samples and smaller than S - 1 - i samples
    pair += (2.0 * static_cast<double>(i) - s + 1.0) * x[i];
  }
  return abs_err / s - pair / (s * s);
}

double crps_naive(std::span<const double> samples, double observation) {
  require_pairs(samples.size(), "crps");
  const double s = static_cast<double>(samples.size());
  double abs_err = 0.0, pair = 0.0;
  for (double a : samples) {
    abs_err += std::abs(a - observation);
    for (double b : samples) pair += std::abs(a - b);
  }
  return abs_err / s - pair / (2.0 * s * s);
}

double crps_sum(const data::ForecastSamples& f, std::span<const double> obs) {
  require_grid(f, obs, "crps_sum");
  require_pairs(f.num_samples, "crps_sum");
  double total = 0.0;
  std::vector<double> sums(f.num_samples);
  for (std::size_t t = 0; t < f.horizon; ++t) {
    double truth = 0.0;
    for (std::size_t i = 0; i < f.num_series; ++i) truth += obs[i * f.horizon + t];
    for (std::size_t s = 0; s < f.num_samples; ++s) {
      double v = 0.0;
      for (std::size_t i = 0; i < f.num_series; ++i) v += f.at(s, i, t);
      sums[s] = v;
    }
    total += crps(sums, truth);
  }
  return total / static_cast<double>(f.horizon);
}

double crps_mean(const data::ForecastSamples& f, std::span<const double> obs, std::vector<double>* per_series) {
  require_grid(f, obs, "crps");
  require_pairs(f.num_samples, "crps");
  std::vector<double> col(f.num_samples);
  double total = 0.0;
  if (per_series) per_series->assign(f.num_series, 0.0);
  for (std::size_t i = 0; i < f.num_series; ++i) {
    double series_total = 0.0;
    for (std::size_t t = 0; t < f.horizon; ++t) {
      for (std::size_t s = 0; s < f.num_samples; ++s) col[s] = f.at(s, i, t);
      series_total += crps(col, obs[i * f.horizon + t]);
    }
    if (per_series) (*per_series)[i] = series_total / static_cast<double>(f.horizon);
    total += series_total;
  }
  return total / static_cast<double>(f.num_series * f.horizon);
}

double energy_score(const data::ForecastSamples& f, std::span<const double> obs) {
  require_grid(f, obs, "energy_score");
  require_pairs(f.num_samples, "energy_score");
  const std::size_t m = f.num_series * f.horizon;
  const double s = static_cast<double>(f.num_samples);
  auto row = [&](std::size_t k) { return f.values.data() + k * m; };
  double to_obs = 0.0, pair = 0.0;
  for (std::size_t a = 0; a < f.num_samples; ++a) {
    double d = 0.0;
    for (std::size_t c = 0; c < m; ++c) d += (row(a)[c] - obs[c]) * (row(a)[c] - obs[c]);
    to_obs += std::sqrt(d);
    for (std::size_t b = a + 1; b < f.num_samples; ++b) {
      double e = 0.0;
      for (std::size_t c = 0; c < m; ++c) e += (row(a)[c] - row(b)[c]) * (row(a)[c] - row(b)[c]);
      pair += std::sqrt(e);
    }
  }
  // unordered pairs counted once: 1/(2 S^2) * 2 * sum_{a<b}
  return to_obs / s - pair / (s * s);
}

double wasserstein_1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw DataError("wasserstein_1d needs non-empty samples");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  // integrate |F_x - F_y| between consecutive points of the merged support
  const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double prev = std::min(x[0], y[0]), total = 0.0;
  while (i < x.size() || j < y.size()) {
    const double next = (j >= y.size() || (i < x.size() && x[i] <= y[j])) ? x[i] : y[j];
    total += std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny) * (next - prev);
    prev = next;
    while (i < x.size() && x[i] == next) ++i;
    while (j < y.size() && y[j] == next) ++j;
  }
  return total;
}

std::vector<double> observations_for(const data::ForecastSamples& f, const data::TimeSeriesBatch& truth) {
  std::vector<double> obs(f.num_series * f.horizon);
  for (std::size_t i = 0; i < f.num_series; ++i) {
    const auto it = std::find(truth.series_ids.begin(), truth.series_ids.end(), f.series_ids[i]);
    if (it == truth.series_ids.end())
      throw DataError("truth has no series " + std::to_string(f.series_ids[i]));
    const std::size_t r = static_cast<std::size_t>(it - truth.series_ids.begin());
    for (std::size_t t = 0; t < f.horizon; ++t) {
      bool found = false;
      for (std::size_t j = 0; j < truth.length && !found; ++j) {
        if (truth.timestamp(r, j) == f.timestamps[t]) {
          obs[i * f.horizon + t] = truth.value(r, j);
          found = true;
        }
      }
      if (!found)
        throw DataError("truth has no value for series " + std::to_string(f.series_ids[i]) + " at timestamp " +
                        data::format_double(f.timestamps[t]));
    }
  }
  return obs;
}

std::vector<ScoreRow> score_forecast(const data::ForecastSamples& f, std::span<const double> obs) {
  std::vector<double> per_series;
  std::vector<ScoreRow> rows;
  rows.push_back({"crps", -1, crps_mean(f, obs, &per_series)});
  rows.push_back({"crps_sum", -1, crps_sum(f, obs)});
  rows.push_back({"energy_score", -1, energy_score(f, obs)});
  for (std::size_t i = 0; i < f.num_series; ++i) rows.push_back({"crps", f.series_ids[i], per_series[i]});
  return rows;
}

void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoreRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out << "metric,series_id,value\n";
  for (const auto& r : rows) {
    out << r.metric << ',';
    if (r.series_id >= 0) out << r.series_id;
    out << ',' << data::format_double(r.value) << '\n';
  }
  if (!out) throw DataError(path.string() + ": write failed");
}

std::string format_summary(const std::vector<ScoreRow>& rows) {
  std::ostringstream out;
  for (const auto& r : rows)
    if (r.series_id < 0) out << r.metric << ' ' << data::format_double(r.value) << '\n';
  return out.str();
}

}  // namespace tactis::metrics
