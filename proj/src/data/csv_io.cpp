#include "tactis/data/csv_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "tactis/error.hpp"

namespace tactis::data {

namespace {

struct LineReader {
  explicit LineReader(const std::filesystem::path& p) : path(p), in(p) {
    if (!in) throw DataError(path.string() + ": cannot open file");
  }
  bool next(std::string& line) {
    while (std::getline(in, line)) {
      ++number;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError(path.string() + ":" + std::to_string(number) + ": " + msg);
  }

  std::filesystem::path path;
  std::ifstream in;
  std::size_t number = 0;
};

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    auto field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
    while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
    out.push_back(field);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(const LineReader& r, std::string_view s, const char* what) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    r.fail(std::string("invalid ") + what + " '" + std::string(s) + "'");
  return v;
}

long long parse_int(const LineReader& r, std::string_view s, const char* what) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    r.fail(std::string("invalid ") + what + " '" + std::string(s) + "'");
  return v;
}

struct Row {
  double timestamp;
  double value;
  bool observed;
  std::vector<double> covariates;
};

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

TimeSeriesBatch load_dataset(const std::filesystem::path& path) {
  LineReader reader(path);
  std::string line;
  if (!reader.next(line)) throw DataError(path.string() + ": empty file");

  const auto header = split(line);
  static const char* kRequired[] = {"timestamp", "series_id", "value", "observed"};
  if (header.size() < 4) reader.fail("malformed header, expected timestamp,series_id,value,observed[,cov_1..]");
  for (std::size_t i = 0; i < 4; ++i)
    if (header[i] != kRequired[i])
      reader.fail("malformed header: column " + std::to_string(i + 1) + " must be '" +
                  kRequired[i] + "', found '" + std::string(header[i]) + "'");
  const std::size_t d = header.size() - 4;
  for (std::size_t c = 0; c < d; ++c)
    if (header[4 + c] != "cov_" + std::to_string(c + 1))
      reader.fail("malformed header: expected 'cov_" + std::to_string(c + 1) + "', found '" +
                  std::string(header[4 + c]) + "'");

  std::map<int, std::vector<Row>> series;
  while (reader.next(line)) {
    const auto fields = split(line);
    if (fields.size() != header.size())
      reader.fail("ragged row: " + std::to_string(fields.size()) + " fields, header has " +
                  std::to_string(header.size()));
    Row row;
    row.timestamp = parse_double(reader, fields[0], "timestamp");
    const auto id = parse_int(reader, fields[1], "series_id");
    row.value = parse_double(reader, fields[2], "value");
    const auto obs = parse_int(reader, fields[3], "observed flag");
    if (obs != 0 && obs != 1) reader.fail("observed must be 0 or 1");
    row.observed = obs == 1;
    for (std::size_t c = 0; c < d; ++c) row.covariates.push_back(parse_double(reader, fields[4 + c], "covariate"));
    auto& rows = series[static_cast<int>(id)];
    if (!rows.empty() && !(row.timestamp > rows.back().timestamp))
      reader.fail("timestamp " + format_double(row.timestamp) + " of series " + std::to_string(id) +
                  " is not after the previous timestamp " + format_double(rows.back().timestamp));
    rows.push_back(std::move(row));
  }
  if (series.empty()) throw DataError(path.string() + ": no data rows");

  const std::size_t l = series.begin()->second.size();
  for (const auto& [id, rows] : series)
    if (rows.size() != l)
      throw DataError(path.string() + ": series " + std::to_string(id) + " has " +
                      std::to_string(rows.size()) + " rows, expected " + std::to_string(l) +
                      " (series must have equal lengths)");

  TimeSeriesBatch b = TimeSeriesBatch::create(series.size(), l, d);
  bool aligned = true;
  const auto& first = series.begin()->second;
  std::vector<double> per_series_ts;
  std::size_t i = 0;
  for (const auto& [id, rows] : series) {
    b.series_ids[i] = id;
    for (std::size_t j = 0; j < l; ++j) {
      b.value(i, j) = rows[j].value;
      b.set_observed(i, j, rows[j].observed);
      for (std::size_t c = 0; c < d; ++c) b.covariates[(i * l + j) * d + c] = rows[j].covariates[c];
      per_series_ts.push_back(rows[j].timestamp);
      if (rows[j].timestamp != first[j].timestamp) aligned = false;
    }
    ++i;
  }
  b.aligned = aligned;
  if (aligned) {
    for (std::size_t j = 0; j < l; ++j) b.timestamps[j] = first[j].timestamp;
  } else {
    b.timestamps = std::move(per_series_ts);
  }
  b.validate();
  return b;
}

void save_dataset(const std::filesystem::path& path, const TimeSeriesBatch& batch) {
  batch.validate();
  std::ofstream out(path);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out << "timestamp,series_id,value,observed";
  for (std::size_t c = 0; c < batch.num_covariates; ++c) out << ",cov_" << c + 1;
  out << '\n';
  for (std::size_t i = 0; i < batch.num_series; ++i) {
    for (std::size_t j = 0; j < batch.length; ++j) {
      out << format_double(batch.timestamp(i, j)) << ',' << batch.series_ids[i] << ','
          << format_double(batch.value(i, j)) << ',' << (batch.observed(i, j) ? 1 : 0);
      for (std::size_t c = 0; c < batch.num_covariates; ++c) out << ',' << format_double(batch.covariate(i, j, c));
      out << '\n';
    }
  }
  if (!out) throw DataError(path.string() + ": write failed");
}

ForecastSamples load_samples(const std::filesystem::path& path) {
  LineReader reader(path);
  std::string line;
  if (!reader.next(line)) throw DataError(path.string() + ": empty file");
  if (line != "sample_id,series_id,timestamp,value")
    reader.fail("malformed header, expected sample_id,series_id,timestamp,value");

  struct Entry {
    long long sample;
    int series;
    double timestamp;
    double value;
  };
  std::vector<Entry> entries;
  std::set<long long> samples;
  std::set<int> ids;
  std::set<double> times;
  while (reader.next(line)) {
    const auto f = split(line);
    if (f.size() != 4) reader.fail("ragged row: " + std::to_string(f.size()) + " fields, header has 4");
    Entry e{parse_int(reader, f[0], "sample_id"), static_cast<int>(parse_int(reader, f[1], "series_id")),
            parse_double(reader, f[2], "timestamp"), parse_double(reader, f[3], "value")};
    samples.insert(e.sample);
    ids.insert(e.series);
    times.insert(e.timestamp);
    entries.push_back(e);
  }
  if (entries.empty()) throw DataError(path.string() + ": no data rows");

  ForecastSamples fs = ForecastSamples::create(samples.size(), ids.size(), times.size());
  if (entries.size() != fs.values.size())
    throw DataError(path.string() + ": expected one row per (sample, series, timestamp)");
  std::vector<long long> sample_list(samples.begin(), samples.end());
  fs.series_ids.assign(ids.begin(), ids.end());
  fs.timestamps.assign(times.begin(), times.end());
  std::vector<std::uint8_t> seen(fs.values.size(), 0);
  for (const auto& e : entries) {
    const auto s = static_cast<std::size_t>(
        std::lower_bound(sample_list.begin(), sample_list.end(), e.sample) - sample_list.begin());
    const auto i = static_cast<std::size_t>(
        std::lower_bound(fs.series_ids.begin(), fs.series_ids.end(), e.series) - fs.series_ids.begin());
    const auto t = static_cast<std::size_t>(
        std::lower_bound(fs.timestamps.begin(), fs.timestamps.end(), e.timestamp) - fs.timestamps.begin());
    const std::size_t idx = (s * fs.num_series + i) * fs.horizon + t;
    if (seen[idx]) throw DataError(path.string() + ": duplicate row for sample " + std::to_string(e.sample));
    seen[idx] = 1;
    fs.values[idx] = e.value;
  }
  return fs;
}

void save_samples(const std::filesystem::path& path, const ForecastSamples& samples) {
  std::ofstream out(path);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out << "sample_id,series_id,timestamp,value\n";
  for (std::size_t s = 0; s < samples.num_samples; ++s)
    for (std::size_t i = 0; i < samples.num_series; ++i)
      for (std::size_t t = 0; t < samples.horizon; ++t)
        out << s << ',' << samples.series_ids[i] << ',' << format_double(samples.timestamps[t]) << ','
            << format_double(samples.at(s, i, t)) << '\n';
  if (!out) throw DataError(path.string() + ": write failed");
}

}  // namespace tactis::data
