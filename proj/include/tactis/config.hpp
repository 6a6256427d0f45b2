#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tactis {

enum class EncoderVariant { standard, temporal };

struct EncoderConfig {
  EncoderVariant variant = EncoderVariant::temporal;
  std::size_t embed_dim = 16;
  std::size_t heads = 2;
  std::size_t layer_pairs = 1;
  std::size_t ff_dim = 32;
  std::size_t series_embed_dim = 4;
  double dropout = 0.0;
};

struct FlowConfig {
  std::size_t layers = 2;
  std::size_t hidden_dim = 16;
};

struct CopulaConfig {
  std::size_t bins = 20;
  std::size_t layers = 1;
  std::size_t heads = 2;
  std::size_t attention_dim = 16;
  std::size_t mlp_layers = 1;  // hidden layers of every small network in the decoder
  std::size_t mlp_dim = 32;
};

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 1e-5;
  double grad_clip = 1e3;
  std::size_t bag_size = 20;
  std::size_t batch_size = 16;
  std::size_t samples_per_epoch = 1600;
  std::size_t max_epochs = 50;
  std::size_t patience = 10;
  std::size_t ratio = 2;  // history length = ratio * prediction length
  std::uint64_t seed = 0;
};

enum class WindowPattern { forecast, gap };

struct WindowConfig {
  std::size_t prediction_length = 2;
  WindowPattern pattern = WindowPattern::forecast;
  std::size_t ratio_after = 2;  // gap pattern only: observed steps after the gap, in gap lengths
};

struct BacktestConfig {
  std::vector<double> retrain_times;
  std::vector<std::size_t> forecast_offsets{0};
  std::size_t prediction_length = 0;  // 0 = use window.prediction_length
  std::size_t trials = 1;
  std::size_t epochs = 10;
};

struct Config {
  EncoderConfig encoder;
  FlowConfig flow;
  CopulaConfig copula;
  TrainConfig train;
  WindowConfig window;
  BacktestConfig backtest;

  /// Sets one key from its textual value. Unknown keys and malformed values
  /// raise ConfigError; the message for an unknown key lists every valid key.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  /// Parses "key=value".
  void apply_override(const std::string& assignment);
  /// Cross-field checks (divisibility, ranges).
  void validate() const;
  /// One "key = value" line per key, in registry order.
  std::string to_text() const;
};

struct ConfigKey {
  std::string name;
  std::string description;
};

/// Every key accepted anywhere in the system.
const std::vector<ConfigKey>& config_keys();

/// Reads a "key = value" file. '#' starts a comment; blank lines are skipped.
Config load_config(const std::filesystem::path& path);
Config parse_config(const std::string& text, const std::string& source = "<string>");

}  // namespace tactis
