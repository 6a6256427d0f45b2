#include "tactis/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "tactis/data/csv_io.hpp"
#include "tactis/error.hpp"

namespace tactis {

namespace {

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("invalid value '" + value + "' for " + key + " (expected " + expected + ")");
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size()) bad_value(key, v, "non-negative integer");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size()) bad_value(key, v, "non-negative integer");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size()) bad_value(key, v, "number");
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>)
      out += data::format_double(xs[i]);
    else
      out += std::to_string(xs[i]);
  }
  return out;
}

struct Entry {
  ConfigKey key;
  std::function<void(Config&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

#define SIZE_KEY(name, field, desc)                                                   \
  Entry {                                                                             \
    {name, desc}, [](Config& c, const std::string& v) { c.field = to_size(name, v); }, \
        [](const Config& c) { return std::to_string(c.field); }                       \
  }
#define DOUBLE_KEY(name, field, desc)                                                   \
  Entry {                                                                               \
    {name, desc}, [](Config& c, const std::string& v) { c.field = to_double(name, v); }, \
        [](const Config& c) { return data::format_double(c.field); }                    \
  }

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = {
      Entry{{"encoder.variant", "standard | temporal"},
            [](Config& c, const std::string& v) {
              if (v == "standard")
                c.encoder.variant = EncoderVariant::standard;
              else if (v == "temporal")
                c.encoder.variant = EncoderVariant::temporal;
              else
                bad_value("encoder.variant", v, "standard or temporal");
            },
            [](const Config& c) {
              return std::string(c.encoder.variant == EncoderVariant::standard ? "standard" : "temporal");
            }},
      SIZE_KEY("encoder.embed_dim", encoder.embed_dim, "token embedding size (even, divisible by heads)"),
      SIZE_KEY("encoder.heads", encoder.heads, "attention heads per encoder layer"),
      SIZE_KEY("encoder.layer_pairs", encoder.layer_pairs, "number of encoder layer pairs"),
      SIZE_KEY("encoder.ff_dim", encoder.ff_dim, "hidden size of encoder feed-forward sublayers"),
      SIZE_KEY("encoder.series_embed_dim", encoder.series_embed_dim, "learned per-series embedding size"),
      DOUBLE_KEY("encoder.dropout", encoder.dropout, "dropout rate during training, in [0,1)"),
      SIZE_KEY("flow.layers", flow.layers, "marginal flow layers"),
      SIZE_KEY("flow.hidden_dim", flow.hidden_dim, "sigmoids per marginal flow layer"),
      SIZE_KEY("copula.bins", copula.bins, "bins of each conditional copula distribution"),
      SIZE_KEY("copula.layers", copula.layers, "attention layers in the copula conditioner"),
      SIZE_KEY("copula.heads", copula.heads, "attention heads in the copula conditioner"),
      SIZE_KEY("copula.attention_dim", copula.attention_dim, "key/value/query size (divisible by heads)"),
      SIZE_KEY("copula.mlp_layers", copula.mlp_layers, "hidden layers of the decoder networks"),
      SIZE_KEY("copula.mlp_dim", copula.mlp_dim, "hidden width of the decoder networks"),
      DOUBLE_KEY("train.lr", train.lr, "RMSprop learning rate"),
      DOUBLE_KEY("train.weight_decay", train.weight_decay, "L2 weight decay"),
      DOUBLE_KEY("train.grad_clip", train.grad_clip, "global gradient-norm clip"),
      SIZE_KEY("train.bag_size", train.bag_size, "series per training window"),
      SIZE_KEY("train.batch_size", train.batch_size, "windows per gradient step"),
      SIZE_KEY("train.samples_per_epoch", train.samples_per_epoch, "windows per epoch before bagging compensation"),
      SIZE_KEY("train.max_epochs", train.max_epochs, "epoch cap"),
      SIZE_KEY("train.patience", train.patience, "epochs without validation improvement before stopping"),
      SIZE_KEY("train.ratio", train.ratio, "history length in multiples of the prediction length"),
      Entry{{"train.seed", "seed of initialization, windows and permutations"},
            [](Config& c, const std::string& v) { c.train.seed = to_u64("train.seed", v); },
            [](const Config& c) { return std::to_string(c.train.seed); }},
      SIZE_KEY("window.prediction_length", window.prediction_length, "steps to forecast, or gap length"),
      Entry{{"window.pattern", "forecast | gap"},
            [](Config& c, const std::string& v) {
              if (v == "forecast")
                c.window.pattern = WindowPattern::forecast;
              else if (v == "gap")
                c.window.pattern = WindowPattern::gap;
              else
                bad_value("window.pattern", v, "forecast or gap");
            },
            [](const Config& c) {
              return std::string(c.window.pattern == WindowPattern::forecast ? "forecast" : "gap");
            }},
      SIZE_KEY("window.ratio_after", window.ratio_after, "gap pattern: observed steps after the gap, in gap lengths"),
      Entry{{"backtest.retrain_times", "comma-separated increasing timestamps"},
            [](Config& c, const std::string& v) {
              c.backtest.retrain_times.clear();
              for (const auto& s : split_list(v)) c.backtest.retrain_times.push_back(to_double("backtest.retrain_times", s));
            },
            [](const Config& c) { return join(c.backtest.retrain_times); }},
      Entry{{"backtest.forecast_offsets", "comma-separated steps after each retrain time"},
            [](Config& c, const std::string& v) {
              c.backtest.forecast_offsets.clear();
              for (const auto& s : split_list(v)) c.backtest.forecast_offsets.push_back(to_size("backtest.forecast_offsets", s));
            },
            [](const Config& c) { return join(c.backtest.forecast_offsets); }},
      SIZE_KEY("backtest.prediction_length", backtest.prediction_length, "forecast length (0 = window.prediction_length)"),
      SIZE_KEY("backtest.trials", backtest.trials, "independent trainings per retrain time"),
      SIZE_KEY("backtest.epochs", backtest.epochs, "fixed epoch budget per backtest model"),
  };
  return entries;
}

#undef SIZE_KEY
#undef DOUBLE_KEY

const Entry& find(const std::string& key) {
  for (const auto& e : registry())
    if (e.key.name == key) return e;
  std::string msg = "unknown config key '" + key + "'; valid keys:";
  for (const auto& e : registry()) msg += " " + e.key.name;
  throw ConfigError(msg);
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& e : registry()) out.push_back(e.key);
    return out;
  }();
  return keys;
}

void Config::set(const std::string& key, const std::string& value) { find(key).set(*this, trim(value)); }

std::string Config::get(const std::string& key) const { return find(key).get(*this); }

void Config::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form key=value");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void Config::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(encoder.embed_dim > 0 && encoder.embed_dim % 2 == 0, "encoder.embed_dim must be positive and even");
  require(encoder.heads > 0 && encoder.embed_dim % encoder.heads == 0, "encoder.embed_dim must be divisible by encoder.heads");
  require(encoder.layer_pairs > 0, "encoder.layer_pairs must be positive");
  require(encoder.ff_dim > 0, "encoder.ff_dim must be positive");
  require(encoder.dropout >= 0.0 && encoder.dropout < 1.0, "encoder.dropout must lie in [0,1)");
  require(flow.layers > 0 && flow.hidden_dim > 0, "flow.layers and flow.hidden_dim must be positive");
  require(copula.bins >= 1, "copula.bins must be positive");
  require(copula.layers > 0, "copula.layers must be positive");
  require(copula.heads > 0 && copula.attention_dim % copula.heads == 0 && copula.attention_dim > 0,
          "copula.attention_dim must be a positive multiple of copula.heads");
  require(copula.mlp_dim > 0, "copula.mlp_dim must be positive");
  require(train.lr > 0.0, "train.lr must be positive");
  require(train.weight_decay >= 0.0, "train.weight_decay must be non-negative");
  require(train.grad_clip > 0.0, "train.grad_clip must be positive");
  require(train.bag_size > 0, "train.bag_size must be positive");
  require(train.batch_size > 0, "train.batch_size must be positive");
  require(train.samples_per_epoch >= train.batch_size, "train.samples_per_epoch must be at least train.batch_size");
  require(train.max_epochs > 0, "train.max_epochs must be positive");
  require(train.patience <= train.max_epochs, "train.patience must not exceed train.max_epochs");
  require(train.ratio > 0, "train.ratio must be positive");
  require(window.prediction_length > 0, "window.prediction_length must be positive");
  for (std::size_t i = 1; i < backtest.retrain_times.size(); ++i)
    require(backtest.retrain_times[i] > backtest.retrain_times[i - 1], "backtest.retrain_times must be strictly increasing");
  require(!backtest.forecast_offsets.empty(), "backtest.forecast_offsets must not be empty");
  require(backtest.trials > 0, "backtest.trials must be positive");
  require(backtest.epochs > 0, "backtest.epochs must be positive");
}

std::string Config::to_text() const {
  std::string out;
  for (const auto& e : registry()) out += e.key.name + " = " + e.get(*this) + "\n";
  return out;
}

Config parse_config(const std::string& text, const std::string& source) {
  Config c;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(number) + ": expected 'key = value'");
    try {
      c.set(trim(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

}  // namespace tactis
