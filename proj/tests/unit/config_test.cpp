#include <gtest/gtest.h>

#include "tactis/config.hpp"
#include "tactis/error.hpp"

using namespace tactis;

TEST(Config, UnknownKeyListsEveryValidKey) {
  Config c;
  try {
    c.set("encoder.width", "3");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const auto& k : config_keys()) EXPECT_NE(msg.find(k.name), std::string::npos) << k.name;
  }
}

TEST(Config, SetAndGetRoundTrip) {
  Config c;
  c.set("encoder.variant", "standard");
  c.set("train.lr", "0.005");
  c.set("backtest.retrain_times", "10, 20,30");
  c.apply_override("copula.bins=7");
  EXPECT_EQ(c.encoder.variant, EncoderVariant::standard);
  EXPECT_EQ(c.train.lr, 0.005);
  EXPECT_EQ(c.backtest.retrain_times, (std::vector<double>{10, 20, 30}));
  EXPECT_EQ(c.copula.bins, 7u);
  EXPECT_EQ(c.get("backtest.retrain_times"), "10,20,30");
}

TEST(Config, TextRoundTrip) {
  Config c;
  c.set("window.pattern", "gap");
  c.set("train.seed", "18446744073709551615");
  c.set("encoder.dropout", "0.1");
  const Config d = parse_config(c.to_text());
  EXPECT_EQ(d.to_text(), c.to_text());
}

TEST(Config, ParsesCommentsAndRejectsMalformedLines) {
  const Config c = parse_config("# toy\n\ntrain.bag_size = 2  # both series\nflow.layers=3\n");
  EXPECT_EQ(c.train.bag_size, 2u);
  EXPECT_EQ(c.flow.layers, 3u);
  EXPECT_THROW(parse_config("train.bag_size 2\n"), ConfigError);
  EXPECT_THROW(parse_config("train.bag_size = two\n"), ConfigError);
  EXPECT_THROW(parse_config("train.bag_size = -1\n"), ConfigError);
  EXPECT_THROW(parse_config("encoder.variant = hybrid\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/toy.cfg"), ConfigError);
}

TEST(Config, ValidateCatchesInconsistentValues) {
  Config c;
  EXPECT_NO_THROW(c.validate());
  c.encoder.embed_dim = 15;
  EXPECT_THROW(c.validate(), ConfigError);
  c = Config{};
  c.encoder.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = Config{};
  c.train.patience = c.train.max_epochs + 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = Config{};
  c.backtest.retrain_times = {5, 5};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, DefaultsFollowBenchmarkSettings) {
  const Config c;
  EXPECT_EQ(c.train.bag_size, 20u);
  EXPECT_EQ(c.flow.layers, 2u);
  EXPECT_EQ(c.flow.hidden_dim, 16u);
  EXPECT_EQ(c.copula.bins, 20u);
  EXPECT_EQ(c.train.lr, 1e-3);
  EXPECT_EQ(c.train.grad_clip, 1e3);
  EXPECT_EQ(c.train.weight_decay, 1e-5);
  EXPECT_EQ(c.encoder.dropout, 0.0);
}
