#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "tactis/autodiff/gradcheck.hpp"
#include "tactis/autodiff/ops.hpp"
#include "tactis/data/synthetic.hpp"
#include "tactis/error.hpp"
#include "tactis/training/train.hpp"

using namespace tactis;
using namespace tactis::training;
using data::TimeSeriesBatch;

namespace {

Config tiny_config() {
  Config c;
  c.encoder.embed_dim = 4;
  c.encoder.heads = 2;
  c.encoder.ff_dim = 6;
  c.encoder.series_embed_dim = 2;
  c.flow.layers = 2;
  c.flow.hidden_dim = 3;
  c.copula.bins = 5;
  c.copula.heads = 2;
  c.copula.attention_dim = 4;
  c.copula.mlp_dim = 5;
  c.window.prediction_length = 2;
  c.train.ratio = 3;  // 2x8 windows
  c.train.bag_size = 2;
  c.train.batch_size = 4;
  c.train.samples_per_epoch = 8;
  c.train.max_epochs = 3;
  c.train.patience = 0;
  return c;
}

TimeSeriesBatch toy_window(std::uint64_t seed) {
  Rng rng(seed);
  const auto data = data::generate_correlated_gaussian(2, 8, 0.8, rng);
  return data::extract_window(data, 0, window_spec(tiny_config()));
}

double nll_value(const TactisModel& m, const TimeSeriesBatch& w, const std::vector<std::size_t>& perm) {
  ad::NoGradScope ng;
  return nll_loss(m, {w}, std::vector<std::vector<std::size_t>>{perm}).item();
}

}  // namespace

TEST(Training, WindowSpecFromConfig) {
  auto c = tiny_config();
  auto spec = window_spec(c);
  EXPECT_EQ(spec.history_length, 6u);
  EXPECT_EQ(spec.prediction_length, 2u);
  c.window.pattern = WindowPattern::gap;
  c.window.ratio_after = 1;
  spec = window_spec(c);
  EXPECT_EQ(spec.window_length(), 10u);
  const auto mask = spec.mask(1);
  EXPECT_EQ(std::count(mask.begin(), mask.end(), 0), 2);
  EXPECT_EQ(mask[6], 0);
  EXPECT_EQ(mask[7], 0);
}

TEST(Training, LossFiniteAndPermutationDependent) {
  const auto c = tiny_config();
  const TactisModel m(c, 0, {0, 1}, 3);
  const auto w = toy_window(1);
  ASSERT_EQ(w.num_missing(), 4u);
  const double a = nll_value(m, w, {0, 1, 2, 3});
  const double b = nll_value(m, w, {3, 1, 0, 2});
  EXPECT_TRUE(std::isfinite(a));
  EXPECT_TRUE(std::isfinite(b));
  EXPECT_NE(a, b);
}

TEST(Training, LossRequiresMissingTokens) {
  const TactisModel m(tiny_config(), 0, {0, 1}, 3);
  auto w = toy_window(1);
  std::fill(w.mask.begin(), w.mask.end(), 1);
  Rng rng(0);
  EXPECT_THROW(nll_loss(m, {w}, rng), DataError);
}

TEST(Training, LossGradientMatchesFiniteDifferences) {
  auto c = tiny_config();
  const TactisModel m(c, 0, {0, 1}, 5);
  const auto w1 = toy_window(2), w2 = toy_window(3);
  const std::vector<std::vector<std::size_t>> perms{{2, 0, 3, 1}, {1, 3, 0, 2}};
  const double err =
      ad::finite_difference_check([&] { return nll_loss(m, {w1, w2}, perms); }, m.parameters().tensors(), 1e-6);
  EXPECT_LT(err, 1e-4);
}

TEST(Training, SingleMissingTokenIsMarginalOnly) {
  // copula contributes nothing: log g is the flow's log pdf at the standardized value
  const TactisModel m(tiny_config(), 0, {0, 1}, 7);
  auto w = toy_window(4);
  std::fill(w.mask.begin(), w.mask.end(), 1);
  w.set_observed(1, 7, false);
  auto [s, state] = data::standardize(w);
  ad::NoGradScope ng;
  const double ll = m.log_likelihood({&s}, {{0}}).item();
  const auto enc = m.encoder().encode({&s}, {m.embedding_ids(s)});
  const auto z = ad::reshape(ad::slice(ad::reshape(enc, {16, enc.size(3)}), 0, 15, 16), {1, enc.size(3)});
  const auto fwd = m.flow().forward(z, ad::Tensor::constant({1}, {s.value(1, 7)}));
  EXPECT_NEAR(ll, fwd.log_pdf.item(), 1e-12);
}

TEST(Training, GeometricMeanOverAllPermutations) {
  const TactisModel m(tiny_config(), 0, {0, 1}, 9);
  auto w = toy_window(5);
  std::fill(w.mask.begin(), w.mask.end(), 1);
  w.set_observed(0, 7, false);
  w.set_observed(1, 6, false);
  w.set_observed(1, 7, false);
  std::vector<std::size_t> perm{0, 1, 2};
  double mean_nll = 0.0, product = 1.0;
  int count = 0;
  do {
    const double nll = nll_value(m, w, perm) * 3.0;  // undo per-token scaling
    mean_nll += nll;
    product *= std::exp(-nll);
    ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  ASSERT_EQ(count, 6);
  mean_nll /= count;
  EXPECT_NEAR(mean_nll, -std::log(std::pow(product, 1.0 / count)), 1e-10);
}

TEST(Training, ClipBoundsGlobalNorm) {
  TactisModel m(tiny_config(), 0, {0, 1}, 11);
  auto& ps = m.parameters();
  Rng rng(1);
  for (double clip : {1e-3, 0.1, 1.0}) {
    ps.zero_grad();
    for (auto t : ps.tensors())
      for (auto& g : t.mutable_grad()) g = 10.0 * rng.normal();
    const double before = clip_grad_norm(ps, clip);
    double sq = 0.0;
    for (auto t : ps.tensors())
      for (double g : t.grad()) sq += g * g;
    EXPECT_GT(before, clip);
    EXPECT_LE(std::sqrt(sq), clip + 1e-9);
  }
  ps.zero_grad();
}

TEST(Training, RmspropFirstStep) {
  model::ParameterSet ps;
  auto p = ps.add("p", {2}, {1.0, -2.0});
  p.mutable_grad()[0] = 0.5;
  p.mutable_grad()[1] = -3.0;
  Rmsprop opt(0.1, 0.0);
  opt.step(ps);
  // first step: g / sqrt(0.01 g^2) = 10 sign(g)
  EXPECT_NEAR(p[0], 1.0 - 0.1 * 10.0, 1e-6);
  EXPECT_NEAR(p[1], -2.0 + 0.1 * 10.0, 1e-6);
}

TEST(Training, IterationsPerEpochCompensatesBagging) {
  TrainConfig t;
  t.samples_per_epoch = 1600;
  t.batch_size = 16;
  t.bag_size = 20;
  EXPECT_EQ(iterations_per_epoch(t, 100), 500u);
  t.bag_size = 1;
  EXPECT_EQ(iterations_per_epoch(t, 2), 200u);
}

TEST(Training, CheckpointRoundtripIsBitIdentical) {
  auto c = tiny_config();
  Rng rng(2);
  const auto data = data::generate_correlated_gaussian(2, 200, 0.8, rng);
  TrainOptions opt;
  opt.fixed_epochs = 1;
  const auto result = train(data, c, opt);
  const auto path = std::filesystem::temp_directory_path() / "tactis_training_test.ckpt";
  model::save_checkpoint(path, result.model, result.info);
  const auto loaded = model::load_checkpoint(path);
  std::filesystem::remove(path);
  const auto w = toy_window(6);
  const std::vector<std::size_t> perm{1, 0, 3, 2};
  EXPECT_EQ(nll_value(result.model, w, perm), nll_value(loaded, w, perm));
}

TEST(Training, SameSeedSameTrajectory) {
  auto c = tiny_config();
  Rng rng(3);
  const auto data = data::generate_correlated_gaussian(2, 300, 0.8, rng);
  const auto a = train(data, c), b = train(data, c);
  ASSERT_EQ(a.step_losses.size(), b.step_losses.size());
  ASSERT_FALSE(a.step_losses.empty());
  for (std::size_t k = 0; k < a.step_losses.size(); ++k) EXPECT_EQ(a.step_losses[k], b.step_losses[k]);
  EXPECT_EQ(a.epochs.back().validation_loss, b.epochs.back().validation_loss);
  c.train.seed = 1;
  const auto d = train(data, c);
  EXPECT_NE(a.step_losses[0], d.step_losses[0]);
}

TEST(Training, ValidationHeldOutAndBestRestored) {
  auto c = tiny_config();
  Rng rng(4);
  const auto data = data::generate_correlated_gaussian(2, 400, 0.8, rng);
  const auto r = train(data, c);
  EXPECT_EQ(r.validation_start, 360u);
  EXPECT_LE(r.max_window_end, 360u);
  EXPECT_EQ(r.iterations_per_epoch, 2u);
  double best = 1e300;
  for (const auto& e : r.epochs) best = std::min(best, e.validation_loss);
  EXPECT_EQ(r.info.validation_loss, best);
  const auto val = validation_windows(data, window_spec(c), 360, 400);
  EXPECT_EQ(evaluate_nll(r.model, val, Rng(c.train.seed).split("validation").seed()), best);
}

TEST(Training, RespectsEndLimit) {
  auto c = tiny_config();
  Rng rng(5);
  const auto data = data::generate_correlated_gaussian(2, 400, 0.8, rng);
  TrainOptions opt;
  opt.end_limit = 50;
  opt.fixed_epochs = 2;
  const auto r = train(data, c, opt);
  EXPECT_LE(r.max_window_end, 50u);
  EXPECT_EQ(r.epochs.size(), 2u);
}

TEST(Training, BagLargerThanSeriesIsConfigError) {
  auto c = tiny_config();
  c.train.bag_size = 3;
  Rng rng(6);
  const auto data = data::generate_correlated_gaussian(2, 100, 0.8, rng);
  EXPECT_THROW(train(data, c), ConfigError);
}

TEST(Training, DivergenceIsNumericalError) {
  auto c = tiny_config();
  Rng rng(7);
  auto data = data::generate_correlated_gaussian(2, 100, 0.8, rng);
  for (auto& v : data.values) v *= 1e300;
  data.values[5] = 1e308;
  TrainOptions opt;
  opt.fixed_epochs = 1;
  EXPECT_THROW(train(data, c, opt), NumericalError);
}

TEST(Training, ForecastShapeAndObservedCopy) {
  const TactisModel m(tiny_config(), 0, {0, 1}, 13);
  const auto w = toy_window(8);
  Rng rng(1);
  const auto f = forecast(m, w, 25, rng);
  EXPECT_EQ(f.num_samples, 25u);
  EXPECT_EQ(f.num_series, 2u);
  EXPECT_EQ(f.horizon, 2u);
  EXPECT_EQ(f.timestamps, (std::vector<double>{w.timestamps[6], w.timestamps[7]}));
  for (double v : f.values) EXPECT_TRUE(std::isfinite(v));
  // interpolation gap with an observed token inside a predicted column
  auto g = w;
  std::fill(g.mask.begin(), g.mask.end(), 1);
  g.set_observed(0, 3, false);
  g.set_observed(1, 4, false);
  const auto h = forecast(m, g, 5, rng);
  EXPECT_EQ(h.horizon, 2u);
  for (std::size_t s = 0; s < 5; ++s) {
    EXPECT_EQ(h.at(s, 1, 0), g.value(1, 3));
    EXPECT_EQ(h.at(s, 0, 1), g.value(0, 4));
  }
}

TEST(Training, UniformityReportRange) {
  const TactisModel m(tiny_config(), 0, {0, 1}, 15);
  const auto w = toy_window(9);
  Rng rng(2);
  const auto wd = copula_uniformity_report(m, w, 200, rng);
  ASSERT_EQ(wd.size(), 4u);
  for (double d : wd) {
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 0.5);
  }
}
