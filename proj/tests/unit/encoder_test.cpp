#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "tactis/autodiff/gradcheck.hpp"
#include "tactis/error.hpp"
#include "tactis/model/encoder.hpp"

using namespace tactis;
using namespace tactis::model;
using data::TimeSeriesBatch;

namespace {

EncoderConfig small_config(EncoderVariant variant) {
  EncoderConfig c;
  c.variant = variant;
  c.embed_dim = 8;
  c.heads = 2;
  c.layer_pairs = 1;
  c.ff_dim = 12;
  c.series_embed_dim = 3;
  return c;
}

TimeSeriesBatch random_window(std::size_t n, std::size_t l, std::size_t d, Rng& rng) {
  auto w = TimeSeriesBatch::create(n, l, d);
  for (auto& v : w.values) v = rng.normal();
  for (auto& c : w.covariates) c = rng.normal();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = l - 2; j < l; ++j) w.set_observed(i, j, false);
  return w;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

TEST(PositionalEncoding, PositionZeroAlternates) {
  const auto pe = positional_encoding(3, 6);
  for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(pe[c], c % 2 == 0 ? 0.0 : 1.0);
}

TEST(PositionalEncoding, BoundedAndRequiresEvenWidth) {
  const auto pe = positional_encoding(500, 16);
  for (double v : pe.data()) {
    EXPECT_LE(v, 1.0);
    EXPECT_GE(v, -1.0);
  }
  EXPECT_THROW(positional_encoding(4, 7), ConfigError);
}

TEST(PositionalEncoding, EachFrequencyIsPeriodic) {
  const std::size_t d = 8;
  for (std::size_t i = 0; i < d / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / d);
    const double period = 2.0 * std::numbers::pi / freq;
    for (double p : {0.0, 3.0, 17.5}) {
      const double pos[] = {p, p + period};
      const auto pe = sinusoidal_encoding(pos, d);
      EXPECT_NEAR(pe[2 * i], pe[d + 2 * i], 1e-9);
      EXPECT_NEAR(pe[2 * i + 1], pe[d + 2 * i + 1], 1e-9);
    }
  }
}

TEST(Encoder, OutputShape) {
  Rng rng(1);
  ParameterSet ps;
  const auto enc = Encoder::create(ps, small_config(EncoderVariant::temporal), 2, 3, rng);
  const auto w = random_window(3, 7, 2, rng);
  const auto z = enc.encode({&w}, {iota(3)});
  EXPECT_EQ(z.shape(), (ad::Shape{1, 3, 7, 8}));
  for (double v : z.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Encoder, MaskedValuesAreInvisible) {
  Rng rng(2);
  for (auto variant : {EncoderVariant::standard, EncoderVariant::temporal}) {
    ParameterSet ps;
    const auto enc = Encoder::create(ps, small_config(variant), 0, 2, rng);
    auto a = random_window(2, 6, 0, rng);
    auto b = a;
    b.value(1, 5) += 123.0;  // missing token
    const auto ea = enc.embed({&a}, {iota(2)}), eb = enc.embed({&b}, {iota(2)});
    EXPECT_EQ(std::vector<double>(ea.data().begin(), ea.data().end()),
              std::vector<double>(eb.data().begin(), eb.data().end()));
    const auto za = enc.encode({&a}, {iota(2)}), zb = enc.encode({&b}, {iota(2)});
    EXPECT_EQ(std::vector<double>(za.data().begin(), za.data().end()),
              std::vector<double>(zb.data().begin(), zb.data().end()));

    auto c = a;
    c.value(0, 0) += 1.0;  // observed token
    const auto zc = enc.encode({&c}, {iota(2)});
    double diff = 0;
    for (std::size_t k = 0; k < za.numel(); ++k) diff += std::abs(za[k] - zc[k]);
    EXPECT_GT(diff, 0.0);
  }
}

TEST(Encoder, MaskBitIsAnInput) {
  Rng rng(3);
  ParameterSet ps;
  const auto enc = Encoder::create(ps, small_config(EncoderVariant::temporal), 0, 1, rng);
  auto a = TimeSeriesBatch::create(1, 3);
  auto b = a;
  b.set_observed(0, 1, false);
  const auto ea = enc.embed({&a}, {{0}}), eb = enc.embed({&b}, {{0}});
  double diff = 0;
  for (std::size_t c = 0; c < 8; ++c) diff += std::abs(ea[8 + c] - eb[8 + c]);
  EXPECT_GT(diff, 0.0);
}

TEST(Encoder, SeriesPermutationEquivariance) {
  Rng rng(4);
  for (auto variant : {EncoderVariant::standard, EncoderVariant::temporal}) {
    ParameterSet ps;
    const auto enc = Encoder::create(ps, small_config(variant), 1, 3, rng);
    const auto w = random_window(3, 5, 1, rng);
    const std::vector<std::size_t> order{2, 0, 1};
    const auto p = data::select_series(w, order);
    const auto z = enc.encode({&w}, {iota(3)});
    const auto zp = enc.encode({&p}, {order});
    const std::size_t per_series = 5 * 8;
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t c = 0; c < per_series; ++c)
        EXPECT_NEAR(zp[k * per_series + c], z[order[k] * per_series + c], 1e-12);
  }
}

TEST(Encoder, TemporalVariantRejectsUnalignedSeries) {
  Rng rng(5);
  ParameterSet ps;
  const auto enc = Encoder::create(ps, small_config(EncoderVariant::temporal), 0, 2, rng);
  auto w = random_window(2, 4, 0, rng);
  w.aligned = false;
  w.timestamps = {0, 1, 2, 3, 0.5, 1.5, 2.5, 3.5};
  EXPECT_THROW(enc.encode({&w}, {iota(2)}), DataError);

  ParameterSet ps2;
  const auto standard = Encoder::create(ps2, small_config(EncoderVariant::standard), 0, 2, rng);
  EXPECT_NO_THROW(standard.encode({&w}, {iota(2)}));
}

TEST(Encoder, BatchedWindowsMatchIndividualEncodings) {
  Rng rng(6);
  ParameterSet ps;
  const auto enc = Encoder::create(ps, small_config(EncoderVariant::temporal), 0, 4, rng);
  const auto a = random_window(2, 5, 0, rng), b = random_window(2, 5, 0, rng);
  const auto z = enc.encode({&a, &b}, {{0, 1}, {3, 2}});
  const auto zb = enc.encode({&b}, {{3, 2}});
  for (std::size_t k = 0; k < zb.numel(); ++k) EXPECT_NEAR(z[zb.numel() + k], zb[k], 1e-12);
}

TEST(Encoder, AttentionCostScaling) {
  // Temporal: cost proportional to n^2 l + n l^2. Standard: proportional to (n l)^2.
  Rng rng(7);
  auto cost = [&](EncoderVariant v, std::size_t n, std::size_t l) {
    ParameterSet ps;
    const auto enc = Encoder::create(ps, small_config(v), 0, n, rng);
    const auto w = random_window(n, l, 0, rng);
    ad::NoGradScope ng;
    reset_attention_flops();
    enc.encode({&w}, {iota(n)});
    return static_cast<double>(attention_flops());
  };
  const std::vector<std::pair<std::size_t, std::size_t>> sizes{{2, 8}, {4, 8}, {8, 16}, {16, 4}};
  double c_max = 0, c_min = 1e300;
  for (auto [n, l] : sizes) {
    const double r = cost(EncoderVariant::temporal, n, l) / static_cast<double>(n * n * l + n * l * l);
    c_max = std::max(c_max, r);
    c_min = std::min(c_min, r);
    EXPECT_NEAR(cost(EncoderVariant::standard, n, l) / static_cast<double>(n * l * n * l), 2 * 8 * 2, 1e-9);
  }
  EXPECT_LE(c_max, 2 * 8 + 1e-9);  // 2 (score + mix) * width * one layer per axis
  EXPECT_NEAR(c_max, c_min, 1e-9);
  EXPECT_LT(cost(EncoderVariant::temporal, 16, 16), 0.25 * cost(EncoderVariant::standard, 16, 16));
}

TEST(Encoder, TemporalMemoryGrowsSubquadratically) {
  Rng rng(8);
  auto peak = [&](EncoderVariant v, std::size_t n) {
    const std::size_t l = 32;
    ParameterSet ps;
    const auto enc = Encoder::create(ps, small_config(v), 0, n, rng);
    const auto w = random_window(n, l, 0, rng);
    const auto base = ad::memory_stats().current_bytes;
    ad::reset_peak_memory();
    {
      ad::Tape tape;
      ad::TapeScope scope(tape);
      const auto z = ad::sum(enc.encode({&w}, {iota(n)}));
      tape.backward(z);
    }
    return static_cast<double>(ad::memory_stats().peak_bytes - base);
  };
  const double t4 = peak(EncoderVariant::temporal, 4), t8 = peak(EncoderVariant::temporal, 8),
               t16 = peak(EncoderVariant::temporal, 16);
  EXPECT_LT(t8 / t4, 4.0);
  EXPECT_LT(t16 / t8, 4.0);
  EXPECT_LT(t16 / t4, 16.0 * 0.5);
  const double s4 = peak(EncoderVariant::standard, 4), s16 = peak(EncoderVariant::standard, 16);
  EXPECT_GT(s16 / s4, t16 / t4);
}

TEST(Encoder, GradientMatchesFiniteDifferences) {
  Rng rng(9);
  for (auto variant : {EncoderVariant::standard, EncoderVariant::temporal}) {
    ParameterSet ps;
    auto cfg = small_config(variant);
    cfg.embed_dim = 4;
    cfg.ff_dim = 6;
    cfg.series_embed_dim = 2;
    const auto enc = Encoder::create(ps, cfg, 1, 2, rng);
    const auto w = random_window(2, 6, 1, rng);
    std::vector<double> proj(2 * 6 * 4);
    for (auto& p : proj) p = rng.normal();
    const auto pt = ad::Tensor::constant({1, 2, 6, 4}, proj);
    const double err = ad::finite_difference_check(
        [&] { return ad::sum(enc.encode({&w}, {iota(2)}) * pt); }, ps.tensors(), 1e-6);
    EXPECT_LT(err, 1e-4);
  }
}
