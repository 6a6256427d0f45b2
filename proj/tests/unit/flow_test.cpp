#include <gtest/gtest.h>

#include <cmath>

#include "tactis/autodiff/gradcheck.hpp"
#include "tactis/error.hpp"
#include "tactis/model/marginal_flow.hpp"

using namespace tactis;
using namespace tactis::model;

namespace {

// One layer, one unit, a = 1, b = 0: the flow is the logistic sigmoid.
FlowParams single_sigmoid() {
  const double raw[] = {std::log(std::expm1(1.0)), 0.0, 0.0};
  return FlowParams::from_raw(raw, 1, 1);
}

FlowParams random_params(Rng& rng, std::size_t layers, std::size_t hidden, double scale = 1.0) {
  std::vector<double> raw(3 * layers * hidden);
  for (auto& r : raw) r = scale * rng.normal();
  return FlowParams::from_raw(raw, layers, hidden);
}

}  // namespace

TEST(FlowParams, ZeroRawOutputs) {
  const std::vector<double> raw(3 * 2 * 4, 0.0);
  const auto p = FlowParams::from_raw(raw, 2, 4);
  for (double a : p.a) EXPECT_NEAR(a, 0.6931471805599453, 1e-15);
  for (double lw : p.log_w) EXPECT_NEAR(std::exp(lw), 0.25, 1e-15);
}

TEST(FlowParams, ConstraintsHoldForRandomRawValues) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = random_params(rng, 3, 5, 10.0);
    for (double a : p.a) EXPECT_GT(a, 0.0);
    for (std::size_t k = 0; k < 3; ++k) {
      double s = 0;
      for (std::size_t j = 0; j < 5; ++j) s += std::exp(p.log_w[k * 5 + j]);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Flow, SingleSigmoidReducesToLogistic) {
  const auto p = single_sigmoid();
  EXPECT_NEAR(flow_cdf(0.0, p), 0.5, 1e-15);
  EXPECT_NEAR(flow_pdf(0.0, p), 0.25, 1e-15);
  EXPECT_LT(flow_cdf(-50.0, p), 1e-9);
  EXPECT_GT(flow_cdf(50.0, p), 1.0 - 1e-9);
  EXPECT_NEAR(flow_inverse_cdf(0.5, p), 0.0, 1e-6);
  for (double x : {-3.0, -0.4, 1.7}) EXPECT_NEAR(flow_cdf(x, p), 1.0 / (1.0 + std::exp(-x)), 1e-15);
}

TEST(Flow, SingleSigmoidDensityIntegratesToOne) {
  const auto p = single_sigmoid();
  const int n = 10000;
  const double h = 100.0 / (n - 1);
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += (i == 0 || i == n - 1 ? 0.5 : 1.0) * flow_pdf(-50.0 + i * h, p);
  EXPECT_NEAR(total * h, 1.0, 1e-6);
}

TEST(Flow, StrictlyMonotone) {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto p = random_params(rng, 1 + rng.index(3), 1 + rng.index(8));
    const double x1 = rng.normal(0.0, 3.0);
    const double x2 = x1 + 1e-3 + rng.uniform();
    EXPECT_LT(flow_cdf(x1, p), flow_cdf(x2, p));
  }
}

TEST(Flow, PdfMatchesDerivativeOfCdf) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = random_params(rng, 1 + rng.index(3), 1 + rng.index(8));
    const double x = rng.normal(0.0, 1.5);
    const double h = 1e-5;
    const double fd = (flow_cdf(x + h, p) - flow_cdf(x - h, p)) / (2 * h);
    const double pdf = flow_pdf(x, p);
    EXPECT_GE(pdf, 0.0);
    if (pdf > 1e-4) {
      EXPECT_LT(std::abs(fd - pdf) / pdf, 1e-6) << "x=" << x;
    }
  }
}

TEST(Flow, InverseRoundTrip) {
  Rng rng(4);
  for (int trial = 0; trial < 10000; ++trial) {
    const auto p = random_params(rng, 1 + rng.index(3), 1 + rng.index(8));
    const double u = rng.uniform_open();
    const double x = flow_inverse_cdf(u, p);
    ASSERT_TRUE(std::isfinite(x));
    EXPECT_LE(std::abs(flow_cdf(x, p) - u), 1e-6);
  }
}

TEST(Flow, InverseHandlesExtremeLevelsAndRejectsBounds) {
  const auto p = single_sigmoid();
  const double x = flow_inverse_cdf(1.0 - 1e-7, p);
  EXPECT_TRUE(std::isfinite(x));
  EXPECT_NEAR(flow_cdf(x, p), 1.0 - 1e-7, 1e-6);
  EXPECT_THROW(flow_inverse_cdf(0.0, p), NumericalError);
  EXPECT_THROW(flow_inverse_cdf(1.0, p), NumericalError);
  EXPECT_THROW(flow_inverse_cdf(1.5, p), NumericalError);
}

TEST(Flow, TensorPathMatchesScalarPath) {
  Rng rng(5);
  const std::size_t n = 20, layers = 3, hidden = 4;
  std::vector<double> raw(n * 3 * layers * hidden), x(n);
  for (auto& r : raw) r = rng.normal();
  for (auto& v : x) v = rng.normal(0.0, 4.0);
  const auto out = flow_forward(ad::Tensor::constant({n, 3 * layers * hidden}, raw), ad::Tensor::constant({n}, x),
                                layers, hidden);
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = FlowParams::from_raw(std::span<const double>(raw).subspan(i * 3 * layers * hidden, 3 * layers * hidden),
                                        layers, hidden);
    EXPECT_NEAR(out.u[i], flow_cdf(x[i], p), 1e-13);
    EXPECT_NEAR(out.log_pdf[i], flow_log_pdf(x[i], p), 1e-11);
  }
}

TEST(Flow, LogPdfFiniteUnderDefaultInitialization) {
  Rng rng(6);
  model::ParameterSet ps;
  const auto flow = MarginalFlow::create(ps, FlowConfig{}, 8, 32, 1, rng);
  std::vector<double> z(41 * 8);
  for (auto& v : z) v = rng.normal();
  std::vector<double> x(41);
  for (std::size_t i = 0; i < 41; ++i) x[i] = -20.0 + i;
  const auto out = flow.forward(ad::Tensor::constant({41, 8}, z), ad::Tensor::constant({41}, x));
  for (std::size_t i = 0; i < 41; ++i) {
    EXPECT_TRUE(std::isfinite(out.log_pdf[i])) << x[i];
    EXPECT_GE(out.u[i], 0.0);
    EXPECT_LE(out.u[i], 1.0);
  }
}

TEST(Flow, IdenticalEncodingsGiveIdenticalParameters) {
  Rng rng(7);
  model::ParameterSet ps;
  const auto flow = MarginalFlow::create(ps, FlowConfig{}, 4, 16, 1, rng);
  const std::vector<double> row{0.3, -1.0, 2.0, 0.5};
  std::vector<double> z(row);
  z.insert(z.end(), row.begin(), row.end());
  const auto raw = flow.raw_params(ad::Tensor::constant({2, 4}, z));
  const std::size_t r = flow.raw_size();
  for (std::size_t k = 0; k < r; ++k) EXPECT_EQ(raw[k], raw[r + k]);
}

TEST(Flow, LogPdfGradientMatchesFiniteDifferences) {
  Rng rng(8);
  model::ParameterSet ps;
  const auto flow = MarginalFlow::create(ps, FlowConfig{2, 3}, 3, 5, 1, rng);
  std::vector<double> z(6 * 3), x(6), w(6);
  for (auto& v : z) v = rng.normal();
  for (auto& v : x) v = rng.normal(0.0, 2.0);
  for (auto& v : w) v = rng.normal();
  const auto zt = ad::Tensor::constant({6, 3}, z), xt = ad::Tensor::constant({6}, x), wt = ad::Tensor::constant({6}, w);
  const double err = ad::finite_difference_check(
      [&] { return ad::sum(flow.forward(zt, xt).log_pdf * wt); }, ps.tensors(), 1e-6);
  EXPECT_LT(err, 1e-4);
}
