#include "support.hpp"

#include <numeric>

#include "gapa/calibrate.hpp"
#include "gapa/errors.hpp"
#include "gapa/metrics.hpp"

using namespace gapa;

namespace {

// Composite trapezoid of (F(t) - 1{t >= y})^2 on [mu - 12 sigma, mu + 12 sigma],
// split at y so the indicator jump falls on a node.
double crps_by_integration(double mu, double sigma, double y) {
  auto f = [&](double t, bool above) {
    const double cdf = 0.5 * std::erfc(-(t - mu) / (sigma * std::sqrt(2.0)));
    const double d = cdf - (above ? 1.0 : 0.0);
    return d * d;
  };
  auto trapezoid = [&](double a, double b, bool above) {
    if (b <= a) return 0.0;
    const int n = 200000;
    const double h = (b - a) / n;
    double s = 0.5 * (f(a, above) + f(b, above));
    for (int i = 1; i < n; ++i) s += f(a + i * h, above);
    return s * h;
  };
  const double lo = std::min(mu - 12.0 * sigma, y), hi = std::max(mu + 12.0 * sigma, y);
  return trapezoid(lo, y, false) + trapezoid(y, hi, true);
}

double degenerate_cqm(std::size_t grid) {
  double s = 0.0;
  for (std::size_t k = 1; k <= grid; ++k) s += 1.0 - static_cast<double>(k) / static_cast<double>(grid + 1);
  return s / static_cast<double>(grid);
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("normal helpers") {
  CHECK(normal_cdf(0.0) == 0.5);
  CHECK(normal_pdf(0.0) == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)).epsilon(1e-15));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-13));
  for (double p : {0.01, 0.3, 0.5, 0.77, 0.999}) CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-13));
  CHECK_THROWS_AS(normal_quantile(1.0), DomainError);
}

TEST_CASE("crps examples") {
  CHECK(crps_gaussian(0.0, 1.0, 0.0) == doctest::Approx(2.0 * normal_pdf(0.0) - 1.0 / std::sqrt(std::numbers::pi)).epsilon(1e-15));
  CHECK(crps_gaussian(0.0, 1.0, 0.0) == doctest::Approx(0.23370).epsilon(1e-4));
  CHECK(crps_gaussian(1.0, 1e-12, 1.0) <= 1e-12);
  // Far misses: CRPS -> |y - mu| - sigma / sqrt(pi).
  CHECK(std::abs(crps_gaussian(0.0, 1.0, 8.0) - (8.0 - 1.0 / std::sqrt(std::numbers::pi))) <= 1e-3);
  CHECK(std::abs(crps_gaussian(2.0, 0.5, -2.0) - (4.0 - 0.5 / std::sqrt(std::numbers::pi))) <= 1e-3);
  CHECK_THROWS_AS(crps_gaussian(0.0, 0.0, 1.0), DomainError);
  CHECK_THROWS_AS(crps_gaussian(0.0, -1.0, 1.0), DomainError);
}

TEST_CASE("crps matches numerical integration") {
  for (auto [mu, sigma, y] : {std::tuple{0.0, 1.0, 0.0}, std::tuple{0.3, 0.5, 1.1}, std::tuple{-2.0, 2.0, 1.0},
                              std::tuple{1.0, 0.1, 0.95}, std::tuple{0.0, 1.0, 3.0}}) {
    CHECK(std::abs(crps_gaussian(mu, sigma, y) - crps_by_integration(mu, sigma, y)) <= 1e-6);
  }
}

TEST_CASE("cqm degenerate cases") {
  const std::vector<double> m{0.0, 1.0, -2.0}, v{1.0, 0.5, 2.0};
  CHECK(std::abs(cqm(m, v, m) - degenerate_cqm(99)) <= 1e-12);
  CHECK(cqm(m, v, m) == doctest::Approx(0.5).epsilon(1e-12));
  std::vector<double> far(3);
  for (std::size_t i = 0; i < 3; ++i) far[i] = m[i] + 10.0 * std::sqrt(v[i]);
  CHECK(cqm(m, v, far) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(cqm(m, std::vector<double>{1.0, 0.0, 1.0}, m), DomainError);
}

TEST_CASE("cqm on model-consistent targets is small") {
  const std::size_t n = 100000;
  Engine eng(77);
  std::vector<double> m(n), v(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = standard_normal(eng);
    v[i] = 0.1 + uniform01(eng);
    y[i] = m[i] + std::sqrt(v[i]) * standard_normal(eng);
  }
  CHECK(cqm(m, v, y) <= 0.01);
}

TEST_CASE("pairwise summation") {
  std::vector<double> v(1000);
  std::iota(v.begin(), v.end(), 1.0);
  CHECK(pairwise_sum(v) == 500500.0);
  CHECK(pairwise_sum({}) == 0.0);
}

TEST_CASE("metrics are invariant to row order") {
  Engine eng(3);
  std::vector<PredictiveDistribution> preds(257);
  std::vector<double> y(257);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    preds[i].mean = standard_normal(eng);
    preds[i].variance = 0.2 + uniform01(eng);
    y[i] = preds[i].mean + standard_normal(eng);
  }
  const auto a = compute_metrics(preds, y, kVarianceFloor);
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(std::span<std::size_t>(order), eng);
  std::vector<PredictiveDistribution> p2;
  std::vector<double> y2;
  for (auto i : order) {
    p2.push_back(preds[i]);
    y2.push_back(y[i]);
  }
  const auto b = compute_metrics(p2, y2, kVarianceFloor);
  CHECK(a.nll == doctest::Approx(b.nll).epsilon(1e-13));
  CHECK(a.crps == doctest::Approx(b.crps).epsilon(1e-13));
  CHECK(a.cqm == b.cqm);
  CHECK(a.cqm >= 0.0);
  CHECK(a.cqm <= 0.5);
  CHECK_FALSE(a.warning);
}

TEST_CASE("zero-variance predictions are floored and flagged") {
  std::vector<PredictiveDistribution> preds(4);
  std::vector<double> y(4);
  for (std::size_t i = 0; i < 4; ++i) y[i] = preds[i].mean = static_cast<double>(i);
  const auto r = compute_metrics(preds, y, kVarianceFloor);
  CHECK(r.warning);
  CHECK(r.floored_points == 4);
  CHECK(r.nll == doctest::Approx(0.5 * std::log(2.0 * std::numbers::pi * kVarianceFloor)).epsilon(1e-14));
  const auto s = compute_metrics(preds, y, 4.0 * kVarianceFloor);
  CHECK(s.nll == doctest::Approx(0.5 * std::log(2.0 * std::numbers::pi * 4.0 * kVarianceFloor)).epsilon(1e-14));
}

TEST_CASE("report text") {
  MetricsReport r;
  r.nll = -0.5;
  r.crps = 0.125;
  r.cqm = 0.0;
  r.n_points = 3;
  const std::string text = report_to_text(r, "abc");
  CHECK(text.find("\"format\": \"gapa-report\"") != std::string::npos);
  CHECK(text.find("\"nll\": -0.5") != std::string::npos);
  CHECK(text.find("\"config_digest\": \"abc\"") != std::string::npos);
}

}  // TEST_SUITE
