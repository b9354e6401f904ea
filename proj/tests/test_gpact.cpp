#include "support.hpp"

#include <numeric>

#include "gapa/dataio.hpp"
#include "gapa/errors.hpp"
#include "gapa/gpact.hpp"

using namespace gapa;

namespace {

// Gauss-Jordan inverse with partial pivoting; independent of the Cholesky path.
std::vector<std::vector<double>> dense_inverse(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  std::vector<std::vector<double>> inv(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    std::swap(a[c], a[p]);
    std::swap(inv[c], inv[p]);
    const double d = a[c][c];
    for (std::size_t j = 0; j < n; ++j) {
      a[c][j] /= d;
      inv[c][j] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r][c];
      for (std::size_t j = 0; j < n; ++j) {
        a[r][j] -= f * a[c][j];
        inv[r][j] -= f * inv[c][j];
      }
    }
  }
  return inv;
}

struct Brute {
  double posterior;
  double variational;
};

// k** - k^T K^-1 k and k** - k^T K^-1 (K - S) K^-1 k, written out element-wise.
Brute brute_force(const std::vector<double>& z, double ell, double sf2, double noise,
                  const std::vector<std::vector<double>>& s, double x) {
  const std::size_t m = z.size();
  auto kern = [&](double a, double b) { return sf2 * std::exp(-0.5 * (a - b) * (a - b) / (ell * ell)); };
  std::vector<std::vector<double>> k(m, std::vector<double>(m));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) k[i][j] = kern(z[i], z[j]) + (i == j ? noise : 0.0);
  const auto kinv = dense_inverse(k);
  std::vector<double> kx(m), a(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) kx[i] = kern(x, z[i]);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) a[i] += kinv[i][j] * kx[j];
  double q = 0.0, sa = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    q += kx[i] * a[i];
    for (std::size_t j = 0; j < m; ++j) sa += a[i] * s[i][j] * a[j];
  }
  return {sf2 - q, sf2 - q + sa};
}

std::vector<double> sorted_unique_points(std::size_t m, Engine& eng) {
  std::vector<double> z(m);
  double at = -2.0 + uniform01(eng);
  for (double& v : z) {
    v = at;
    at += 0.4 + 1.2 * uniform01(eng);
  }
  return z;
}

}  // namespace

TEST_SUITE("gpact") {

TEST_CASE("rbf kernel examples") {
  CHECK(rbf_kernel({1.0, 3.0, 0.0}, 0.4, 0.4) == 3.0);
  CHECK(rbf_kernel({1.0, 2.0, 0.0}, 0.0, 1.0) == doctest::Approx(2.0 * std::exp(-0.5)).epsilon(1e-15));
  CHECK(rbf_kernel({1.0, 2.0, 0.0}, 0.0, 1.0) == doctest::Approx(1.21306).epsilon(1e-5));
  CHECK(rbf_kernel({0.5, 1.0, 0.0}, 0.0, 50.0) < 1e-300);
}

TEST_CASE("inducing selection examples") {
  CHECK(select_inducing(std::vector<double>{3, 1, 5, 2, 4}, 2) == std::vector<double>{1, 5});
  std::vector<double> eleven(11);
  std::iota(eleven.begin(), eleven.end(), 0.0);
  CHECK(select_inducing(eleven, 4) == std::vector<double>{0, 6, 10});
  CHECK(select_inducing(std::vector<double>(9, 2.5), 5) == std::vector<double>{2.5});
  CHECK_THROWS_AS(select_inducing(eleven, 1), ConfigError);
}

TEST_CASE("inducing selection is sorted, unique and drawn from the data") {
  Engine eng(2);
  std::vector<double> v(300);
  for (double& x : v) x = standard_normal(eng);
  const auto z = select_inducing(v, 16);
  CHECK(z.size() <= 16);
  CHECK(std::is_sorted(z.begin(), z.end()));
  CHECK(std::adjacent_find(z.begin(), z.end()) == z.end());
  for (double x : z) CHECK(std::find(v.begin(), v.end(), x) != v.end());
  CHECK(z.front() == *std::min_element(v.begin(), v.end()));
  CHECK(z.back() == *std::max_element(v.begin(), v.end()));
}

TEST_CASE("empirical kernel heuristics") {
  const auto a = fit_empirical_kernel(std::vector<double>{0, 2}, std::vector<double>(5, 0.3));
  CHECK(a.lengthscale == 2.0);
  CHECK(a.outputscale == 1.0);
  const auto b = fit_empirical_kernel(std::vector<double>{0, 1, 2}, std::vector<double>{0.0});
  CHECK(b.lengthscale == doctest::Approx(1.0).epsilon(1e-15));
  // Population variance of {-2, 2} is 4.
  const auto c = fit_empirical_kernel(std::vector<double>{0, 1}, std::vector<double>{-2, 2});
  CHECK(c.outputscale == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(c.noise == kDefaultNoise);
  CHECK(quantile({4, 1, 2, 3}, 0.25) == doctest::Approx(1.75).epsilon(1e-15));
}

TEST_CASE("posterior mean is the activation") {
  const NeuronGP relu({-1, 0, 1}, {1.0, 1.0, 1e-6}, Activation::kRelu);
  CHECK(relu.posterior_mean(-2.0) == 0.0);
  const NeuronGP th({-1, 0, 1}, {1.0, 1.0, 1e-6}, Activation::kTanh);
  CHECK(th.posterior_mean(0.0) == 0.0);
  Engine eng(9);
  for (int i = 0; i < 1000; ++i) {
    const double x = 5.0 * standard_normal(eng);
    CHECK(th.posterior_mean(x) - std::tanh(x) == 0.0);
  }
}

TEST_CASE("posterior variance examples") {
  const NeuronGP one({0.0}, {1.0, 1.0, 0.0}, Activation::kTanh);
  CHECK(one.posterior_var(1.0) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-14));
  CHECK(one.posterior_var(1.0) == doctest::Approx(0.63212).epsilon(1e-5));
  CHECK(one.posterior_var(0.0) <= 1e-9);

  const NeuronGP g({-1.0, 0.5, 2.0}, {0.8, 2.5, 0.0}, Activation::kTanh);
  for (double z : g.inducing()) CHECK(g.posterior_var(z) <= 1e-9 * 2.5);
  CHECK(std::abs(g.posterior_var(200.0) - 2.5) <= 1e-6);
}

TEST_CASE("variational variance examples") {
  NeuronGP one({0.0}, {1.0, 1.0, 0.0}, Activation::kTanh, Matrix::from_rows({{0.5}}));
  CHECK(one.variational_var(1.0) ==
        doctest::Approx(1.0 - std::exp(-1.0) + 0.25 * std::exp(-1.0)).epsilon(1e-14));
  CHECK(one.variational_var(1.0) == doctest::Approx(0.72410).epsilon(1e-5));

  NeuronGP prior({-1.0, 0.0, 1.5}, {0.9, 1.7, 0.0}, Activation::kTanh);
  prior.set_variational_factor(prior.gram_factor().lower);
  for (double x : {-3.0, -0.5, 0.2, 1.5, 4.0}) {
    CHECK(prior.variational_var(x) == doctest::Approx(1.7).epsilon(1e-8));
  }
  NeuronGP zero({-1.0, 0.0, 1.5}, {0.9, 1.7, 0.0}, Activation::kTanh, Matrix(3, 3));
  for (double x : {-3.0, -0.5, 0.2, 1.5, 4.0}) {
    CHECK(zero.variational_var(x) == doctest::Approx(zero.posterior_var(x)).epsilon(1e-12));
  }
  const NeuronGP none({0.0}, {1.0, 1.0, 0.0}, Activation::kTanh);
  CHECK_THROWS_AS(none.variational_var(0.0), ConfigError);
  CHECK_THROWS_AS(NeuronGP({0.0, 1.0}, {1.0, 1.0, 0.0}, Activation::kTanh, Matrix::from_rows({{1, 1}, {0, 1}})),
                  ShapeError);
}

TEST_CASE("posterior and variational variances match a dense-inverse oracle") {
  Engine eng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + static_cast<std::size_t>(trial % 5);
    const auto z = sorted_unique_points(m, eng);
    const double ell = 0.5 + 2.0 * uniform01(eng);
    const double sf2 = 0.5 + 3.0 * uniform01(eng);
    const double noise = 1e-3 * uniform01(eng);
    Matrix ls(m, m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j <= i; ++j) ls(i, j) = 0.5 * standard_normal(eng);
    const Matrix s = matmul(ls, transpose(ls));
    std::vector<std::vector<double>> sv(m, std::vector<double>(m));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) sv[i][j] = s(i, j);

    const NeuronGP gp(z, {ell, sf2, noise}, Activation::kTanh, ls);
    for (int k = 0; k < 5; ++k) {
      const double x = -4.0 + 8.0 * uniform01(eng);
      const Brute want = brute_force(z, ell, sf2, noise, sv, x);
      CHECK(std::abs(gp.posterior_var(x) - want.posterior) <= 1e-9 * sf2);
      CHECK(std::abs(gp.variational_var(x) - want.variational) <= 1e-9 * (sf2 + want.variational));
    }
  }
}

TEST_CASE("negative variance beyond round-off is rejected") {
  CHECK(clamp_variance(-1e-12, 1.0, "t") == 0.0);
  CHECK_THROWS_AS(clamp_variance(-1e-6, 1.0, "t"), NumericalError);
  CHECK(clamp_variance(0.3, 1.0, "t") == 0.3);
}

TEST_CASE("fit_gapa_layer on the toy network") {
  const Dataset raw = make_toy_gap(256, 3);
  const Dataset data = fit_standardizer(raw).apply(raw);
  const BackboneNetwork net = gapa::test::make_network({1, 16, 8, 1}, Activation::kTanh, 4);
  GapaFitConfig cfg;
  cfg.inducing = 12;
  const GapaLayerState a = fit_gapa_layer(net, data, cfg);
  CHECK(a.layer_index == 1);
  REQUIRE(a.neurons.size() == 16);
  CHECK(a == fit_gapa_layer(net, data, cfg));
  for (const auto& gp : a.neurons) {
    CHECK(gp.activation() == Activation::kTanh);
    CHECK(gp.num_inducing() <= 12);
    CHECK(gp.kernel().noise == kDefaultNoise);
    for (double z : gp.inducing()) CHECK(gp.posterior_var(z) <= 10.0 * gp.kernel().noise);
  }

  GapaFitConfig small = cfg;
  small.subsample = 40;
  CHECK_NOTHROW(fit_gapa_layer(net, data, small));
  small.subsample = 100000;
  CHECK(fit_gapa_layer(net, data, small) == a);
  small.inducing = 1;
  CHECK_THROWS_AS(fit_gapa_layer(net, data, small), ConfigError);
}

}  // TEST_SUITE
