#include "support.hpp"

#include "gapa/dataio.hpp"
#include "gapa/errors.hpp"
#include "gapa/parallel.hpp"
#include "gapa/propagate.hpp"

using namespace gapa;

namespace {

GapaModel fitted_model(const BackboneNetwork& net, CovarianceMode mode, std::uint64_t seed = 0) {
  const Dataset raw = make_toy_gap(200, seed);
  GapaModel model;
  model.network = net;
  model.mode = mode;
  GapaFitConfig cfg;
  cfg.inducing = 10;
  model.layer = fit_gapa_layer(net, raw, cfg);
  return model;
}

// Same architecture as `net` but every layer after the first is identity.
BackboneNetwork linear_tail(const BackboneNetwork& net) {
  std::vector<LayerSpec> specs = net.layers();
  std::vector<Matrix> w;
  std::vector<std::vector<double>> b;
  for (std::size_t l = 0; l < specs.size(); ++l) {
    if (l > 0) specs[l].activation = Activation::kIdentity;
    w.push_back(net.weight(l));
    b.push_back(net.bias(l));
  }
  return BackboneNetwork(specs, w, b);
}

}  // namespace

TEST_SUITE("propagate") {

TEST_CASE("linear push examples") {
  const auto s = GaussianState::independent({1.0, 2.0}, std::vector<double>{0.5, 3.0}, CovarianceMode::kFull);
  const auto same = linear_push(Matrix::identity(2), std::vector<double>{0, 0}, s);
  CHECK(same.mean == s.mean);
  CHECK(same.cov == s.cov);

  const auto one = GaussianState::independent({1.0}, std::vector<double>{3.0}, CovarianceMode::kFull);
  CHECK(linear_push(Matrix::from_rows({{2}}), std::vector<double>{0}, one).cov(0, 0) == 12.0);

  const auto diag = GaussianState::independent({0, 0}, std::vector<double>{1, 1}, CovarianceMode::kDiag);
  CHECK(linear_push(Matrix::from_rows({{1, 1}}), std::vector<double>{0}, diag).var == std::vector<double>{2.0});
  GaussianState corr;
  corr.mean = {0, 0};
  corr.cov = Matrix::from_rows({{1, 1}, {1, 1}});
  CHECK(linear_push(Matrix::from_rows({{1, 1}}), std::vector<double>{0}, corr).cov(0, 0) == 4.0);

  CHECK_THROWS_AS(linear_push(Matrix(2, 3), std::vector<double>{0, 0}, s), ShapeError);
}

TEST_CASE("delta push examples") {
  const auto relu = delta_push(Activation::kRelu,
                               GaussianState::independent({-1.0}, std::vector<double>{4.0}, CovarianceMode::kDiag));
  CHECK(relu.var[0] == 0.0);
  CHECK(relu.mean[0] == 0.0);
  const auto t0 = delta_push(Activation::kTanh,
                             GaussianState::independent({0.0}, std::vector<double>{1.0}, CovarianceMode::kFull));
  CHECK(t0.cov(0, 0) == 1.0);
  const auto t1 = delta_push(Activation::kTanh,
                             GaussianState::independent({1.0}, std::vector<double>{2.0}, CovarianceMode::kFull));
  const double sech2 = 1.0 - std::tanh(1.0) * std::tanh(1.0);
  CHECK(t1.cov(0, 0) == doctest::Approx(2.0 * sech2 * sech2).epsilon(1e-14));
  CHECK(t1.cov(0, 0) == doctest::Approx(0.35275).epsilon(1e-4));
}

TEST_CASE("zero first-layer variance gives zero output variance") {
  const auto net = gapa::test::make_network({1, 8, 6, 1}, Activation::kTanh, 2);
  for (auto mode : {CovarianceMode::kFull, CovarianceMode::kDiag}) {
    const GapaModel model = fitted_model(net, mode);
    const std::vector<double> x{0.4};
    const auto p = gapa_forward(model, x, {0.0, false});
    CHECK(p.raw_variance == 0.0);
    CHECK(p.mean == predict_scalar(net, x));
  }
}

TEST_CASE("mean path is bit-identical to the backbone") {
  const auto net = gapa::test::make_network({1, 12, 12, 1}, Activation::kTanh, 5);
  const GapaModel model = fitted_model(net, CovarianceMode::kFull);
  Engine eng(1);
  for (int i = 0; i < 500; ++i) {
    const std::vector<double> x{4.0 * standard_normal(eng)};
    CHECK(gapa_forward(model, x).mean == predict_scalar(net, x));
  }
}

TEST_CASE("output variance is linear in first-layer variances") {
  const auto net = gapa::test::make_network({1, 10, 7, 1}, Activation::kTanh, 6);
  for (auto mode : {CovarianceMode::kFull, CovarianceMode::kDiag}) {
    const GapaModel model = fitted_model(net, mode);
    for (double x0 : {-2.5, -0.3, 0.0, 1.7}) {
      const std::vector<double> x{x0};
      const auto sens = variance_sensitivity(net, x, mode);
      const auto v = first_layer_variances(model, x);
      double expect = 0.0;
      for (std::size_t d = 0; d < v.size(); ++d) expect += sens.coefficients[d] * v[d];
      const double got = gapa_forward(model, x, {1.0, false}).raw_variance;
      CHECK(std::abs(got - expect) <= 1e-12 * std::max(1.0, expect));
      CHECK(sens.mean == predict_scalar(net, x));
    }
  }
}

TEST_CASE("full and diag modes coincide for a single hidden neuron") {
  const auto net = gapa::test::make_network({1, 1, 1}, Activation::kTanh, 3);
  const GapaModel full = fitted_model(net, CovarianceMode::kFull);
  GapaModel diag = full;
  diag.mode = CovarianceMode::kDiag;
  const std::vector<double> x{0.9};
  CHECK(gapa_forward(full, x).raw_variance == doctest::Approx(gapa_forward(diag, x).raw_variance).epsilon(1e-14));
}

TEST_CASE("linear tail matches the Monte-Carlo oracle") {
  const auto net = linear_tail(gapa::test::make_network({1, 6, 5, 1}, Activation::kTanh, 9));
  const GapaModel model = fitted_model(net, CovarianceMode::kFull);
  const std::vector<double> x{0.2};
  const double v = gapa_forward(model, x, {1.0, false}).raw_variance;
  const auto mc = mc_oracle(model, x, 100000, 42);
  CHECK(v > 0.0);
  CHECK(std::abs(mc.variance_estimate - v) <= 3.0 * mc.standard_error);
}

TEST_CASE("mc oracle contracts") {
  const auto net = gapa::test::make_network({1, 4, 1}, Activation::kTanh, 1);
  const GapaModel model = fitted_model(net, CovarianceMode::kFull);
  const std::vector<double> x{0.5};
  CHECK(mc_oracle(model, x, 100, 1, 0.0).variance_estimate == 0.0);
  const auto a = mc_oracle(model, x, 2000, 7);
  const auto b = mc_oracle(model, x, 2000, 7);
  CHECK(a.variance_estimate == b.variance_estimate);
  CHECK(a.standard_error == b.standard_error);
  CHECK(a.standard_error > 0.0);
  CHECK_THROWS_AS(mc_oracle(model, x, 1, 7), ConfigError);
}

TEST_CASE("gapa_forward shape checks") {
  const auto net = gapa::test::make_network({1, 4, 1}, Activation::kTanh, 1);
  GapaModel model = fitted_model(net, CovarianceMode::kFull);
  CHECK_THROWS_AS(gapa_forward(model, std::vector<double>{1.0, 2.0}), ShapeError);
  model.layer.neurons.pop_back();
  CHECK_THROWS_AS(gapa_forward(model, std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("calibration and standardizer are applied on the way out") {
  const auto net = gapa::test::make_network({1, 5, 1}, Activation::kTanh, 4);
  GapaModel model = fitted_model(net, CovarianceMode::kFull);
  const std::vector<double> x{1.3};
  const double raw = gapa_forward(model, x).raw_variance;
  CHECK(gapa_forward(model, x).variance == raw);

  model.calibration = FreeCalibration{2.0, 0.5};
  CHECK(gapa_forward(model, x).standardized_variance == doctest::Approx(2.0 * raw + 0.5).epsilon(1e-15));

  Standardizer s;
  s.feature_means = {1.0};
  s.feature_stds = {2.0};
  s.target_mean = 3.0;
  s.target_std = 4.0;
  model.standardizer = s;
  const auto p = predict_raw(model, std::vector<double>{1.0 + 2.0 * 1.3});
  CHECK(p.standardized_mean == doctest::Approx(predict_scalar(net, x)).epsilon(1e-15));
  CHECK(p.mean == doctest::Approx(3.0 + 4.0 * p.standardized_mean).epsilon(1e-15));
  CHECK(p.variance == doctest::Approx(16.0 * p.standardized_variance).epsilon(1e-15));
}

TEST_CASE("parallel_for covers every index once and rethrows") {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) {
                    if (i == 7) throw NumericalError("boom");
                  }),
                  NumericalError);
  CHECK(worker_count() >= 1);
}

}  // TEST_SUITE
