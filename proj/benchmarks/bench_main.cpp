#include <benchmark/benchmark.h>

#include "gapa/backbone.hpp"
#include "gapa/calibrate.hpp"
#include "gapa/dataio.hpp"
#include "gapa/gpact.hpp"
#include "gapa/linalg.hpp"
#include "gapa/propagate.hpp"
#include "gapa/random.hpp"

namespace {

using namespace gapa;

Matrix spd(std::size_t n) {
  Engine eng(n);
  Matrix a(n, n);
  for (double& v : a.values()) v = standard_normal(eng);
  Matrix s = matmul(a, transpose(a));
  for (std::size_t i = 0; i < n; ++i) s(i, i) += static_cast<double>(n);
  return s;
}

struct Fixture {
  Dataset data;
  GapaModel model;

  explicit Fixture(std::size_t width) {
    const Dataset raw = make_toy_gap(512, 0);
    data = fit_standardizer(raw).apply(raw);
    const auto specs = parse_layer_specs(std::to_string(width) + ":tanh," + std::to_string(width) +
                                             ":tanh,1:identity", 1);
    model.network = initialize_network(specs, 1);
    model.layer = fit_gapa_layer(model.network, data, GapaFitConfig{});
  }
};

void BM_Cholesky(benchmark::State& state) {
  const Matrix a = spd(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(cholesky(a));
}
BENCHMARK(BM_Cholesky)->Arg(8)->Arg(32)->Arg(128);

void BM_PosteriorVar(benchmark::State& state) {
  std::vector<double> z;
  for (int i = 0; i < state.range(0); ++i) z.push_back(0.25 * i);
  const NeuronGP gp(z, {1.0, 1.0, 1e-6}, Activation::kTanh);
  double x = 0.1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(gp.posterior_var(x));
    x += 1e-3;
  }
}
BENCHMARK(BM_PosteriorVar)->Arg(8)->Arg(32);

void BM_GapaForward(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  f.model.mode = state.range(1) == 0 ? CovarianceMode::kFull : CovarianceMode::kDiag;
  const std::vector<double> x{0.3};
  for (auto _ : state) benchmark::DoNotOptimize(gapa_forward(f.model, x));
}
BENCHMARK(BM_GapaForward)->ArgNames({"width", "diag"})->Args({32, 0})->Args({32, 1})->Args({128, 0})->Args({128, 1});

void BM_VariationalGradient(benchmark::State& state) {
  Fixture f(32);
  const VariationalObjective obj(f.model, f.data, CovarianceMode::kFull);
  const VariationalParams p = initial_variational_params(f.model.layer);
  std::vector<std::size_t> rows(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  std::vector<double> grad;
  for (auto _ : state) benchmark::DoNotOptimize(obj.evaluate(p, rows, &grad));
}
BENCHMARK(BM_VariationalGradient)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
