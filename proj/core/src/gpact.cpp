#include "gapa/gpact.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gapa/errors.hpp"
#include "gapa/parallel.hpp"
#include "gapa/random.hpp"

namespace gapa {

double rbf_kernel(const RbfParams& params, double x, double x_prime) {
  const double r = (x - x_prime) / params.lengthscale;
  return params.outputscale * std::exp(-0.5 * r * r);
}

std::vector<double> select_inducing(std::span<const double> values, std::size_t count) {
  if (count < 2) throw ConfigError("select_inducing: need at least 2 inducing points");
  if (values.empty()) throw ConfigError("select_inducing: no values");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double nd = static_cast<double>(n);

  std::vector<double> picked;
  picked.reserve(count);
  picked.push_back(sorted.front());
  for (std::size_t m = 1; m + 1 < count; ++m) {
    const double level = static_cast<double>(m + 1) / static_cast<double>(count - 1);
    // |i/N - level| is unimodal in i; scan from the nearest candidate.
    std::size_t best = 1;
    double best_gap = std::abs(1.0 / nd - level);
    for (std::size_t i = 2; i <= n; ++i) {
      const double gap = std::abs(static_cast<double>(i) / nd - level);
      if (gap < best_gap) {
        best_gap = gap;
        best = i;
      } else if (gap > best_gap) {
        break;
      }
    }
    picked.push_back(sorted[best - 1]);
  }
  picked.push_back(sorted.back());
  picked.erase(std::unique(picked.begin(), picked.end()), picked.end());
  return picked;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ConfigError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

RbfParams fit_empirical_kernel(std::span<const double> inducing,
                               std::span<const double> train_activations, double noise) {
  RbfParams params;
  params.noise = noise;

  std::vector<double> distances;
  for (std::size_t i = 0; i < inducing.size(); ++i)
    for (std::size_t j = i + 1; j < inducing.size(); ++j)
      distances.push_back(std::abs(inducing[i] - inducing[j]));
  params.lengthscale = 1.0;
  if (!distances.empty()) {
    const double l = quantile(std::move(distances), kLengthscaleQuantile);
    if (l > 0.0) params.lengthscale = l;
  }

  double variance = 0.0;
  if (!train_activations.empty()) {
    const double n = static_cast<double>(train_activations.size());
    double mean = 0.0;
    for (double a : train_activations) mean += a;
    mean /= n;
    for (double a : train_activations) variance += (a - mean) * (a - mean);
    variance /= n;
  }
  params.outputscale = std::max(1.0, variance);
  return params;
}

double clamp_variance(double v, double outputscale, const char* where) {
  if (v >= 0.0) return v;
  if (v < -kNegativeVarianceTolerance * std::max(1.0, outputscale)) {
    throw NumericalError(std::string(where) + ": variance " + std::to_string(v) +
                         " is negative beyond round-off");
  }
  return 0.0;
}

NeuronGP::NeuronGP(std::vector<double> inducing, RbfParams kernel, Activation activation,
                   std::optional<Matrix> variational_factor)
    : inducing_(std::move(inducing)), kernel_(kernel), activation_(activation) {
  if (inducing_.empty()) throw ConfigError("NeuronGP: no inducing inputs");
  for (std::size_t i = 1; i < inducing_.size(); ++i) {
    if (!(inducing_[i] > inducing_[i - 1])) {
      throw ConfigError("NeuronGP: inducing inputs must be strictly increasing");
    }
  }
  if (!(kernel_.lengthscale > 0.0) || !(kernel_.outputscale > 0.0) || !(kernel_.noise >= 0.0) ||
      !std::isfinite(kernel_.lengthscale) || !std::isfinite(kernel_.outputscale)) {
    throw ConfigError("NeuronGP: invalid kernel hyperparameters");
  }
  refactor();
  set_variational_factor(std::move(variational_factor));
}

Matrix NeuronGP::gram() const {
  const std::size_t m = inducing_.size();
  Matrix k(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = rbf_kernel(kernel_, inducing_[i], inducing_[j]);
      k(i, j) = v;
      k(j, i) = v;
    }
    k(i, i) += kernel_.noise;
  }
  return k;
}

std::vector<double> NeuronGP::cross_kernel(double x) const {
  std::vector<double> k(inducing_.size());
  for (std::size_t i = 0; i < k.size(); ++i) k[i] = rbf_kernel(kernel_, x, inducing_[i]);
  return k;
}

void NeuronGP::refactor() { gram_ = cholesky(gram()); }

void NeuronGP::set_kernel(const RbfParams& kernel) {
  if (!(kernel.lengthscale > 0.0) || !(kernel.outputscale > 0.0) ||
      !std::isfinite(kernel.lengthscale) || !std::isfinite(kernel.outputscale)) {
    throw NumericalError("NeuronGP: kernel hyperparameters left the valid range");
  }
  kernel_ = kernel;
  refactor();
}

void NeuronGP::set_variational_factor(std::optional<Matrix> factor) {
  if (factor) {
    const std::size_t m = inducing_.size();
    if (factor->rows() != m || factor->cols() != m) {
      throw ShapeError("variational factor must be " + std::to_string(m) + "x" + std::to_string(m));
    }
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 1; j < m; ++j)
        if ((*factor)(i, j) != 0.0) throw ShapeError("variational factor must be lower-triangular");
  }
  variational_ = std::move(factor);
}

double NeuronGP::posterior_var(double x) const {
  std::vector<double> w = cross_kernel(x);
  forward_substitute(gram_.lower, w);
  const double v = kernel_.outputscale - dot(w, w);
  return clamp_variance(v, kernel_.outputscale, "posterior_var");
}

double NeuronGP::variational_var(double x) const {
  if (!variational_) throw ConfigError("variational_var: neuron has no variational factor");
  std::vector<double> w = cross_kernel(x);
  forward_substitute(gram_.lower, w);
  const double reduction = dot(w, w);
  back_substitute_transposed(gram_.lower, w);  // w = K^{-1} k(Z, x)
  const Matrix& ls = *variational_;
  const std::size_t m = inducing_.size();
  double added = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    double b = 0.0;  // (L_S^T a)_j
    for (std::size_t i = j; i < m; ++i) b += ls(i, j) * w[i];
    added += b * b;
  }
  const double base = clamp_variance(kernel_.outputscale - reduction, kernel_.outputscale,
                                     "variational_var");
  return base + added;
}

Matrix first_layer_preactivations(const BackboneNetwork& net, const Matrix& features) {
  if (features.cols() != net.input_dim()) {
    throw ShapeError("first_layer_preactivations: features have " + std::to_string(features.cols()) +
                     " columns, network expects " + std::to_string(net.input_dim()));
  }
  const Matrix& w = net.weight(0);
  const auto& b = net.bias(0);
  Matrix out(features.rows(), w.rows());
  for (std::size_t n = 0; n < features.rows(); ++n) {
    const auto z = affine(w, b, features.row(n));
    std::copy(z.begin(), z.end(), out.row(n).begin());
  }
  return out;
}

GapaLayerState fit_gapa_layer(const BackboneNetwork& net, const Dataset& train,
                              const GapaFitConfig& config) {
  if (config.inducing < 2) throw ConfigError("fit_gapa_layer: inducing count must be >= 2");
  if (config.subsample == 0) throw ConfigError("fit_gapa_layer: subsample must be positive");
  if (train.size() == 0) throw ConfigError("fit_gapa_layer: empty training set");

  std::vector<std::size_t> rows(train.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (config.subsample < rows.size()) {
    Engine eng(config.seed);
    shuffle(std::span<std::size_t>(rows), eng);
    rows.resize(config.subsample);
    std::sort(rows.begin(), rows.end());
  }
  const Matrix x = first_layer_preactivations(net, train.subset(rows).features);
  const std::size_t width = x.cols();
  const Activation act = net.layers()[0].activation;

  std::vector<std::optional<NeuronGP>> fitted(width);
  parallel_for(width, [&](std::size_t d) {
    std::vector<double> column(x.rows());
    std::vector<double> activations(x.rows());
    for (std::size_t n = 0; n < x.rows(); ++n) {
      column[n] = x(n, d);
      activations[n] = activate(act, column[n]);
    }
    auto z = select_inducing(column, config.inducing);
    const RbfParams params = fit_empirical_kernel(z, activations, config.noise);
    fitted[d].emplace(std::move(z), params, act);
  });

  GapaLayerState state;
  state.neurons.reserve(width);
  for (auto& f : fitted) state.neurons.push_back(std::move(*f));
  return state;
}

}  // namespace gapa
