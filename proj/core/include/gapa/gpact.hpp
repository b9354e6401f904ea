#pragma once

// Per-neuron one-dimensional Gaussian processes on first-layer
// pre-activations. The prior mean of each GP is the neuron's own activation
// function, so conditioning on the training activations leaves the mean
// untouched and only the covariance carries information.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gapa/backbone.hpp"
#include "gapa/dataio.hpp"
#include "gapa/linalg.hpp"

namespace gapa {

struct RbfParams {
  double lengthscale = 1.0;
  double outputscale = 1.0;  // sigma_f^2
  double noise = 1e-6;       // sigma_n^2

  bool operator==(const RbfParams&) const = default;
};

/// sigma_f^2 exp(-(x - x')^2 / (2 l^2)).
double rbf_kernel(const RbfParams& params, double x, double x_prime);

/// Empirical-CDF inducing input selection: always the minimum and maximum,
/// plus the order statistics whose CDF i/N is nearest to (m+1)/(M-1) for
/// m = 1..M-2 (ties to the smaller index). Duplicates are removed, so the
/// result is strictly increasing and may hold fewer than M values.
std::vector<double> select_inducing(std::span<const double> values, std::size_t count);

/// Linear-interpolation quantile of an unsorted sample, q in [0, 1].
double quantile(std::vector<double> values, double q);

inline constexpr double kDefaultNoise = 1e-6;
inline constexpr double kLengthscaleQuantile = 0.25;

/// Lengthscale = 0.25-quantile of pairwise |z_i - z_j| (1 when degenerate),
/// outputscale = max(1, population variance of the activations).
RbfParams fit_empirical_kernel(std::span<const double> inducing,
                               std::span<const double> train_activations,
                               double noise = kDefaultNoise);

/// Variances below this are round-off and clamp to zero; anything more
/// negative (relative to max(1, sigma_f^2)) is an internal error.
inline constexpr double kNegativeVarianceTolerance = 1e-10;

class NeuronGP {
 public:
  NeuronGP(std::vector<double> inducing, RbfParams kernel, Activation activation,
           std::optional<Matrix> variational_factor = std::nullopt);

  const std::vector<double>& inducing() const { return inducing_; }
  const RbfParams& kernel() const { return kernel_; }
  Activation activation() const { return activation_; }
  const CholeskyFactor& gram_factor() const { return gram_; }
  const std::optional<Matrix>& variational_factor() const { return variational_; }
  std::size_t num_inducing() const { return inducing_.size(); }

  /// K(Z, Z) + sigma_n^2 I without jitter.
  Matrix gram() const;
  std::vector<double> cross_kernel(double x) const;

  /// Replaces the kernel hyperparameters and refactors the Gram matrix.
  void set_kernel(const RbfParams& kernel);
  /// Lower-triangular L_S with S = L_S L_S^T; nullopt removes it.
  void set_variational_factor(std::optional<Matrix> factor);

  /// Equals the activation exactly: the training residuals of a GP whose
  /// prior mean is the activation are identically zero.
  double posterior_mean(double x) const { return activate(activation_, x); }

  /// k(x,x) - k(x,Z) [K + sigma_n^2 I]^{-1} k(Z,x), clamped at zero.
  double posterior_var(double x) const;

  /// Sparse-variational predictive variance
  /// k(x,x) - k(x,Z) K^{-1} k(Z,x) + k(x,Z) K^{-1} S K^{-1} k(Z,x).
  /// Throws ConfigError when no variational factor is set.
  double variational_var(double x) const;

  bool operator==(const NeuronGP& o) const {
    return inducing_ == o.inducing_ && kernel_ == o.kernel_ && activation_ == o.activation_ &&
           variational_ == o.variational_;
  }

 private:
  void refactor();

  std::vector<double> inducing_;
  RbfParams kernel_;
  Activation activation_;
  CholeskyFactor gram_;
  std::optional<Matrix> variational_;
};

/// Clamps round-off negatives to zero; throws NumericalError on larger
/// violations.
double clamp_variance(double v, double outputscale, const char* where);

/// One GP per neuron of the first layer.
struct GapaLayerState {
  std::size_t layer_index = 1;
  std::vector<NeuronGP> neurons;

  bool operator==(const GapaLayerState&) const = default;
};

struct GapaFitConfig {
  std::size_t inducing = 32;
  std::size_t subsample = 2048;
  double noise = kDefaultNoise;
  std::uint64_t seed = 0;
};

/// First-layer pre-activations of every row, N x D1.
Matrix first_layer_preactivations(const BackboneNetwork& net, const Matrix& features);

/// Fits an independent GP to each first-layer neuron from a seeded
/// subsample of the training inputs (all rows when subsample >= N).
GapaLayerState fit_gapa_layer(const BackboneNetwork& net, const Dataset& train,
                              const GapaFitConfig& config);

}  // namespace gapa
