#pragma once

// Layer-wise moment propagation from the GP layer to the network output.
// Linear layers map the covariance by congruence (W S W^T); activations use
// the first-order (delta) rule g'(mu)^2 around the mean.

#include <cstdint>
#include <span>
#include <vector>

#include "gapa/backbone.hpp"
#include "gapa/linalg.hpp"
#include "gapa/model.hpp"

namespace gapa {

struct GaussianState {
  std::vector<double> mean;
  CovarianceMode mode = CovarianceMode::kFull;
  Matrix cov;                 // full mode
  std::vector<double> var;    // diag mode

  std::size_t dim() const { return mean.size(); }
  /// Diagonal of the covariance in either mode.
  std::vector<double> variances() const;

  static GaussianState independent(std::vector<double> mean, std::span<const double> variances,
                                   CovarianceMode mode);
};

GaussianState linear_push(const Matrix& w, std::span<const double> b, const GaussianState& s);
GaussianState delta_push(Activation g, const GaussianState& s);

struct PredictiveDistribution {
  double mean = 0.0;
  double variance = 0.0;
  double standardized_mean = 0.0;
  double standardized_variance = 0.0;
  /// Propagated variance before any calibration, standardized units.
  double raw_variance = 0.0;
};

struct PropagationOptions {
  /// Multiplies every first-layer variance before propagation.
  double variance_scale = 1.0;
  /// Skip the model's calibration and report the raw propagated variance.
  bool apply_calibration = true;
};

/// First-layer variances at input x (network units), scaled.
std::vector<double> first_layer_variances(const GapaModel& model, std::span<const double> x,
                                          double scale = 1.0);

/// Predictive distribution at x, given in network (standardized) input
/// units. The mean reproduces the backbone forward pass exactly.
PredictiveDistribution gapa_forward(const GapaModel& model, std::span<const double> x,
                                    const PropagationOptions& options = {});

/// Same as gapa_forward but x is in raw feature units (the model's
/// standardizer is applied first when present).
PredictiveDistribution predict_raw(const GapaModel& model, std::span<const double> raw_x,
                                   const PropagationOptions& options = {});

/// Sensitivity of the output variance to each first-layer variance.
/// Both push rules are linear in the covariance, so
/// output_variance = sum_d coefficients[d] * v_d exactly; the coefficients
/// are the reverse-mode adjoint of the push chain.
struct VarianceSensitivity {
  std::vector<double> preactivation;  // first-layer X
  double mean = 0.0;                  // network output
  std::vector<double> coefficients;
};

VarianceSensitivity variance_sensitivity(const BackboneNetwork& net, std::span<const double> x,
                                         CovarianceMode mode);

struct MonteCarloEstimate {
  double variance_estimate = 0.0;
  double standard_error = 0.0;
  double mean_estimate = 0.0;
};

/// Samples first-layer activations from N(a(X), diag(v)), pushes each
/// sample through the remaining layers exactly and returns the sample
/// variance of the output with its jackknife standard error. Sample i uses
/// its own stream derived from (seed, i).
MonteCarloEstimate mc_oracle(const GapaModel& model, std::span<const double> x,
                             std::size_t n_samples, std::uint64_t seed, double variance_scale = 1.0);

}  // namespace gapa
