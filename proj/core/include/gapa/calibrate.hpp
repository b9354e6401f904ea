#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gapa/dataio.hpp"
#include "gapa/linalg.hpp"
#include "gapa/model.hpp"
#include "gapa/propagate.hpp"

namespace gapa {

struct NllResult {
  double sum = 0.0;
  double mean = 0.0;
};

/// sum_i 0.5 log(2 pi s_i) + (y_i - m_i)^2 / (2 s_i). Throws DomainError when
/// a variance is below `floor` or the lengths differ.
NllResult gaussian_nll(std::span<const double> means, std::span<const double> variances,
                       std::span<const double> targets, double floor = kVarianceFloor);

enum class Units { kStandardized, kOriginal };

NllResult nll(std::span<const PredictiveDistribution> preds, std::span<const double> targets,
              Units units = Units::kStandardized, double floor = kVarianceFloor);

// ---------------------------------------------------------------------------
// Two-parameter output-variance calibration.

struct FreeFitResult {
  FreeCalibration calibration;
  double objective = 0.0;   // mean NLL at the returned parameters
  std::size_t iterations = 0;
  bool warning = false;     // residuals were all zero
};

/// Mean NLL of residuals r under variances max(theta1 v + theta2, floor).
double free_objective(std::span<const double> raw_variances, std::span<const double> residuals,
                      double theta1, double theta2);

/// Minimizes free_objective over theta1, theta2 >= 0 (softplus
/// parameterization): 20x20 log grid over [1e-4, 1e4]^2 plus the identity
/// calibration as starting candidates, then gradient descent with
/// backtracking until the gradient norm is <= 1e-8 or 5000 steps.
FreeFitResult fit_free_from_residuals(std::span<const double> raw_variances,
                                      std::span<const double> residuals);

/// Runs the uncalibrated model over a held-out split (network units) and
/// fits theta1, theta2 on its residuals.
FreeFitResult fit_free(const GapaModel& model, const Dataset& calibration_split);

// ---------------------------------------------------------------------------
// Variational calibration.

/// Unconstrained parameters of the variational layer. For every neuron:
/// the lower triangle of L_S with its diagonal stored as log L_ii, the log
/// lengthscale and log sigma_f (so sigma_f^2 = exp(2 log sigma_f)).
struct VariationalParams {
  std::vector<Matrix> raw_factors;
  std::vector<double> log_lengthscale;
  std::vector<double> log_outputscale_sqrt;

  std::size_t num_neurons() const { return raw_factors.size(); }
  std::size_t size() const;
  std::vector<double> flatten() const;
  /// Inverse of flatten, using this object's shapes.
  VariationalParams unflatten(std::span<const double> flat) const;
  /// Human-readable name of the block holding flat index k.
  std::string block_name(std::size_t k) const;

  bool operator==(const VariationalParams&) const = default;
};

/// L_S = chol(K_ZZ + sigma_n^2 I), so S = K and the initial predictive
/// variance equals the prior; hyperparameters from the current kernels.
VariationalParams initial_variational_params(const GapaLayerState& layer);
Matrix factor_from_raw(const Matrix& raw);

/// Installs the parameters into the layer's neurons.
void apply_variational_params(GapaLayerState& layer, const VariationalParams& params);

/// Mean Gaussian NLL of the propagated variational predictive variance over
/// a dataset, with its exact gradient. Backbone and inducing inputs are
/// constants; the per-row mean and the variance sensitivities of the push
/// chain are precomputed once.
class VariationalObjective {
 public:
  VariationalObjective(const GapaModel& model, const Dataset& data, CovarianceMode mode);

  std::size_t rows() const { return targets_.size(); }

  /// Mean NLL over `rows` (all rows when empty); fills `gradient` w.r.t.
  /// params.flatten() when non-null.
  double evaluate(const VariationalParams& params, std::span<const std::size_t> rows,
                  std::vector<double>* gradient) const;
  double evaluate_flat(const VariationalParams& shape, std::span<const double> flat,
                       std::span<const std::size_t> rows, std::vector<double>* gradient) const;

 private:
  const GapaLayerState* layer_;
  std::vector<std::vector<double>> preact_;
  std::vector<std::vector<double>> coeffs_;
  std::vector<double> means_;
  std::vector<double> targets_;
};

struct VariationalConfig {
  std::size_t epochs = 100;
  double learning_rate = 1e-2;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

struct TrainLogEntry {
  std::size_t epoch = 0;
  double nll = 0.0;
  double grad_norm = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<TrainLogEntry> entries;

  /// One "epoch=<e> nll=<v> grad_norm=<g> seconds=<s>" line per entry.
  std::string to_text() const;
};

struct VariationalFitResult {
  VariationalParams params;
  TrainLog log;
};

/// Mini-batch Adam on the variational objective. Entry 0 of the log is the
/// full-data NLL at initialization, entry e the full-data NLL after epoch e.
/// On return the model's neurons carry the learned parameters and its
/// calibration is VariationalCalibration.
VariationalFitResult fit_variational(GapaModel& model, const Dataset& train,
                                     const VariationalConfig& config);

// ---------------------------------------------------------------------------

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
};

/// Central differences against `analytic`; relative error uses
/// max(|analytic|, |numeric|, 1e-8) as denominator.
GradCheckResult grad_check(const std::function<double(std::span<const double>)>& loss,
                           std::span<const double> analytic, std::span<const double> params,
                           double h);

}  // namespace gapa
