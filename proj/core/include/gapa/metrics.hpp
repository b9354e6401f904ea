#pragma once

#include <span>
#include <string>

#include "gapa/dataio.hpp"
#include "gapa/model.hpp"
#include "gapa/propagate.hpp"

namespace gapa {

double normal_cdf(double z);
double normal_pdf(double z);
double normal_quantile(double p);

/// Closed-form CRPS of N(mean, sigma^2) at y:
/// sigma [z (2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi)], z = (y - mean) / sigma.
double crps_gaussian(double mean, double sigma, double y);

inline constexpr std::size_t kDefaultCqmGrid = 99;

/// Mean over alpha_k = k/(grid+1) of |coverage(alpha_k) - alpha_k|, where
/// coverage is the fraction of targets inside the centered alpha interval.
double cqm(std::span<const double> means, std::span<const double> variances,
           std::span<const double> targets, std::size_t grid = kDefaultCqmGrid);
double cqm(std::span<const PredictiveDistribution> preds, std::span<const double> targets,
           std::size_t grid = kDefaultCqmGrid);

/// Order-independent-friendly pairwise summation.
double pairwise_sum(std::span<const double> values);

struct MetricsReport {
  double nll = 0.0;
  double crps = 0.0;
  double cqm = 0.0;
  std::size_t n_points = 0;
  /// Points whose variance sat on the floor.
  std::size_t floored_points = 0;
  bool warning = false;
};

/// Metrics of predictive distributions in original target units.
MetricsReport compute_metrics(std::span<const PredictiveDistribution> preds,
                              std::span<const double> targets, double variance_floor,
                              std::size_t grid = kDefaultCqmGrid);

/// Runs the model over a raw (unstandardized) test set and reports metrics
/// in original target units.
MetricsReport evaluate(const GapaModel& model, const Dataset& test,
                       std::size_t grid = kDefaultCqmGrid);

std::string report_to_text(const MetricsReport& report, const std::string& config_digest);

}  // namespace gapa
