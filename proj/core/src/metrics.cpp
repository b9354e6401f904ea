#include "gapa/metrics.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "gapa/calibrate.hpp"
#include "gapa/errors.hpp"
#include "gapa/parallel.hpp"
#include "gapa/serialize.hpp"

namespace gapa {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p must lie in (0, 1)");
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double crps_gaussian(double mean, double sigma, double y) {
  if (!(sigma > 0.0)) throw DomainError("crps_gaussian: sigma must be positive");
  const double z = (y - mean) / sigma;
  return sigma * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) -
                  1.0 / std::sqrt(std::numbers::pi));
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double cqm(std::span<const double> means, std::span<const double> variances,
           std::span<const double> targets, std::size_t grid) {
  if (targets.empty()) throw DomainError("cqm: no points");
  if (means.size() != targets.size() || variances.size() != targets.size()) {
    throw DomainError("cqm: length mismatch");
  }
  if (grid == 0) throw ConfigError("cqm: grid must be positive");
  // |z_i| <= Phi^{-1}((1 + alpha)/2) is equivalent to y_i in the interval.
  std::vector<double> abs_z(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!(variances[i] > 0.0)) throw DomainError("cqm: variances must be positive");
    abs_z[i] = std::abs(targets[i] - means[i]) / std::sqrt(variances[i]);
  }
  std::sort(abs_z.begin(), abs_z.end());
  const double n = static_cast<double>(targets.size());
  std::vector<double> errors(grid);
  for (std::size_t k = 1; k <= grid; ++k) {
    const double alpha = static_cast<double>(k) / static_cast<double>(grid + 1);
    const double half_width = normal_quantile(0.5 * (1.0 + alpha));
    const auto inside = std::upper_bound(abs_z.begin(), abs_z.end(), half_width) - abs_z.begin();
    errors[k - 1] = std::abs(static_cast<double>(inside) / n - alpha);
  }
  return pairwise_sum(errors) / static_cast<double>(grid);
}

double cqm(std::span<const PredictiveDistribution> preds, std::span<const double> targets,
           std::size_t grid) {
  std::vector<double> m(preds.size()), v(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    m[i] = preds[i].mean;
    v[i] = preds[i].variance;
  }
  return cqm(m, v, targets, grid);
}

MetricsReport compute_metrics(std::span<const PredictiveDistribution> preds,
                              std::span<const double> targets, double variance_floor,
                              std::size_t grid) {
  MetricsReport report;
  report.n_points = targets.size();
  std::vector<double> m(preds.size()), v(preds.size()), crps(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    m[i] = preds[i].mean;
    v[i] = preds[i].variance;
    if (!(v[i] > variance_floor)) {
      v[i] = variance_floor;
      ++report.floored_points;
    }
    crps[i] = crps_gaussian(m[i], std::sqrt(v[i]), targets[i]);
  }
  report.nll = gaussian_nll(m, v, targets, variance_floor).mean;
  report.crps = pairwise_sum(crps) / static_cast<double>(targets.size());
  report.cqm = cqm(m, v, targets, grid);
  report.warning = report.floored_points > 0;
  return report;
}

MetricsReport evaluate(const GapaModel& model, const Dataset& test, std::size_t grid) {
  if (test.size() == 0) throw ConfigError("evaluate: empty test set");
  std::vector<PredictiveDistribution> preds(test.size());
  parallel_for(test.size(), [&](std::size_t i) { preds[i] = predict_raw(model, test.features.row(i)); });
  const double floor =
      model.standardizer ? model.standardizer->invert_target_variance(kVarianceFloor) : kVarianceFloor;
  return compute_metrics(preds, test.targets, floor, grid);
}

std::string report_to_text(const MetricsReport& report, const std::string& config_digest) {
  std::ostringstream out;
  out << "{\n  \"format\": \"gapa-report\",\n  \"version\": " << kFormatVersion << ",\n"
      << "  \"nll\": " << format_real(report.nll) << ",\n"
      << "  \"crps\": " << format_real(report.crps) << ",\n"
      << "  \"cqm\": " << format_real(report.cqm) << ",\n"
      << "  \"n_points\": " << report.n_points << ",\n"
      << "  \"floored_points\": " << report.floored_points << ",\n"
      << "  \"warning\": " << (report.warning ? "true" : "false") << ",\n"
      << "  \"config_digest\": " << quote(config_digest) << "\n}\n";
  return out.str();
}

}  // namespace gapa
