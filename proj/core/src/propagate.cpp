#include "gapa/propagate.hpp"

#include <algorithm>
#include <cmath>

#include "gapa/errors.hpp"
#include "gapa/parallel.hpp"
#include "gapa/random.hpp"

namespace gapa {

std::vector<double> GaussianState::variances() const {
  if (mode == CovarianceMode::kDiag) return var;
  std::vector<double> out(cov.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = cov(i, i);
  return out;
}

GaussianState GaussianState::independent(std::vector<double> mean,
                                         std::span<const double> variances, CovarianceMode mode) {
  if (variances.size() != mean.size()) throw ShapeError("GaussianState: mean/variance length mismatch");
  GaussianState s;
  s.mean = std::move(mean);
  s.mode = mode;
  if (mode == CovarianceMode::kFull) {
    s.cov = Matrix::diagonal(variances);
  } else {
    s.var.assign(variances.begin(), variances.end());
  }
  return s;
}

GaussianState linear_push(const Matrix& w, std::span<const double> b, const GaussianState& s) {
  if (w.cols() != s.dim() || b.size() != w.rows()) {
    throw ShapeError("linear_push: " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                     " weights against state of dimension " + std::to_string(s.dim()));
  }
  GaussianState out;
  out.mode = s.mode;
  out.mean = affine(w, b, s.mean);
  if (s.mode == CovarianceMode::kFull) {
    out.cov = congruence(w, s.cov);
  } else {
    out.var.assign(w.rows(), 0.0);
    for (std::size_t i = 0; i < w.rows(); ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < w.cols(); ++j) acc += w(i, j) * w(i, j) * s.var[j];
      out.var[i] = acc;
    }
  }
  return out;
}

GaussianState delta_push(Activation g, const GaussianState& s) {
  GaussianState out;
  out.mode = s.mode;
  out.mean = s.mean;
  activate_inplace(g, out.mean);
  const std::size_t n = s.dim();
  std::vector<double> slope(n);
  for (std::size_t i = 0; i < n; ++i) slope[i] = activation_derivative(g, s.mean[i]);
  if (s.mode == CovarianceMode::kFull) {
    out.cov = s.cov;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out.cov(i, j) *= slope[i] * slope[j];
  } else {
    out.var = s.var;
    for (std::size_t i = 0; i < n; ++i) out.var[i] *= slope[i] * slope[i];
  }
  return out;
}

std::vector<double> first_layer_variances(const GapaModel& model, std::span<const double> x,
                                          double scale) {
  const auto pre = affine(model.network.weight(0), model.network.bias(0), x);
  std::vector<double> v(pre.size());
  for (std::size_t d = 0; d < pre.size(); ++d) v[d] = scale * first_layer_variance(model, d, pre[d]);
  return v;
}

PredictiveDistribution gapa_forward(const GapaModel& model, std::span<const double> x,
                                    const PropagationOptions& options) {
  const BackboneNetwork& net = model.network;
  if (x.size() != net.input_dim()) {
    throw ShapeError("gapa_forward: input of length " + std::to_string(x.size()) +
                     ", network expects " + std::to_string(net.input_dim()));
  }
  if (model.layer.neurons.size() != net.layers().front().out_dim) {
    throw ShapeError("gapa_forward: GP layer width does not match the network");
  }

  std::vector<double> pre = affine(net.weight(0), net.bias(0), x);
  std::vector<double> variances(pre.size());
  for (std::size_t d = 0; d < pre.size(); ++d) {
    variances[d] = options.variance_scale * first_layer_variance(model, d, pre[d]);
  }
  activate_inplace(net.layers()[0].activation, pre);  // posterior mean == activation
  GaussianState state = GaussianState::independent(std::move(pre), variances, model.mode);

  for (std::size_t l = 1; l < net.num_layers(); ++l) {
    state = linear_push(net.weight(l), net.bias(l), state);
    state = delta_push(net.layers()[l].activation, state);
  }

  PredictiveDistribution p;
  p.standardized_mean = state.mean[0];
  p.raw_variance = clamp_variance(state.variances()[0], 1.0, "gapa_forward");
  p.standardized_variance = p.raw_variance;
  if (options.apply_calibration) {
    if (const auto* free = std::get_if<FreeCalibration>(&model.calibration)) {
      p.standardized_variance = free->apply(p.raw_variance);
    } else if (model.uses_variational()) {
      p.standardized_variance = std::max(p.raw_variance, kVarianceFloor);
    }
  }
  if (model.standardizer) {
    p.mean = model.standardizer->invert_target_mean(p.standardized_mean);
    p.variance = model.standardizer->invert_target_variance(p.standardized_variance);
  } else {
    p.mean = p.standardized_mean;
    p.variance = p.standardized_variance;
  }
  return p;
}

PredictiveDistribution predict_raw(const GapaModel& model, std::span<const double> raw_x,
                                   const PropagationOptions& options) {
  if (model.standardizer) {
    const auto x = model.standardizer->apply_features(raw_x);
    return gapa_forward(model, x, options);
  }
  return gapa_forward(model, raw_x, options);
}

VarianceSensitivity variance_sensitivity(const BackboneNetwork& net, std::span<const double> x,
                                         CovarianceMode mode) {
  const ForwardTrace trace = forward(net, x);
  const std::size_t L = net.num_layers();
  VarianceSensitivity out;
  out.preactivation = trace.pre_activations[0];
  out.mean = trace.output[0];

  if (mode == CovarianceMode::kFull) {
    // Scalar output: the adjoint of S -> J S J^T at the initial state is
    // J^T J, whose diagonal is J_d^2 with J the mean-path Jacobian.
    std::vector<double> adj{1.0};
    for (std::size_t l = L; l-- > 1;) {
      const auto& pre = trace.pre_activations[l];
      for (std::size_t i = 0; i < adj.size(); ++i) {
        adj[i] *= activation_derivative(net.layers()[l].activation, pre[i]);
      }
      const Matrix& w = net.weight(l);
      std::vector<double> next(w.cols(), 0.0);
      for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < w.cols(); ++j) next[j] += adj[i] * w(i, j);
      adj = std::move(next);
    }
    out.coefficients.resize(adj.size());
    for (std::size_t d = 0; d < adj.size(); ++d) out.coefficients[d] = adj[d] * adj[d];
  } else {
    std::vector<double> adj{1.0};
    for (std::size_t l = L; l-- > 1;) {
      const auto& pre = trace.pre_activations[l];
      for (std::size_t i = 0; i < adj.size(); ++i) {
        const double s = activation_derivative(net.layers()[l].activation, pre[i]);
        adj[i] *= s * s;
      }
      const Matrix& w = net.weight(l);
      std::vector<double> next(w.cols(), 0.0);
      for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < w.cols(); ++j) next[j] += adj[i] * w(i, j) * w(i, j);
      adj = std::move(next);
    }
    out.coefficients = std::move(adj);
  }
  return out;
}

MonteCarloEstimate mc_oracle(const GapaModel& model, std::span<const double> x,
                             std::size_t n_samples, std::uint64_t seed, double variance_scale) {
  if (n_samples < 2) throw ConfigError("mc_oracle: need at least 2 samples");
  const BackboneNetwork& net = model.network;
  const std::vector<double> pre = affine(net.weight(0), net.bias(0), x);
  std::vector<double> mean(pre.size()), sd(pre.size());
  for (std::size_t d = 0; d < pre.size(); ++d) {
    mean[d] = model.layer.neurons[d].posterior_mean(pre[d]);
    sd[d] = std::sqrt(variance_scale * first_layer_variance(model, d, pre[d]));
  }

  std::vector<double> outputs(n_samples);
  parallel_for(n_samples, [&](std::size_t i) {
    Engine eng(derive_seed(seed, i));
    std::vector<double> a(mean.size());
    for (std::size_t d = 0; d < a.size(); ++d) a[d] = mean[d] + sd[d] * standard_normal(eng);
    outputs[i] = forward_from(net, 1, std::move(a))[0];
  });

  // Shifted by the first sample so identical outputs give exactly zero.
  const double n = static_cast<double>(n_samples);
  const double shift = outputs[0];
  for (double& y : outputs) y -= shift;
  double m = 0.0;
  for (double y : outputs) m += y;
  m /= n;
  double ss = 0.0;
  for (double y : outputs) ss += (y - m) * (y - m);

  MonteCarloEstimate est;
  est.mean_estimate = m + shift;
  est.variance_estimate = ss / (n - 1.0);
  if (n_samples < 3) return est;

  // Leave-one-out variances: SS_{-i} = SS - n/(n-1) (y_i - m)^2.
  double loo_mean = 0.0;
  std::vector<double> loo(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double dev = outputs[i] - m;
    loo[i] = (ss - n / (n - 1.0) * dev * dev) / (n - 2.0);
    loo_mean += loo[i];
  }
  loo_mean /= n;
  double jk = 0.0;
  for (double v : loo) jk += (v - loo_mean) * (v - loo_mean);
  est.standard_error = std::sqrt((n - 1.0) / n * jk);
  return est;
}

}  // namespace gapa
