#include "gapa/calibrate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <limits>
#include <numeric>
#include <optional>

#include "gapa/errors.hpp"
#include "gapa/parallel.hpp"
#include "gapa/random.hpp"
#include "gapa/serialize.hpp"

namespace gapa {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double softplus(double u) {
  return u > 30.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
}

double softplus_inverse(double theta) {
  return theta > 30.0 ? theta + std::log(-std::expm1(-theta)) : std::log(std::expm1(theta));
}

double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

}  // namespace

NllResult gaussian_nll(std::span<const double> means, std::span<const double> variances,
                       std::span<const double> targets, double floor) {
  if (means.size() != targets.size() || variances.size() != targets.size()) {
    throw ShapeError("nll: " + std::to_string(means.size()) + " means and " +
                     std::to_string(variances.size()) + " variances for " +
                     std::to_string(targets.size()) + " targets");
  }
  if (targets.empty()) throw DomainError("nll: no points");
  NllResult out;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double s = variances[i];
    if (!(s >= floor) || !std::isfinite(s)) {
      throw DomainError("nll: variance " + std::to_string(s) + " at point " + std::to_string(i) +
                        " is below the floor " + std::to_string(floor));
    }
    const double r = targets[i] - means[i];
    out.sum += 0.5 * (kLog2Pi + std::log(s)) + r * r / (2.0 * s);
  }
  out.mean = out.sum / static_cast<double>(targets.size());
  return out;
}

NllResult nll(std::span<const PredictiveDistribution> preds, std::span<const double> targets,
              Units units, double floor) {
  std::vector<double> m(preds.size()), v(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    m[i] = units == Units::kStandardized ? preds[i].standardized_mean : preds[i].mean;
    v[i] = units == Units::kStandardized ? preds[i].standardized_variance : preds[i].variance;
  }
  return gaussian_nll(m, v, targets, floor);
}

// ---------------------------------------------------------------------------

double free_objective(std::span<const double> raw_variances, std::span<const double> residuals,
                      double theta1, double theta2) {
  double acc = 0.0;
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    const double s = std::max(theta1 * raw_variances[i] + theta2, kVarianceFloor);
    const double r = residuals[i];
    acc += 0.5 * (kLog2Pi + std::log(s)) + r * r / (2.0 * s);
  }
  return acc / static_cast<double>(residuals.size());
}

namespace {

// Objective and gradient in the unconstrained (softplus) coordinates.
double free_objective_u(std::span<const double> v, std::span<const double> r, double u1, double u2,
                        double* g1, double* g2) {
  const double t1 = softplus(u1), t2 = softplus(u2);
  double acc = 0.0, d1 = 0.0, d2 = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double raw = t1 * v[i] + t2;
    const double s = std::max(raw, kVarianceFloor);
    acc += 0.5 * (kLog2Pi + std::log(s)) + r[i] * r[i] / (2.0 * s);
    if (raw >= kVarianceFloor) {
      const double ds = 0.5 / s - 0.5 * r[i] * r[i] / (s * s);
      d1 += ds * v[i];
      d2 += ds;
    }
  }
  const double n = static_cast<double>(r.size());
  if (g1) *g1 = d1 / n * sigmoid(u1);
  if (g2) *g2 = d2 / n * sigmoid(u2);
  return acc / n;
}

}  // namespace

FreeFitResult fit_free_from_residuals(std::span<const double> raw_variances,
                                      std::span<const double> residuals) {
  if (residuals.empty()) throw ConfigError("fit_free: empty calibration split");
  if (raw_variances.size() != residuals.size()) {
    throw ShapeError("fit_free: variance/residual length mismatch");
  }
  for (double v : raw_variances) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("fit_free: invalid propagated variance");
  }

  FreeFitResult result;
  if (std::all_of(residuals.begin(), residuals.end(), [](double r) { return r == 0.0; })) {
    result.calibration = {0.0, kVarianceFloor};
    result.objective = free_objective(raw_variances, residuals, 0.0, kVarianceFloor);
    result.warning = true;
    return result;
  }

  constexpr int kGrid = 20;
  std::vector<double> levels(kGrid);
  for (int k = 0; k < kGrid; ++k) levels[k] = std::pow(10.0, -4.0 + 8.0 * k / (kGrid - 1));

  double best = std::numeric_limits<double>::infinity();
  double u1 = 0.0, u2 = 0.0;
  auto consider = [&](double t1, double t2) {
    const double a = softplus_inverse(t1), b = softplus_inverse(t2);
    const double f = free_objective_u(raw_variances, residuals, a, b, nullptr, nullptr);
    if (f < best) {
      best = f;
      u1 = a;
      u2 = b;
    }
  };
  for (double t1 : levels)
    for (double t2 : levels) consider(t1, t2);
  consider(1.0, 1e-300);  // the identity calibration (1, 0)

  double g1 = 0.0, g2 = 0.0;
  double f = free_objective_u(raw_variances, residuals, u1, u2, &g1, &g2);
  double step = 1.0;
  std::size_t it = 0;
  for (; it < 5000; ++it) {
    const double gg = g1 * g1 + g2 * g2;
    if (std::sqrt(gg) <= 1e-8) break;
    bool accepted = false;
    while (step > 1e-30) {
      const double a = u1 - step * g1, b = u2 - step * g2;
      double h1 = 0.0, h2 = 0.0;
      const double fn = free_objective_u(raw_variances, residuals, a, b, &h1, &h2);
      if (fn <= f - 1e-4 * step * gg) {
        u1 = a;
        u2 = b;
        f = fn;
        g1 = h1;
        g2 = h2;
        accepted = true;
        step = std::min(step * 2.0, 1e12);
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }

  result.calibration = {softplus(u1), softplus(u2)};
  result.objective = f;
  result.iterations = it;

  // Softplus never reaches zero; the one-parameter boundary optima are closed form.
  const double n = static_cast<double>(residuals.size());
  double msr = 0.0, scaled = 0.0;
  bool all_positive = true;
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    msr += residuals[i] * residuals[i] / n;
    if (raw_variances[i] > 0.0) {
      scaled += residuals[i] * residuals[i] / raw_variances[i] / n;
    } else {
      all_positive = false;
    }
  }
  auto boundary = [&](double t1, double t2) {
    const double fb = free_objective(raw_variances, residuals, t1, t2);
    if (fb < result.objective) {
      result.calibration = {t1, t2};
      result.objective = fb;
    }
  };
  boundary(0.0, msr);
  if (all_positive) boundary(scaled, 0.0);
  return result;
}

FreeFitResult fit_free(const GapaModel& model, const Dataset& calibration_split) {
  if (calibration_split.size() == 0) throw ConfigError("fit_free: empty calibration split");
  std::vector<double> v(calibration_split.size()), r(calibration_split.size());
  PropagationOptions raw;
  raw.apply_calibration = false;
  parallel_for(calibration_split.size(), [&](std::size_t i) {
    const auto p = gapa_forward(model, calibration_split.features.row(i), raw);
    v[i] = p.raw_variance;
    r[i] = calibration_split.targets[i] - p.standardized_mean;
  });
  return fit_free_from_residuals(v, r);
}

// ---------------------------------------------------------------------------

std::size_t VariationalParams::size() const {
  std::size_t n = 0;
  for (const auto& f : raw_factors) n += f.rows() * (f.rows() + 1) / 2 + 2;
  return n;
}

std::vector<double> VariationalParams::flatten() const {
  std::vector<double> out;
  out.reserve(size());
  for (std::size_t d = 0; d < raw_factors.size(); ++d) {
    const Matrix& f = raw_factors[d];
    for (std::size_t i = 0; i < f.rows(); ++i)
      for (std::size_t j = 0; j <= i; ++j) out.push_back(f(i, j));
    out.push_back(log_lengthscale[d]);
    out.push_back(log_outputscale_sqrt[d]);
  }
  return out;
}

VariationalParams VariationalParams::unflatten(std::span<const double> flat) const {
  if (flat.size() != size()) {
    throw ShapeError("VariationalParams: expected " + std::to_string(size()) + " values, got " +
                     std::to_string(flat.size()));
  }
  VariationalParams out = *this;
  std::size_t k = 0;
  for (std::size_t d = 0; d < raw_factors.size(); ++d) {
    Matrix& f = out.raw_factors[d];
    for (std::size_t i = 0; i < f.rows(); ++i)
      for (std::size_t j = 0; j <= i; ++j) f(i, j) = flat[k++];
    out.log_lengthscale[d] = flat[k++];
    out.log_outputscale_sqrt[d] = flat[k++];
  }
  return out;
}

std::string VariationalParams::block_name(std::size_t k) const {
  for (std::size_t d = 0; d < raw_factors.size(); ++d) {
    const std::size_t m = raw_factors[d].rows();
    const std::size_t tri = m * (m + 1) / 2;
    if (k < tri) return "neuron " + std::to_string(d) + " variational factor";
    if (k == tri) return "neuron " + std::to_string(d) + " lengthscale";
    if (k == tri + 1) return "neuron " + std::to_string(d) + " outputscale";
    k -= tri + 2;
  }
  return "unknown block";
}

VariationalParams initial_variational_params(const GapaLayerState& layer) {
  VariationalParams p;
  for (const auto& gp : layer.neurons) {
    Matrix raw = gp.gram_factor().lower;
    for (std::size_t i = 0; i < raw.rows(); ++i) raw(i, i) = std::log(raw(i, i));
    p.raw_factors.push_back(std::move(raw));
    p.log_lengthscale.push_back(std::log(gp.kernel().lengthscale));
    p.log_outputscale_sqrt.push_back(0.5 * std::log(gp.kernel().outputscale));
  }
  return p;
}

Matrix factor_from_raw(const Matrix& raw) {
  Matrix l(raw.rows(), raw.cols());
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    for (std::size_t j = 0; j < i; ++j) l(i, j) = raw(i, j);
    l(i, i) = std::exp(raw(i, i));
  }
  return l;
}

void apply_variational_params(GapaLayerState& layer, const VariationalParams& params) {
  if (params.num_neurons() != layer.neurons.size()) {
    throw ShapeError("apply_variational_params: neuron count mismatch");
  }
  for (std::size_t d = 0; d < layer.neurons.size(); ++d) {
    auto& gp = layer.neurons[d];
    RbfParams k = gp.kernel();
    k.lengthscale = std::exp(params.log_lengthscale[d]);
    k.outputscale = std::exp(2.0 * params.log_outputscale_sqrt[d]);
    gp.set_kernel(k);
    gp.set_variational_factor(factor_from_raw(params.raw_factors[d]));
  }
}

VariationalObjective::VariationalObjective(const GapaModel& model, const Dataset& data,
                                           CovarianceMode mode)
    : layer_(&model.layer) {
  if (data.size() == 0) throw ConfigError("variational objective: empty dataset");
  preact_.resize(data.size());
  coeffs_.resize(data.size());
  means_.resize(data.size());
  targets_ = data.targets;
  parallel_for(data.size(), [&](std::size_t i) {
    auto s = variance_sensitivity(model.network, data.features.row(i), mode);
    preact_[i] = std::move(s.preactivation);
    coeffs_[i] = std::move(s.coefficients);
    means_[i] = s.mean;
  });
}

namespace {

struct NeuronWork {
  const std::vector<double>* z = nullptr;
  double lengthscale = 1.0;
  double outputscale = 1.0;
  Matrix kzz;  // noiseless K(Z, Z)
  CholeskyFactor chol;
  Matrix ls;

  double kernel(double a, double b) const {
    const double r = (a - b) / lengthscale;
    return outputscale * std::exp(-0.5 * r * r);
  }
};

NeuronWork prepare(const NeuronGP& gp, const VariationalParams& p, std::size_t d) {
  NeuronWork w;
  w.z = &gp.inducing();
  w.lengthscale = std::exp(p.log_lengthscale[d]);
  w.outputscale = std::exp(2.0 * p.log_outputscale_sqrt[d]);
  if (!std::isfinite(w.lengthscale) || !std::isfinite(w.outputscale) || !(w.lengthscale > 0.0) ||
      !(w.outputscale > 0.0)) {
    throw NumericalError("neuron " + std::to_string(d) + " kernel hyperparameters are not finite");
  }
  const std::size_t m = w.z->size();
  w.kzz = Matrix(m, m);
  Matrix k(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = w.kernel((*w.z)[i], (*w.z)[j]);
      w.kzz(i, j) = w.kzz(j, i) = v;
      k(i, j) = k(j, i) = v;
    }
    k(i, i) += gp.kernel().noise;
  }
  w.chol = cholesky(k);
  w.ls = factor_from_raw(p.raw_factors[d]);
  return w;
}

}  // namespace

double VariationalObjective::evaluate(const VariationalParams& params,
                                      std::span<const std::size_t> rows,
                                      std::vector<double>* gradient) const {
  const auto& neurons = layer_->neurons;
  const std::size_t D = neurons.size();
  if (params.num_neurons() != D) throw ShapeError("variational objective: neuron count mismatch");

  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(targets_.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    rows = all;
  }
  const std::size_t n = rows.size();

  std::vector<NeuronWork> work(D);
  parallel_for(D, [&](std::size_t d) { work[d] = prepare(neurons[d], params, d); });

  // Forward: per-neuron variances at every row, keeping a = K^{-1} k(Z,x)
  // and b = L_S^T a for the backward pass.
  std::vector<std::vector<double>> var(D, std::vector<double>(n));
  std::vector<std::vector<double>> a_store(D), b_store(D);
  const bool want_grad = gradient != nullptr;
  parallel_for(D, [&](std::size_t d) {
    const NeuronWork& w = work[d];
    const std::size_t m = w.z->size();
    if (want_grad) {
      a_store[d].resize(n * m);
      b_store[d].resize(n * m);
    }
    std::vector<double> a(m), b(m);
    for (std::size_t r = 0; r < n; ++r) {
      const double x = preact_[rows[r]][d];
      for (std::size_t i = 0; i < m; ++i) a[i] = w.kernel(x, (*w.z)[i]);
      forward_substitute(w.chol.lower, a);
      const double reduction = dot(a, a);
      back_substitute_transposed(w.chol.lower, a);
      double added = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (std::size_t i = j; i < m; ++i) s += w.ls(i, j) * a[i];
        b[j] = s;
        added += s * s;
      }
      var[d][r] = clamp_variance(w.outputscale - reduction, w.outputscale, "variational objective") +
                  added;
      if (want_grad) {
        std::copy(a.begin(), a.end(), a_store[d].begin() + static_cast<std::ptrdiff_t>(r * m));
        std::copy(b.begin(), b.end(), b_store[d].begin() + static_cast<std::ptrdiff_t>(r * m));
      }
    }
  });

  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  std::vector<double> gbar(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& c = coeffs_[rows[r]];
    double s = 0.0;
    for (std::size_t d = 0; d < D; ++d) s += c[d] * var[d][r];
    const bool floored = s < kVarianceFloor;
    const double sv = floored ? kVarianceFloor : s;
    const double res = targets_[rows[r]] - means_[rows[r]];
    loss += (0.5 * (kLog2Pi + std::log(sv)) + res * res / (2.0 * sv)) * inv_n;
    gbar[r] = floored ? 0.0 : (0.5 / sv - 0.5 * res * res / (sv * sv)) * inv_n;
  }
  if (!want_grad) return loss;

  std::vector<std::size_t> offsets(D + 1, 0);
  for (std::size_t d = 0; d < D; ++d) {
    const std::size_t m = neurons[d].num_inducing();
    offsets[d + 1] = offsets[d] + m * (m + 1) / 2 + 2;
  }
  gradient->assign(offsets[D], 0.0);

  parallel_for(D, [&](std::size_t d) {
    const NeuronWork& w = work[d];
    const auto& z = *w.z;
    const std::size_t m = z.size();
    const double ell2 = w.lengthscale * w.lengthscale;
    Matrix g_factor(m, m), g_gram(m, m);
    double g_log_ell = 0.0, g_log_sf = 0.0;
    std::vector<double> kx(m), cvec(m);

    for (std::size_t r = 0; r < n; ++r) {
      const double vbar = gbar[r] * coeffs_[rows[r]][d];
      if (vbar == 0.0) continue;
      const double x = preact_[rows[r]][d];
      const double* a = a_store[d].data() + r * m;
      const double* b = b_store[d].data() + r * m;

      // d v / d L_S = 2 a b^T (lower triangle).
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j <= i; ++j) g_factor(i, j) += 2.0 * vbar * a[i] * b[j];

      // c = K^{-1} S a = K^{-1} L_S b.
      for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j <= i; ++j) s += w.ls(i, j) * b[j];
        cvec[i] = s;
      }
      forward_substitute(w.chol.lower, cvec);
      back_substitute_transposed(w.chol.lower, cvec);

      // dv = d sigma_f^2 + 2 (c - a)^T dk + <a a^T - c a^T - a c^T, dK>.
      double e_dk_sf = 0.0, e_dk_ell = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        kx[i] = w.kernel(x, z[i]);
        const double e = cvec[i] - a[i];
        const double dx = x - z[i];
        e_dk_sf += e * 2.0 * kx[i];
        e_dk_ell += e * kx[i] * dx * dx / ell2;
      }
      g_log_sf += vbar * (2.0 * w.outputscale + 2.0 * e_dk_sf);
      g_log_ell += vbar * 2.0 * e_dk_ell;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
          g_gram(i, j) += vbar * (a[i] * a[j] - cvec[i] * a[j] - a[i] * cvec[j]);
    }

    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        const double dz = z[i] - z[j];
        g_log_sf += g_gram(i, j) * 2.0 * w.kzz(i, j);
        g_log_ell += g_gram(i, j) * w.kzz(i, j) * dz * dz / ell2;
      }
    }

    double* out = gradient->data() + offsets[d];
    std::size_t k = 0;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < i; ++j) out[k++] = g_factor(i, j);
      out[k++] = g_factor(i, i) * w.ls(i, i);  // through L_ii = exp(raw_ii)
    }
    out[k++] = g_log_ell;
    out[k++] = g_log_sf;
  });
  return loss;
}

double VariationalObjective::evaluate_flat(const VariationalParams& shape,
                                           std::span<const double> flat,
                                           std::span<const std::size_t> rows,
                                           std::vector<double>* gradient) const {
  return evaluate(shape.unflatten(flat), rows, gradient);
}

std::string TrainLog::to_text() const {
  std::string out;
  for (const auto& e : entries) {
    out += "epoch=" + std::to_string(e.epoch) + " nll=" + format_real(e.nll) +
           " grad_norm=" + format_real(e.grad_norm) + " seconds=" + format_real(e.seconds) + "\n";
  }
  return out;
}

VariationalFitResult fit_variational(GapaModel& model, const Dataset& train,
                                     const VariationalConfig& config) {
  if (config.batch_size == 0) throw ConfigError("fit_variational: batch_size must be positive");
  if (train.size() == 0) throw ConfigError("fit_variational: empty training set");
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  const VariationalParams shape = initial_variational_params(model.layer);
  std::vector<double> params = shape.flatten();
  const VariationalObjective objective(model, train, model.mode);

  auto check_finite = [&](std::size_t epoch, double loss, const std::vector<double>& values,
                          const char* what) {
    if (!std::isfinite(loss)) {
      throw TrainingError("variational training produced a non-finite loss in epoch " +
                          std::to_string(epoch));
    }
    for (std::size_t k = 0; k < values.size(); ++k) {
      if (!std::isfinite(values[k])) {
        throw TrainingError("variational training produced a non-finite " + std::string(what) +
                            " in epoch " + std::to_string(epoch) + " (" + shape.block_name(k) + ")");
      }
    }
  };

  VariationalFitResult result;
  {
    std::vector<double> g;
    const double f0 = objective.evaluate_flat(shape, params, {}, &g);
    check_finite(0, f0, g, "gradient");
    result.log.entries.push_back({0, f0, std::sqrt(dot(g, g)), elapsed()});
  }

  std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0), grad;
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Engine eng(derive_seed(config.seed, 2));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), eng);
    double norm_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::span<const std::size_t> batch(order.data() + begin, end - begin);
      double loss = 0.0;
      try {
        loss = objective.evaluate_flat(shape, params, batch, &grad);
      } catch (const NumericalError& e) {
        throw TrainingError("variational training failed in epoch " + std::to_string(epoch) + ": " +
                            e.what());
      } catch (const NotPositiveDefiniteError& e) {
        throw TrainingError("variational training failed in epoch " + std::to_string(epoch) + ": " +
                            e.what());
      }
      check_finite(epoch, loss, grad, "gradient");
      ++step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t k = 0; k < params.size(); ++k) {
        m[k] = beta1 * m[k] + (1.0 - beta1) * grad[k];
        v[k] = beta2 * v[k] + (1.0 - beta2) * grad[k] * grad[k];
        params[k] -= config.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
      }
      check_finite(epoch, loss, params, "parameter");
      norm_sum += std::sqrt(dot(grad, grad));
      ++batches;
    }
    double full = 0.0;
    try {
      full = objective.evaluate_flat(shape, params, {}, nullptr);
    } catch (const Error& e) {
      throw TrainingError("variational training failed in epoch " + std::to_string(epoch) + ": " +
                          e.what());
    }
    check_finite(epoch, full, params, "parameter");
    result.log.entries.push_back({epoch, full, norm_sum / static_cast<double>(batches), elapsed()});
  }

  result.params = shape.unflatten(params);
  apply_variational_params(model.layer, result.params);
  model.calibration = VariationalCalibration{};
  return result;
}

GradCheckResult grad_check(const std::function<double(std::span<const double>)>& loss,
                           std::span<const double> analytic, std::span<const double> params,
                           double h) {
  if (!(h > 0.0)) throw ConfigError("grad_check: step h must be positive");
  if (analytic.size() != params.size()) throw ShapeError("grad_check: gradient length mismatch");
  GradCheckResult result;
  std::vector<double> p(params.begin(), params.end());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + h;
    const double up = loss(p);
    p[i] = orig - h;
    const double down = loss(p);
    p[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    const double err = std::abs(analytic[i] - numeric) / denom;
    const double e = std::isnan(err) ? std::numeric_limits<double>::infinity() : err;
    if (e > result.max_relative_error) {
      result.max_relative_error = e;
      result.worst_index = i;
    }
  }
  return result;
}

}  // namespace gapa
