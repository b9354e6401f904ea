#include "gapa/backbone.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "gapa/errors.hpp"
#include "gapa/random.hpp"
#include "gapa/serialize.hpp"
#include "json_support.hpp"

namespace gapa {

double activate(Activation a, double z) {
  switch (a) {
    case Activation::kRelu: return z > 0.0 ? z : 0.0;
    case Activation::kTanh: return std::tanh(z);
    case Activation::kIdentity: return z;
  }
  return z;
}

double activation_derivative(Activation a, double z) {
  switch (a) {
    case Activation::kRelu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::kIdentity: return 1.0;
  }
  return 1.0;
}

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kIdentity: return "identity";
  }
  return "identity";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity" || name == "linear") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::vector<LayerSpec> parse_layer_specs(std::string_view text, std::size_t input_dim) {
  std::vector<LayerSpec> specs;
  std::size_t in = input_dim;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    if (comma == std::string_view::npos) comma = text.size();
    const auto item = text.substr(start, comma - start);
    const auto colon = item.find(':');
    if (colon == std::string_view::npos) {
      throw ConfigError("layer spec '" + std::string(item) + "' is not of the form <width>:<activation>");
    }
    const std::string width_text(item.substr(0, colon));
    std::size_t width = 0;
    try {
      std::size_t used = 0;
      const long w = std::stol(width_text, &used);
      if (used != width_text.size() || w < 1) throw std::invalid_argument("width");
      width = static_cast<std::size_t>(w);
    } catch (const std::exception&) {
      throw ConfigError("layer width '" + width_text + "' is not a positive integer");
    }
    specs.push_back({in, width, parse_activation(item.substr(colon + 1))});
    in = width;
    start = comma + 1;
  }
  if (specs.empty()) throw ConfigError("empty layer spec");
  if (specs.back().out_dim != 1 || specs.back().activation != Activation::kIdentity) {
    throw ConfigError("final layer must be 1:identity");
  }
  return specs;
}

std::string format_layer_specs(std::span<const LayerSpec> specs) {
  std::string out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(specs[i].out_dim) + ":" + std::string(activation_name(specs[i].activation));
  }
  return out;
}

BackboneNetwork::BackboneNetwork(std::vector<LayerSpec> layers, std::vector<Matrix> weights,
                                 std::vector<std::vector<double>> biases)
    : layers_(std::move(layers)), weights_(std::move(weights)), biases_(std::move(biases)) {
  if (layers_.empty()) throw ConfigError("network needs at least one layer");
  if (weights_.size() != layers_.size() || biases_.size() != layers_.size()) {
    throw ShapeError("network: parameter count does not match layer count");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& s = layers_[l];
    if (s.in_dim < 1 || s.out_dim < 1) throw ConfigError("layer dimensions must be >= 1");
    if (l > 0 && s.in_dim != layers_[l - 1].out_dim) {
      throw ShapeError("layer " + std::to_string(l) + " input " + std::to_string(s.in_dim) +
                       " does not chain with previous output " +
                       std::to_string(layers_[l - 1].out_dim));
    }
    if (weights_[l].rows() != s.out_dim || weights_[l].cols() != s.in_dim ||
        biases_[l].size() != s.out_dim) {
      throw ShapeError("layer " + std::to_string(l) + " parameters do not match its spec");
    }
  }
  if (layers_.back().out_dim != 1 || layers_.back().activation != Activation::kIdentity) {
    throw ConfigError("final layer must be a scalar identity layer");
  }
}

std::size_t BackboneNetwork::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) n += weights_[l].size() + biases_[l].size();
  return n;
}

std::vector<double> BackboneNetwork::parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto w = weights_[l].values();
    out.insert(out.end(), w.begin(), w.end());
    out.insert(out.end(), biases_[l].begin(), biases_[l].end());
  }
  return out;
}

BackboneNetwork BackboneNetwork::with_parameters(std::span<const double> params) const {
  if (params.size() != parameter_count()) {
    throw ShapeError("with_parameters: expected " + std::to_string(parameter_count()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  BackboneNetwork copy = *this;
  std::size_t k = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    for (double& w : copy.weights_[l].values()) w = params[k++];
    for (double& b : copy.biases_[l]) b = params[k++];
  }
  return copy;
}

std::vector<double> affine(const Matrix& w, std::span<const double> b, std::span<const double> x) {
  std::vector<double> z = matvec(w, x);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += b[i];
  return z;
}

void activate_inplace(Activation a, std::span<double> z) {
  for (double& v : z) v = activate(a, v);
}

ForwardTrace forward(const BackboneNetwork& net, std::span<const double> x) {
  if (x.size() != net.input_dim()) {
    throw ShapeError("forward: input of length " + std::to_string(x.size()) + ", network expects " +
                     std::to_string(net.input_dim()));
  }
  ForwardTrace trace;
  std::vector<double> h(x.begin(), x.end());
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    std::vector<double> z = affine(net.weight(l), net.bias(l), h);
    trace.pre_activations.push_back(z);
    activate_inplace(net.layers()[l].activation, z);
    trace.post_activations.push_back(z);
    h = std::move(z);
  }
  trace.output = h;
  return trace;
}

double predict_scalar(const BackboneNetwork& net, std::span<const double> x) {
  return forward(net, x).output[0];
}

std::vector<double> forward_from(const BackboneNetwork& net, std::size_t first_layer,
                                 std::vector<double> activation) {
  for (std::size_t l = first_layer; l < net.num_layers(); ++l) {
    std::vector<double> z = affine(net.weight(l), net.bias(l), activation);
    activate_inplace(net.layers()[l].activation, z);
    activation = std::move(z);
  }
  return activation;
}

BackboneNetwork initialize_network(std::span<const LayerSpec> specs, std::uint64_t seed) {
  Engine eng(seed);
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
  for (const auto& s : specs) {
    const double limit = std::sqrt(6.0 / static_cast<double>(s.in_dim + s.out_dim));
    Matrix w(s.out_dim, s.in_dim);
    for (double& v : w.values()) v = limit * (2.0 * uniform01(eng) - 1.0);
    weights.push_back(std::move(w));
    biases.emplace_back(s.out_dim, 0.0);
  }
  return BackboneNetwork({specs.begin(), specs.end()}, std::move(weights), std::move(biases));
}

double mse_and_gradient(const BackboneNetwork& net, const Dataset& data,
                        std::span<const std::size_t> rows, std::vector<double>* gradient) {
  const std::size_t L = net.num_layers();
  std::vector<std::size_t> offsets(L);
  {
    std::size_t k = 0;
    for (std::size_t l = 0; l < L; ++l) {
      offsets[l] = k;
      k += net.weight(l).size() + net.bias(l).size();
    }
  }
  if (gradient) gradient->assign(net.parameter_count(), 0.0);

  const double inv_n = 1.0 / static_cast<double>(rows.size());
  double loss = 0.0;
  for (std::size_t row : rows) {
    const auto x = data.features.row(row);
    const ForwardTrace trace = forward(net, x);
    const double r = trace.output[0] - data.targets[row];
    loss += r * r * inv_n;
    if (!gradient) continue;

    // Backpropagate d(loss)/d(output) = 2 r / n.
    std::vector<double> delta{2.0 * r * inv_n};
    for (std::size_t l = L; l-- > 0;) {
      const auto& pre = trace.pre_activations[l];
      const Activation act = net.layers()[l].activation;
      for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= activation_derivative(act, pre[i]);
      const Matrix& w = net.weight(l);
      std::span<const double> input =
          l == 0 ? x : std::span<const double>(trace.post_activations[l - 1]);
      double* gw = gradient->data() + offsets[l];
      double* gb = gw + w.size();
      for (std::size_t i = 0; i < w.rows(); ++i) {
        gb[i] += delta[i];
        for (std::size_t j = 0; j < w.cols(); ++j) gw[i * w.cols() + j] += delta[i] * input[j];
      }
      if (l > 0) {
        std::vector<double> next(w.cols(), 0.0);
        for (std::size_t i = 0; i < w.rows(); ++i)
          for (std::size_t j = 0; j < w.cols(); ++j) next[j] += w(i, j) * delta[i];
        delta = std::move(next);
      }
    }
  }
  return loss;
}

TrainResult train_backbone(const Dataset& train, std::span<const LayerSpec> specs,
                           const TrainConfig& config) {
  if (specs.empty()) throw ConfigError("train_backbone: empty layer specs");
  if (specs.front().in_dim != train.input_dim()) {
    throw ConfigError("train_backbone: spec input dimension " + std::to_string(specs.front().in_dim) +
                      " does not match dataset dimension " + std::to_string(train.input_dim()));
  }
  if (specs.back().out_dim != 1) throw ConfigError("train_backbone: output dimension must be 1");
  if (config.batch_size == 0) throw ConfigError("train_backbone: batch_size must be positive");
  if (train.size() == 0) throw ConfigError("train_backbone: empty training set");

  BackboneNetwork net = initialize_network(specs, config.seed);
  std::vector<double> params = net.parameters();
  std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0), grad;
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  Engine order_eng(derive_seed(config.seed, 1));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), order_eng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> batch(order.data() + start, end - start);
      const double loss = mse_and_gradient(net, train, batch, &grad);
      epoch_loss += loss * static_cast<double>(batch.size());
      ++step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t k = 0; k < params.size(); ++k) {
        m[k] = beta1 * m[k] + (1.0 - beta1) * grad[k];
        v[k] = beta2 * v[k] + (1.0 - beta2) * grad[k] * grad[k];
        params[k] -= config.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
      }
      bool finite = std::isfinite(loss);
      for (double p : params) finite = finite && std::isfinite(p);
      if (!finite) {
        throw TrainingError("backbone training diverged to NaN/Inf in epoch " + std::to_string(epoch));
      }
      net = net.with_parameters(params);
    }
    result.epoch_mse.push_back(epoch_loss / static_cast<double>(train.size()));
  }
  std::vector<std::size_t> all(train.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  result.final_train_mse = mse_and_gradient(net, train, all, nullptr);
  if (!std::isfinite(result.final_train_mse)) {
    throw TrainingError("backbone training produced a non-finite loss in epoch " +
                        std::to_string(config.epochs));
  }
  result.network = std::move(net);
  return result;
}

std::string network_to_text(const NetworkFile& file) {
  const auto& net = file.network;
  std::ostringstream out;
  out << "{\n  \"format\": \"gapa-network\",\n  \"version\": " << kFormatVersion << ",\n";
  out << "  \"config_digest\": " << quote(file.config_digest) << ",\n";
  out << "  \"layer_specs\": [";
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto& s = net.layers()[l];
    out << (l ? ", " : "") << "{\"in\": " << s.in_dim << ", \"out\": " << s.out_dim
        << ", \"activation\": " << quote(activation_name(s.activation)) << "}";
  }
  out << "],\n  \"weights\": [\n";
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    out << "    " << real_array(net.weight(l).values()) << (l + 1 < net.num_layers() ? ",\n" : "\n");
  }
  out << "  ],\n  \"biases\": [\n";
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    out << "    " << real_array(net.bias(l)) << (l + 1 < net.num_layers() ? ",\n" : "\n");
  }
  out << "  ],\n  \"feature_names\": [";
  for (std::size_t i = 0; i < file.feature_names.size(); ++i) {
    out << (i ? ", " : "") << quote(file.feature_names[i]);
  }
  out << "],\n  \"target_name\": " << quote(file.target_name);
  if (file.standardizer) {
    const auto& s = *file.standardizer;
    out << ",\n  \"standardizer\": {\n"
        << "    \"feature_means\": " << real_array(s.feature_means) << ",\n"
        << "    \"feature_stds\": " << real_array(s.feature_stds) << ",\n"
        << "    \"target_mean\": " << format_real(s.target_mean) << ",\n"
        << "    \"target_std\": " << format_real(s.target_std) << "\n  }";
  }
  out << "\n}\n";
  return out.str();
}

void save_network(const NetworkFile& file, const std::filesystem::path& path) {
  write_text_file(path, network_to_text(file));
}

void save_network(const BackboneNetwork& net, const std::filesystem::path& path) {
  save_network(NetworkFile{net, std::nullopt, {}, {}, {}}, path);
}

NetworkFile load_network_file(const std::filesystem::path& path) {
  using namespace detail;
  const json doc = parse_document(path, "gapa-network");
  NetworkFile file;
  try {
    file.config_digest = text(field(doc, "config_digest"), "config_digest");
    const auto& specs = field(doc, "layer_specs");
    const auto& weights = field(doc, "weights");
    const auto& biases = field(doc, "biases");
    if (!specs.is_array() || !weights.is_array() || !biases.is_array() ||
        weights.size() != specs.size() || biases.size() != specs.size()) {
      throw PersistenceError("layer_specs, weights and biases must be arrays of equal length");
    }
    std::vector<LayerSpec> layers;
    std::vector<Matrix> ws;
    std::vector<std::vector<double>> bs;
    for (std::size_t l = 0; l < specs.size(); ++l) {
      const auto& s = specs[l];
      const auto in = field(s, "in").get<std::size_t>();
      const auto outd = field(s, "out").get<std::size_t>();
      layers.push_back({in, outd, parse_activation(text(field(s, "activation"), "activation"))});
      ws.emplace_back(outd, in, reals(weights[l], "weights"));
      bs.push_back(reals(biases[l], "biases"));
    }
    file.network = BackboneNetwork(std::move(layers), std::move(ws), std::move(bs));
    for (const auto& n : field(doc, "feature_names")) file.feature_names.push_back(text(n, "feature_names"));
    file.target_name = text(field(doc, "target_name"), "target_name");
    if (doc.contains("standardizer")) {
      const auto& s = doc["standardizer"];
      Standardizer st;
      st.feature_means = reals(field(s, "feature_means"), "feature_means");
      st.feature_stds = reals(field(s, "feature_stds"), "feature_stds");
      st.target_mean = real(field(s, "target_mean"), "target_mean");
      st.target_std = real(field(s, "target_std"), "target_std");
      file.standardizer = std::move(st);
    }
  } catch (const PersistenceError&) {
    throw;
  } catch (const std::exception& e) {
    throw PersistenceError("invalid network file '" + path.string() + "': " + e.what());
  }
  return file;
}

BackboneNetwork load_network(const std::filesystem::path& path) {
  return load_network_file(path).network;
}

}  // namespace gapa
