#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gapa/dataio.hpp"
#include "gapa/linalg.hpp"

namespace gapa {

enum class Activation { kRelu, kTanh, kIdentity };

double activate(Activation a, double z);
/// Derivative at z; relu'(0) is taken as 0.
double activation_derivative(Activation a, double z);
std::string_view activation_name(Activation a);
/// Throws ConfigError on unknown names.
Activation parse_activation(std::string_view name);

struct LayerSpec {
  std::size_t in_dim = 1;
  std::size_t out_dim = 1;
  Activation activation = Activation::kIdentity;

  bool operator==(const LayerSpec&) const = default;
};

/// Parses "32:tanh,32:tanh,1:identity" into layer specs for an input of
/// dimension `input_dim`.
std::vector<LayerSpec> parse_layer_specs(std::string_view text, std::size_t input_dim);
std::string format_layer_specs(std::span<const LayerSpec> specs);

/// Feedforward regression network with fixed parameters. Layer l maps
/// D_{l-1} inputs to D_l outputs: post = act(W pre_input + b).
class BackboneNetwork {
 public:
  BackboneNetwork() = default;
  /// Validates dimension chaining and a scalar identity output layer.
  BackboneNetwork(std::vector<LayerSpec> layers, std::vector<Matrix> weights,
                  std::vector<std::vector<double>> biases);

  std::size_t num_layers() const { return layers_.size(); }
  std::size_t input_dim() const { return layers_.front().in_dim; }
  std::size_t output_dim() const { return layers_.back().out_dim; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  const Matrix& weight(std::size_t l) const { return weights_[l]; }
  const std::vector<double>& bias(std::size_t l) const { return biases_[l]; }

  /// All parameters flattened layer by layer: W (row-major) then b.
  std::vector<double> parameters() const;
  std::size_t parameter_count() const;
  /// Copy of this network with parameters replaced.
  BackboneNetwork with_parameters(std::span<const double> params) const;

  bool operator==(const BackboneNetwork&) const = default;

 private:
  std::vector<LayerSpec> layers_;
  std::vector<Matrix> weights_;
  std::vector<std::vector<double>> biases_;
};

/// W x + b. Shared by every forward path so mean predictions stay bit-equal.
std::vector<double> affine(const Matrix& w, std::span<const double> b, std::span<const double> x);
void activate_inplace(Activation a, std::span<double> z);

struct ForwardTrace {
  std::vector<std::vector<double>> pre_activations;
  std::vector<std::vector<double>> post_activations;
  std::vector<double> output;
};

ForwardTrace forward(const BackboneNetwork& net, std::span<const double> x);
/// Output only.
double predict_scalar(const BackboneNetwork& net, std::span<const double> x);

/// Output of layers first_layer..L-1 given the post-activation of layer
/// first_layer-1.
std::vector<double> forward_from(const BackboneNetwork& net, std::size_t first_layer,
                                 std::vector<double> activation);

struct TrainConfig {
  std::size_t epochs = 2000;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

struct TrainResult {
  BackboneNetwork network;
  double final_train_mse = 0.0;
  std::vector<double> epoch_mse;
};

/// Glorot-uniform weights, zero biases.
BackboneNetwork initialize_network(std::span<const LayerSpec> specs, std::uint64_t seed);

/// Mean squared error over the dataset and its gradient w.r.t.
/// net.parameters().
double mse_and_gradient(const BackboneNetwork& net, const Dataset& data,
                        std::span<const std::size_t> rows, std::vector<double>* gradient);

/// Mini-batch Adam on mean squared error, deterministic given config.seed.
TrainResult train_backbone(const Dataset& train, std::span<const LayerSpec> specs,
                           const TrainConfig& config);

/// Extra metadata stored alongside a network.
struct NetworkFile {
  BackboneNetwork network;
  std::optional<Standardizer> standardizer;
  std::vector<std::string> feature_names;
  std::string target_name;
  std::string config_digest;
};

std::string network_to_text(const NetworkFile& file);
void save_network(const NetworkFile& file, const std::filesystem::path& path);
void save_network(const BackboneNetwork& net, const std::filesystem::path& path);
NetworkFile load_network_file(const std::filesystem::path& path);
BackboneNetwork load_network(const std::filesystem::path& path);

}  // namespace gapa
