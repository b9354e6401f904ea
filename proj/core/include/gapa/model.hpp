#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "gapa/backbone.hpp"
#include "gapa/dataio.hpp"
#include "gapa/gpact.hpp"

namespace gapa {

/// Lower bound on every predictive variance, in standardized target units.
inline constexpr double kVarianceFloor = 1e-8;

enum class CovarianceMode { kFull, kDiag };

std::string_view covariance_mode_name(CovarianceMode mode);
CovarianceMode parse_covariance_mode(std::string_view name);

/// Affine recalibration of the propagated output variance:
/// theta1 * v + theta2.
struct FreeCalibration {
  double theta1 = 1.0;
  double theta2 = 0.0;

  double apply(double variance) const;
  bool operator==(const FreeCalibration&) const = default;
};

/// Marker: the neurons carry learned variational factors and the
/// variational predictive variance is used as the first-layer variance.
struct VariationalCalibration {
  bool operator==(const VariationalCalibration&) const = default;
};

using Calibration = std::variant<std::monostate, FreeCalibration, VariationalCalibration>;

std::string_view calibration_kind(const Calibration& c);

/// Backbone + GP layer + calibration, everything needed to predict.
struct GapaModel {
  BackboneNetwork network;
  GapaLayerState layer;
  Calibration calibration;
  CovarianceMode mode = CovarianceMode::kFull;
  std::optional<Standardizer> standardizer;

  bool uses_variational() const {
    return std::holds_alternative<VariationalCalibration>(calibration);
  }
};

/// First-layer variance of neuron d at pre-activation x, picking the
/// variational form when the model is variationally calibrated.
double first_layer_variance(const GapaModel& model, std::size_t neuron, double x);

/// Persisted GP layer + calibration.
struct GapaFile {
  GapaLayerState layer;
  Calibration calibration;
  CovarianceMode mode = CovarianceMode::kFull;
  std::string config_digest;

  bool operator==(const GapaFile&) const = default;
};

std::string gapa_to_text(const GapaFile& file);
void save_gapa(const GapaFile& file, const std::filesystem::path& path);
GapaFile load_gapa(const std::filesystem::path& path);

GapaModel assemble_model(const NetworkFile& net, const GapaFile& gapa);

}  // namespace gapa
