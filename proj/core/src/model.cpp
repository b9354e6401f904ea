#include "gapa/model.hpp"

#include <algorithm>
#include <sstream>

#include "gapa/errors.hpp"
#include "gapa/serialize.hpp"
#include "json_support.hpp"

namespace gapa {

std::string_view covariance_mode_name(CovarianceMode mode) {
  return mode == CovarianceMode::kFull ? "full" : "diag";
}

CovarianceMode parse_covariance_mode(std::string_view name) {
  if (name == "full") return CovarianceMode::kFull;
  if (name == "diag") return CovarianceMode::kDiag;
  throw ConfigError("unknown propagation mode '" + std::string(name) + "' (expected full|diag)");
}

double FreeCalibration::apply(double variance) const {
  return std::max(theta1 * variance + theta2, kVarianceFloor);
}

std::string_view calibration_kind(const Calibration& c) {
  if (std::holds_alternative<FreeCalibration>(c)) return "free";
  if (std::holds_alternative<VariationalCalibration>(c)) return "variational";
  return "none";
}

double first_layer_variance(const GapaModel& model, std::size_t neuron, double x) {
  const NeuronGP& gp = model.layer.neurons[neuron];
  return model.uses_variational() ? gp.variational_var(x) : gp.posterior_var(x);
}

std::string gapa_to_text(const GapaFile& file) {
  std::ostringstream out;
  out << "{\n  \"format\": \"gapa-state\",\n  \"version\": " << kFormatVersion << ",\n";
  out << "  \"config_digest\": " << quote(file.config_digest) << ",\n";
  out << "  \"layer_index\": " << file.layer.layer_index << ",\n";
  out << "  \"covariance_mode\": " << quote(covariance_mode_name(file.mode)) << ",\n";
  out << "  \"calibration\": {\"kind\": " << quote(calibration_kind(file.calibration));
  if (const auto* free = std::get_if<FreeCalibration>(&file.calibration)) {
    out << ", \"theta1\": " << format_real(free->theta1) << ", \"theta2\": " << format_real(free->theta2);
  }
  out << "},\n  \"neurons\": [\n";
  const auto& neurons = file.layer.neurons;
  for (std::size_t d = 0; d < neurons.size(); ++d) {
    const auto& gp = neurons[d];
    out << "    {\"activation\": " << quote(activation_name(gp.activation()))
        << ", \"lengthscale\": " << format_real(gp.kernel().lengthscale)
        << ", \"outputscale\": " << format_real(gp.kernel().outputscale)
        << ", \"noise\": " << format_real(gp.kernel().noise)
        << ",\n     \"inducing\": " << real_array(gp.inducing());
    if (gp.variational_factor()) {
      out << ",\n     \"variational_factor\": " << real_array(gp.variational_factor()->values());
    }
    out << "}" << (d + 1 < neurons.size() ? ",\n" : "\n");
  }
  out << "  ]\n}\n";
  return out.str();
}

void save_gapa(const GapaFile& file, const std::filesystem::path& path) {
  write_text_file(path, gapa_to_text(file));
}

GapaFile load_gapa(const std::filesystem::path& path) {
  using namespace detail;
  const json doc = parse_document(path, "gapa-state");
  GapaFile file;
  try {
    file.config_digest = text(field(doc, "config_digest"), "config_digest");
    file.layer.layer_index = field(doc, "layer_index").get<std::size_t>();
    if (file.layer.layer_index != 1) throw PersistenceError("only layer_index 1 is supported");
    file.mode = parse_covariance_mode(text(field(doc, "covariance_mode"), "covariance_mode"));

    const auto& cal = field(doc, "calibration");
    const std::string kind = text(field(cal, "kind"), "kind");
    if (kind == "free") {
      file.calibration = FreeCalibration{real(field(cal, "theta1"), "theta1"),
                                         real(field(cal, "theta2"), "theta2")};
    } else if (kind == "variational") {
      file.calibration = VariationalCalibration{};
    } else if (kind == "none") {
      file.calibration = std::monostate{};
    } else {
      throw PersistenceError("unknown calibration kind '" + kind + "'");
    }

    const auto& neurons = field(doc, "neurons");
    if (!neurons.is_array()) throw PersistenceError("neurons is not an array");
    for (const auto& n : neurons) {
      RbfParams k{real(field(n, "lengthscale"), "lengthscale"),
                  real(field(n, "outputscale"), "outputscale"), real(field(n, "noise"), "noise")};
      auto z = reals(field(n, "inducing"), "inducing");
      std::optional<Matrix> ls;
      if (n.contains("variational_factor")) {
        const std::size_t m = z.size();
        ls.emplace(m, m, reals(n["variational_factor"], "variational_factor"));
      }
      file.layer.neurons.emplace_back(std::move(z), k,
                                      parse_activation(text(field(n, "activation"), "activation")),
                                      std::move(ls));
    }
    if (std::holds_alternative<VariationalCalibration>(file.calibration)) {
      for (const auto& gp : file.layer.neurons) {
        if (!gp.variational_factor()) {
          throw PersistenceError("variational calibration without a variational factor");
        }
      }
    }
  } catch (const PersistenceError&) {
    throw;
  } catch (const std::exception& e) {
    throw PersistenceError("invalid GAPA state file '" + path.string() + "': " + e.what());
  }
  return file;
}

GapaModel assemble_model(const NetworkFile& net, const GapaFile& gapa) {
  if (gapa.layer.neurons.size() != net.network.layers().front().out_dim) {
    throw ConfigError("GAPA state has " + std::to_string(gapa.layer.neurons.size()) +
                      " neurons, network first layer has " +
                      std::to_string(net.network.layers().front().out_dim));
  }
  GapaModel model;
  model.network = net.network;
  model.layer = gapa.layer;
  model.calibration = gapa.calibration;
  model.mode = gapa.mode;
  model.standardizer = net.standardizer;
  return model;
}

}  // namespace gapa
