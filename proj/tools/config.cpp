#include "config.hpp"

#include <cmath>
#include <fstream>

#include "gapa/errors.hpp"
#include "gapa/serialize.hpp"

namespace gapa::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

RunConfig::RunConfig()
    : values_{
          {"seed", "0"},
          {"spec", "32:tanh,32:tanh,1:identity"},
          {"epochs", "2000"},
          {"learning_rate", "0.001"},
          {"batch_size", "64"},
          {"train_fraction", "0.8"},
          {"val_fraction", "0.1"},
          {"test_fraction", "0.1"},
          {"inducing", "32"},
          {"subsample", "2048"},
          {"noise", "1e-6"},
          {"propagation", "full"},
          {"calibration", "free"},
          {"var_epochs", "100"},
          {"var_learning_rate", "0.01"},
          {"var_batch_size", "64"},
          {"grid", "99"},
      } {}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  it->second = value;
}

void RunConfig::set(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("configuration entry '" + std::string(assignment) + "' is not key=value");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    set(std::string_view(line));
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  return it->second;
}

double RunConfig::get_real(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("configuration key '" + key + "' expects a real, got '" + v + "'");
  }
}

std::uint64_t RunConfig::get_count(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    if (!v.empty() && v.front() == '-') throw std::invalid_argument(v);
    const unsigned long long n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("configuration key '" + key + "' expects a non-negative integer, got '" + v +
                      "'");
  }
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

std::string RunConfig::digest() const { return digest_hex(canonical()); }

SplitSpec RunConfig::split_spec() const {
  return {get_real("train_fraction"), get_real("val_fraction"), get_real("test_fraction"),
          get_count("seed")};
}

TrainConfig RunConfig::train_config() const {
  return {get_count("epochs"), get_real("learning_rate"), get_count("batch_size"), get_count("seed")};
}

GapaFitConfig RunConfig::gapa_fit_config() const {
  return {get_count("inducing"), get_count("subsample"), get_real("noise"), get_count("seed")};
}

VariationalConfig RunConfig::variational_config() const {
  return {get_count("var_epochs"), get_real("var_learning_rate"), get_count("var_batch_size"),
          get_count("seed")};
}

CovarianceMode RunConfig::covariance_mode() const {
  return parse_covariance_mode(get("propagation"));
}

}  // namespace gapa::cli
