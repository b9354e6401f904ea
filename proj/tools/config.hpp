#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "gapa/backbone.hpp"
#include "gapa/calibrate.hpp"
#include "gapa/dataio.hpp"
#include "gapa/gpact.hpp"
#include "gapa/model.hpp"

namespace gapa::cli {

/// Flat key=value run configuration. Every key has a default; files and
/// command-line overrides may only set known keys.
class RunConfig {
 public:
  RunConfig();

  /// Reads `key = value` lines; '#' starts a comment.
  void load_file(const std::filesystem::path& path);
  /// Applies one "key=value" override.
  void set(std::string_view assignment);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  double get_real(const std::string& key) const;
  std::uint64_t get_count(const std::string& key) const;

  /// Sorted "key=value\n" lines.
  std::string canonical() const;
  std::string digest() const;

  SplitSpec split_spec() const;
  TrainConfig train_config() const;
  GapaFitConfig gapa_fit_config() const;
  VariationalConfig variational_config() const;
  CovarianceMode covariance_mode() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace gapa::cli
