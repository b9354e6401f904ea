#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gapa/linalg.hpp"

namespace gapa {

/// Regression dataset: N rows of D0 features plus one scalar target.
struct Dataset {
  Matrix features;
  std::vector<double> targets;
  std::vector<std::string> column_names;  // feature columns, header order
  std::string target_name;

  std::size_t size() const { return targets.size(); }
  std::size_t input_dim() const { return features.cols(); }

  /// Checks the row-count and finiteness invariants.
  void validate() const;
  /// Rows picked in the given order.
  Dataset subset(std::span<const std::size_t> rows) const;
};

/// Reads a headered CSV. All columns other than `target_column` become
/// features, in header order.
Dataset load_csv(const std::filesystem::path& path, const std::string& target_column);

/// Reads only the named feature columns; used for prediction on files that
/// may lack a target column.
Matrix load_csv_columns(const std::filesystem::path& path, std::span<const std::string> columns);

/// Writes features then target, reals with 17 significant digits.
void write_csv(const Dataset& data, const std::filesystem::path& path);

struct SplitSpec {
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

struct Splits {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Fisher-Yates permutation of 0..n-1 under mt19937_64(seed), partitioned as
/// floor(n*train), floor(n*val), remainder.
SplitIndices split_indices(std::size_t n, const SplitSpec& spec);
Splits split(const Dataset& data, const SplitSpec& spec);

/// Per-column affine standardization fitted on training data.
struct Standardizer {
  std::vector<double> feature_means;
  std::vector<double> feature_stds;
  double target_mean = 0.0;
  double target_std = 1.0;

  Dataset apply(const Dataset& data) const;
  std::vector<double> apply_features(std::span<const double> x) const;
  double apply_target(double y) const;
  double invert_target_mean(double mean) const;
  double invert_target_variance(double variance) const;

  bool operator==(const Standardizer&) const = default;
};

/// Population mean/std per column. Constant columns get std = 1 and their
/// exact value as mean, so they standardize to exact zeros.
Standardizer fit_standardizer(const Dataset& train);

/// Two-cluster toy regression problem with a gap around zero:
/// x ~ U([-3,-1] u [1,3]) with alternating intervals, y = sin(2x) + 0.1*eps.
Dataset make_toy_gap(std::size_t n, std::uint64_t seed);

}  // namespace gapa
