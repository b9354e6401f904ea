#include "gapa/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

#include "gapa/errors.hpp"
#include "gapa/random.hpp"
#include "gapa/serialize.hpp"

namespace gapa {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

std::optional<double> parse_real(std::string_view cell) {
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;  // only the requested columns
};

// Reads the header and parses the requested columns of every data row.
CsvTable read_table(const std::filesystem::path& path, std::span<const std::string> wanted,
                    std::vector<std::size_t>& wanted_index) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open CSV file '" + path.string() + "'");

  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw IngestionError("CSV file '" + path.string() + "' is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  for (auto f : split_fields(line)) table.header.emplace_back(f);

  wanted_index.clear();
  for (const auto& name : wanted) {
    auto it = std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end()) {
      throw IngestionError("column '" + name + "' not found in header of '" + path.string() + "'");
    }
    wanted_index.push_back(static_cast<std::size_t>(it - table.header.begin()));
  }

  std::size_t row_number = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row_number;
    const auto fields = split_fields(line);
    if (fields.size() != table.header.size()) {
      throw IngestionError("row " + std::to_string(row_number) + " has " +
                           std::to_string(fields.size()) + " cells, header has " +
                           std::to_string(table.header.size()));
    }
    std::vector<double> row;
    row.reserve(wanted_index.size());
    for (std::size_t k = 0; k < wanted_index.size(); ++k) {
      const auto cell = fields[wanted_index[k]];
      const auto value = parse_real(cell);
      if (!value) {
        throw IngestionError("non-numeric cell '" + std::string(cell) + "' at row " +
                             std::to_string(row_number) + ", column '" + wanted[k] + "'");
      }
      row.push_back(*value);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::vector<std::string> read_header(const std::filesystem::path& path) {
  std::vector<std::size_t> unused;
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open CSV file '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw IngestionError("CSV file '" + path.string() + "' is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  std::vector<std::string> header;
  for (auto f : split_fields(line)) header.emplace_back(f);
  return header;
}

}  // namespace

void Dataset::validate() const {
  if (targets.size() != features.rows()) {
    throw ShapeError("Dataset: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(features.rows()) + " feature rows");
  }
  for (double v : features.values())
    if (!std::isfinite(v)) throw DomainError("Dataset: non-finite feature");
  for (double v : targets)
    if (!std::isfinite(v)) throw DomainError("Dataset: non-finite target");
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.column_names = column_names;
  out.target_name = target_name;
  out.features = Matrix(rows.size(), features.cols());
  out.targets.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = features.row(rows[i]);
    std::copy(src.begin(), src.end(), out.features.row(i).begin());
    out.targets.push_back(targets[rows[i]]);
  }
  return out;
}

Dataset load_csv(const std::filesystem::path& path, const std::string& target_column) {
  const auto header = read_header(path);
  if (std::find(header.begin(), header.end(), target_column) == header.end()) {
    throw IngestionError("target column '" + target_column + "' not found in header of '" +
                         path.string() + "'");
  }
  std::vector<std::string> wanted;
  for (const auto& h : header)
    if (h != target_column) wanted.push_back(h);
  wanted.push_back(target_column);

  std::vector<std::size_t> index;
  const auto table = read_table(path, wanted, index);

  Dataset data;
  data.column_names.assign(wanted.begin(), wanted.end() - 1);
  data.target_name = target_column;
  const std::size_t d = data.column_names.size();
  data.features = Matrix(table.rows.size(), d);
  data.targets.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    std::copy_n(table.rows[i].begin(), d, data.features.row(i).begin());
    data.targets.push_back(table.rows[i][d]);
  }
  return data;
}

Matrix load_csv_columns(const std::filesystem::path& path, std::span<const std::string> columns) {
  std::vector<std::size_t> index;
  const auto table = read_table(path, columns, index);
  Matrix out(table.rows.size(), columns.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    std::copy(table.rows[i].begin(), table.rows[i].end(), out.row(i).begin());
  }
  return out;
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write CSV file '" + path.string() + "'");
  for (const auto& name : data.column_names) out << name << ',';
  out << data.target_name << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.features.row(i)) out << format_real(v) << ',';
    out << format_real(data.targets[i]) << '\n';
  }
  if (!out) throw IngestionError("failed writing CSV file '" + path.string() + "'");
}

SplitIndices split_indices(std::size_t n, const SplitSpec& spec) {
  const double total = spec.train_fraction + spec.val_fraction + spec.test_fraction;
  for (double f : {spec.train_fraction, spec.val_fraction, spec.test_fraction}) {
    if (!(f > 0.0 && f < 1.0)) throw ConfigError("split fractions must lie in (0, 1)");
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  if (n < 3) throw ConfigError("split needs at least 3 rows, got " + std::to_string(n));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Engine eng(spec.seed);
  shuffle(std::span<std::size_t>(order), eng);

  const auto nd = static_cast<double>(n);
  const auto n_train = static_cast<std::size_t>(std::floor(spec.train_fraction * nd + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(spec.val_fraction * nd + 1e-9));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    throw ConfigError("split of " + std::to_string(n) + " rows leaves an empty partition");
  }
  SplitIndices out;
  out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return out;
}

Splits split(const Dataset& data, const SplitSpec& spec) {
  const auto idx = split_indices(data.size(), spec);
  return {data.subset(idx.train), data.subset(idx.val), data.subset(idx.test)};
}

namespace {

// Returns (mean, std) with the constant-column policy applied.
std::pair<double, double> column_moments(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (*lo == *hi) return {*lo, 1.0};
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / n);
  return {mean, sd > 0.0 ? sd : 1.0};
}

}  // namespace

Standardizer fit_standardizer(const Dataset& train) {
  if (train.size() == 0) throw ConfigError("fit_standardizer: empty dataset");
  Standardizer s;
  const std::size_t d = train.input_dim();
  std::vector<double> col(train.size());
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < train.size(); ++i) col[i] = train.features(i, j);
    const auto [m, sd] = column_moments(col);
    s.feature_means.push_back(m);
    s.feature_stds.push_back(sd);
  }
  const auto [tm, tsd] = column_moments(train.targets);
  s.target_mean = tm;
  s.target_std = tsd;
  return s;
}

std::vector<double> Standardizer::apply_features(std::span<const double> x) const {
  if (x.size() != feature_means.size()) {
    throw ShapeError("Standardizer: input of length " + std::to_string(x.size()) + ", expected " +
                     std::to_string(feature_means.size()));
  }
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - feature_means[j]) / feature_stds[j];
  return out;
}

double Standardizer::apply_target(double y) const { return (y - target_mean) / target_std; }

double Standardizer::invert_target_mean(double mean) const {
  return target_mean + target_std * mean;
}

double Standardizer::invert_target_variance(double variance) const {
  return target_std * target_std * variance;
}

Dataset Standardizer::apply(const Dataset& data) const {
  Dataset out = data;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto row = apply_features(data.features.row(i));
    std::copy(row.begin(), row.end(), out.features.row(i).begin());
    out.targets[i] = apply_target(data.targets[i]);
  }
  return out;
}

Dataset make_toy_gap(std::size_t n, std::uint64_t seed) {
  if (n < 10) throw ConfigError("make_toy_gap: n must be at least 10, got " + std::to_string(n));
  Engine eng(seed);
  Dataset data;
  data.column_names = {"x"};
  data.target_name = "y";
  data.features = Matrix(n, 1);
  data.targets.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double magnitude = 1.0 + 2.0 * uniform01(eng);
    const double x = (i % 2 == 0) ? -magnitude : magnitude;
    const double y = std::sin(2.0 * x) + 0.1 * standard_normal(eng);
    data.features(i, 0) = x;
    data.targets[i] = y;
  }
  return data;
}

}  // namespace gapa
