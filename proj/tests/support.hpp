#pragma once

#include <doctest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "gapa/backbone.hpp"
#include "gapa/linalg.hpp"
#include "gapa/random.hpp"

namespace gapa::test {

// Scratch directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("gapa-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline Matrix random_matrix(std::size_t r, std::size_t c, Engine& eng) {
  Matrix m(r, c);
  for (double& v : m.values()) v = standard_normal(eng);
  return m;
}

// A A^T + n I: comfortably positive definite.
inline Matrix random_spd(std::size_t n, Engine& eng) {
  const Matrix a = random_matrix(n, n, eng);
  Matrix s = matmul(a, transpose(a));
  for (std::size_t i = 0; i < n; ++i) s(i, i) += static_cast<double>(n);
  return s;
}

inline bool close_rel(double a, double b, double rel, double abs_floor = 0.0) {
  return std::abs(a - b) <= std::max(rel * std::max(std::abs(a), std::abs(b)), abs_floor);
}

// Network with the given widths, activation per hidden layer and an identity
// output layer, Glorot-initialized from `seed`.
inline BackboneNetwork make_network(std::initializer_list<std::size_t> widths, Activation hidden,
                                    std::uint64_t seed) {
  std::vector<LayerSpec> specs;
  auto it = widths.begin();
  std::size_t in = *it++;
  for (; it != widths.end(); ++it) {
    const bool last = std::next(it) == widths.end();
    specs.push_back({in, *it, last ? Activation::kIdentity : hidden});
    in = *it;
  }
  return initialize_network(specs, seed);
}

}  // namespace gapa::test
