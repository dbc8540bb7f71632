#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

#include "progrnet/model.hpp"

namespace progrnet::test {

/// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;

  TempDir() {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("progrnet-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

inline WeightSet random_weights(const ModelSpec& spec, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  WeightSet w;
  for (const auto& req : required_tensors(spec)) {
    std::vector<float> v(numel(req.shape));
    for (auto& x : v) x = static_cast<float>(dist(rng));
    w.insert(req.name, Tensor(req.shape, std::move(v)));
  }
  return w;
}

inline Tensor random_input(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<float> v(numel(shape));
  for (auto& x : v) x = static_cast<float>(dist(rng));
  return Tensor(shape, std::move(v));
}

}  // namespace progrnet::test
