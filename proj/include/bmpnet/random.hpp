#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "bmpnet/tensor.hpp"

namespace bmp {

// Seeded generator whose full state round-trips through a string. Helpers
// build a fresh distribution per call so no hidden cached draws exist outside
// the engine state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  template <typename T>
  Tensor<T> normal(Shape shape, double stddev = 1.0) {
    Tensor<T> t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (T& v : t.values()) v = static_cast<T>(dist(engine_));
    return t;
  }

  std::string state() const;
  void set_state(const std::string& s);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace bmp
