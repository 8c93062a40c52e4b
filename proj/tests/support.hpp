#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "bmpnet/dataset.hpp"
#include "bmpnet/tensor.hpp"
#include "bmpnet/universe.hpp"

namespace bmp::test {

inline Tensor<double> uniform(Shape shape, std::mt19937_64& gen, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<double> t(std::move(shape));
  for (double& v : t.values()) v = dist(gen);
  return t;
}

// Names "a0", "a1", ... so tests can build vocabularies of any size.
inline std::vector<std::string> names(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

// The 3-attribute / 2-object world with U = {<1,5>, <3,4>}. Attributes 1,2,3
// map to ids 0,1,2 and objects 4,5 to ids 0,1.
inline PairUniverse mini_world() {
  return PairUniverse({"1", "2", "3"}, {"4", "5"}, {{0, 0}, {1, 0}, {1, 1}, {2, 1}}, {{0, 1}, {2, 0}});
}

// A small synthetic dataset for loops that must stay fast.
inline Dataset tiny_synthetic(std::uint64_t seed = 0, std::size_t attrs = 3, std::size_t objs = 3,
                              std::size_t dim = 16, double unseen = 0.25, std::size_t per_pair = 6) {
  SyntheticWorldConfig c;
  c.num_attributes = attrs;
  c.num_objects = objs;
  c.feature_dim = dim;
  c.unseen_fraction = unseen;
  c.images_per_pair = per_pair;
  c.seed = seed;
  return generate_synthetic(c);
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("bmpnet_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace bmp::test
