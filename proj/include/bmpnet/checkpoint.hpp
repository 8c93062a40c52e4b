#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bmpnet/training.hpp"

namespace bmp {

// Layout: "BMPC", u32 version, u64 header length, JSON header, then raw
// little-endian parameters, Adam first moments and Adam second moments, each
// in the model's for_each order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointInfo {
  std::uint32_t version = 0;
  Precision precision = Precision::Float32;
  std::vector<std::string> attributes;
  std::vector<std::string> objects;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
};

template <typename T>
std::string serialize_checkpoint(const ModelState<T>& state, const PairUniverse& universe);

// Throws CheckpointError on a bad magic, a version mismatch, truncation or a
// vocabulary that differs from `universe`.
template <typename T>
ModelState<T> deserialize_checkpoint(const std::string& bytes, const PairUniverse& universe);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ModelState<T>& state, const PairUniverse& universe);

template <typename T>
ModelState<T> load_checkpoint(const std::filesystem::path& path, const PairUniverse& universe);

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

}  // namespace bmp
