#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bmpnet/tensor.hpp"
#include "bmpnet/universe.hpp"

namespace bmp {

enum class Split : std::uint8_t { Train, Val, Test };

std::string_view split_name(Split split);
Split parse_split(std::string_view name);

enum class CandidateMode { Listed, Cartesian };

struct SplitPairs {
  std::vector<Pair> train_seen;
  std::vector<Pair> val_seen;
  std::vector<Pair> val_unseen;
  std::vector<Pair> test_seen;
  std::vector<Pair> test_unseen;
};

struct ImageRecord {
  std::uint32_t offset = 0;  // row in the feature file
  Pair pair;
  Split split = Split::Train;
};

// Validated, immutable once built. The universe's seen set is train_seen;
// its unseen set is val_unseen ∪ test_unseen (or every other combination in
// cartesian mode).
struct Dataset {
  PairUniverse universe;
  SplitPairs pairs;
  std::vector<ImageRecord> images;
  Tensor<float> features;  // [count, dim]

  std::size_t feature_dim() const { return features.dim(1); }
  std::vector<ImageRecord> images_in(Split split) const;
  Tensor<float> features_of(std::span<const ImageRecord> records) const;
};

// Checks every manifest invariant; throws DatasetError naming the rule.
Dataset make_dataset(std::vector<std::string> attributes, std::vector<std::string> objects,
                     SplitPairs pairs, std::vector<ImageRecord> images, Tensor<float> features,
                     CandidateMode mode = CandidateMode::Listed);

// --- feature files: "BMPF", u32 version, u32 count, u32 dim, count*dim f32 LE

inline constexpr std::uint32_t kFeatureFileVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 16;

Tensor<float> read_feature_file(const std::filesystem::path& path);
void write_feature_file(const std::filesystem::path& path, const Tensor<float>& features);
// One feature vector per line, comma separated, no header.
Tensor<float> read_feature_csv(const std::filesystem::path& path);

// --- manifests (JSON)

std::string manifest_to_json(const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& manifest, const std::filesystem::path& features,
                     CandidateMode mode = CandidateMode::Listed);
void save_dataset(const Dataset& dataset, const std::filesystem::path& manifest,
                  const std::filesystem::path& features);

// --- synthetic compositional worlds

struct SyntheticWorldConfig {
  std::size_t num_attributes = 8;
  std::size_t num_objects = 8;
  std::size_t feature_dim = 64;
  double unseen_fraction = 0.25;
  std::size_t images_per_pair = 20;
  double noise_scale = 0.1;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError naming the field
};

// Attribute and object embeddings e ~ N(0, I/dim) pass through a fixed random
// linear map and tanh; each image adds N(0, noise²) noise. Unseen pairs are
// split between validation and test; seen pairs give 70/15/15 of their
// images to train/val/test.
Dataset generate_synthetic(const SyntheticWorldConfig& config);

}  // namespace bmp
