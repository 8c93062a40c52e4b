#include "bmpnet/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "bmpnet/error.hpp"
#include "bmpnet/random.hpp"
#include "json.hpp"

namespace bmp {

static_assert(std::endian::native == std::endian::little,
              "feature and checkpoint files are written in host byte order");

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view split_name(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw ConfigError("split: expected train, val or test, got '" + std::string(name) + "'");
}

std::vector<ImageRecord> Dataset::images_in(Split split) const {
  std::vector<ImageRecord> out;
  for (const auto& r : images) {
    if (r.split == split) out.push_back(r);
  }
  return out;
}

Tensor<float> Dataset::features_of(std::span<const ImageRecord> records) const {
  const std::size_t d = feature_dim();
  Tensor<float> out(Shape{records.size(), d});
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto src = features.row(records[i].offset);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

namespace {

std::string pair_str(Pair p) {
  return "<" + std::to_string(p.attr) + "," + std::to_string(p.obj) + ">";
}

bool contains(const std::vector<Pair>& sorted, Pair p) {
  return std::binary_search(sorted.begin(), sorted.end(), p);
}

std::vector<Pair> sorted_unique(std::vector<Pair> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

Dataset make_dataset(std::vector<std::string> attributes, std::vector<std::string> objects,
                     SplitPairs pairs, std::vector<ImageRecord> images, Tensor<float> features,
                     CandidateMode mode) {
  if (features.rank() != 2) {
    throw DatasetError("feature-count", "features must be [count, dim], got " + shape_str(features.shape()));
  }
  const std::size_t na = attributes.size(), no = objects.size();
  auto check_vocab = [&](const std::vector<Pair>& list, const char* name) {
    for (Pair p : list) {
      if (p.attr >= na || p.obj >= no) {
        throw DatasetError("vocabulary", std::string(name) + " pair " + pair_str(p) +
                                             " references an unknown attribute or object");
      }
    }
  };
  check_vocab(pairs.train_seen, "train_seen");
  check_vocab(pairs.val_seen, "val_seen");
  check_vocab(pairs.val_unseen, "val_unseen");
  check_vocab(pairs.test_seen, "test_seen");
  check_vocab(pairs.test_unseen, "test_unseen");

  for (auto* list : {&pairs.train_seen, &pairs.val_seen, &pairs.val_unseen, &pairs.test_seen,
                     &pairs.test_unseen}) {
    *list = sorted_unique(std::move(*list));
  }
  for (const auto& [list, name] : {std::pair{&pairs.val_unseen, "val_unseen"},
                                   std::pair{&pairs.test_unseen, "test_unseen"}}) {
    for (Pair p : *list) {
      if (contains(pairs.train_seen, p)) {
        throw DatasetError("split-disjoint", std::string(name) + " pair " + pair_str(p) +
                                                 " also appears in train_seen");
      }
    }
  }
  for (const auto& [list, name] : {std::pair{&pairs.val_seen, "val_seen"},
                                   std::pair{&pairs.test_seen, "test_seen"}}) {
    for (Pair p : *list) {
      if (!contains(pairs.train_seen, p)) {
        throw DatasetError("seen-subset", std::string(name) + " pair " + pair_str(p) +
                                              " is missing from train_seen");
      }
    }
  }

  for (std::size_t i = 0; i < images.size(); ++i) {
    const ImageRecord& r = images[i];
    const std::string where = "image " + std::to_string(i);
    if (r.offset >= features.dim(0)) {
      throw DatasetError("feature-count", where + " has offset " + std::to_string(r.offset) +
                                              " but the feature file holds " +
                                              std::to_string(features.dim(0)) + " rows");
    }
    bool listed = false;
    switch (r.split) {
      case Split::Train: listed = contains(pairs.train_seen, r.pair); break;
      case Split::Val: listed = contains(pairs.val_seen, r.pair) || contains(pairs.val_unseen, r.pair); break;
      case Split::Test: listed = contains(pairs.test_seen, r.pair) || contains(pairs.test_unseen, r.pair); break;
    }
    if (!listed) {
      throw DatasetError("image-label", where + " is labeled " + pair_str(r.pair) +
                                            " which is not a " + std::string(split_name(r.split)) +
                                            " pair");
    }
  }
  if (!features.all_finite()) throw DatasetError("feature-finite", "feature file contains NaN or Inf");

  std::vector<Pair> unseen = pairs.val_unseen;
  unseen.insert(unseen.end(), pairs.test_unseen.begin(), pairs.test_unseen.end());
  Dataset d;
  d.universe = mode == CandidateMode::Cartesian
                   ? PairUniverse::cartesian(std::move(attributes), std::move(objects), pairs.train_seen)
                   : PairUniverse(std::move(attributes), std::move(objects), pairs.train_seen,
                                  sorted_unique(std::move(unseen)));
  d.pairs = std::move(pairs);
  d.images = std::move(images);
  d.features = std::move(features);
  return d;
}

// ---------------------------------------------------------------- features

Tensor<float> read_feature_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("io", "cannot open feature file " + path.string());
  in.seekg(0, std::ios::end);
  const auto actual = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0);
  char header[kFeatureHeaderBytes];
  if (actual < kFeatureHeaderBytes || !in.read(header, kFeatureHeaderBytes)) {
    throw DatasetError("feature-length", path.string() + ": expected at least 16 bytes, got " +
                                             std::to_string(actual));
  }
  if (std::memcmp(header, "BMPF", 4) != 0) {
    throw DatasetError("feature-header", path.string() + ": missing BMPF magic");
  }
  std::uint32_t version, count, dim;
  std::memcpy(&version, header + 4, 4);
  std::memcpy(&count, header + 8, 4);
  std::memcpy(&dim, header + 12, 4);
  if (version != kFeatureFileVersion) {
    throw DatasetError("feature-header", path.string() + ": version " + std::to_string(version) +
                                             ", supported " + std::to_string(kFeatureFileVersion));
  }
  const std::uint64_t expected = kFeatureHeaderBytes + 4ull * count * dim;
  if (actual != expected) {
    throw DatasetError("feature-length", path.string() + ": expected " + std::to_string(expected) +
                                             " bytes, got " + std::to_string(actual));
  }
  Tensor<float> t(Shape{count, dim});
  in.read(reinterpret_cast<char*>(t.data().data()), static_cast<std::streamsize>(4ull * count * dim));
  if (!in) throw DatasetError("io", "short read from " + path.string());
  return t;
}

void write_feature_file(const fs::path& path, const Tensor<float>& features) {
  if (features.rank() != 2) throw ShapeError("feature file: expected [count, dim] features");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write feature file " + path.string());
  const std::uint32_t header[3] = {kFeatureFileVersion, static_cast<std::uint32_t>(features.dim(0)),
                                   static_cast<std::uint32_t>(features.dim(1))};
  out.write("BMPF", 4);
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.write(reinterpret_cast<const char*>(features.data().data()),
            static_cast<std::streamsize>(features.size() * sizeof(float)));
  if (!out) throw Error("short write to " + path.string());
}

Tensor<float> read_feature_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("io", "cannot open " + path.string());
  std::vector<float> data;
  std::size_t dim = 0, rows = 0, line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::size_t width = 0;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const float v = std::strtof(cell.c_str(), &end);
      if (end == cell.c_str()) {
        throw DatasetError("csv-format", path.string() + ":" + std::to_string(line_no) +
                                             ": not a number: '" + cell + "'");
      }
      data.push_back(v);
      ++width;
    }
    if (rows == 0) dim = width;
    if (width != dim) {
      throw DatasetError("csv-format", path.string() + ":" + std::to_string(line_no) + ": expected " +
                                           std::to_string(dim) + " values, got " + std::to_string(width));
    }
    ++rows;
  }
  return Tensor<float>(Shape{rows, dim}, std::move(data));
}

// ---------------------------------------------------------------- manifests

namespace {

json pairs_json(const std::vector<Pair>& v) {
  json arr = json::array();
  for (Pair p : v) arr.push_back({p.attr, p.obj});
  return arr;
}

std::vector<Pair> pairs_from(const json& j, const char* key) {
  std::vector<Pair> out;
  for (const auto& e : j.at(key)) {
    if (!e.is_array() || e.size() != 2) {
      throw DatasetError("manifest-format", std::string("pairs.") + key + ": each pair must be [attr, obj]");
    }
    out.push_back({e[0].get<std::uint32_t>(), e[1].get<std::uint32_t>()});
  }
  return out;
}

}  // namespace

std::string manifest_to_json(const Dataset& dataset) {
  json j;
  j["format"] = "bmp-manifest";
  j["version"] = 1;
  j["attributes"] = dataset.universe.attributes();
  j["objects"] = dataset.universe.objects();
  j["pairs"] = {{"train_seen", pairs_json(dataset.pairs.train_seen)},
                {"val_seen", pairs_json(dataset.pairs.val_seen)},
                {"val_unseen", pairs_json(dataset.pairs.val_unseen)},
                {"test_seen", pairs_json(dataset.pairs.test_seen)},
                {"test_unseen", pairs_json(dataset.pairs.test_unseen)}};
  j["feature_dim"] = dataset.feature_dim();
  j["num_images"] = dataset.features.dim(0);
  json images = json::array();
  for (const auto& r : dataset.images) {
    images.push_back({{"offset", r.offset}, {"pair", {r.pair.attr, r.pair.obj}}, {"split", split_name(r.split)}});
  }
  j["images"] = std::move(images);
  return j.dump(1);
}

Dataset load_dataset(const fs::path& manifest, const fs::path& features, CandidateMode mode) {
  std::ifstream in(manifest);
  if (!in) throw DatasetError("io", "cannot open manifest " + manifest.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DatasetError("manifest-format", manifest.string() + ": " + e.what());
  }
  Tensor<float> feats = read_feature_file(features);
  try {
    SplitPairs pairs;
    const json& p = j.at("pairs");
    pairs.train_seen = pairs_from(p, "train_seen");
    pairs.val_seen = pairs_from(p, "val_seen");
    pairs.val_unseen = pairs_from(p, "val_unseen");
    pairs.test_seen = pairs_from(p, "test_seen");
    pairs.test_unseen = pairs_from(p, "test_unseen");
    const auto count = j.at("num_images").get<std::size_t>();
    const auto dim = j.at("feature_dim").get<std::size_t>();
    if (count != feats.dim(0) || dim != feats.dim(1)) {
      throw DatasetError("feature-count", "manifest declares " + std::to_string(count) + "x" +
                                              std::to_string(dim) + " features, file " + features.string() +
                                              " holds " + std::to_string(feats.dim(0)) + "x" +
                                              std::to_string(feats.dim(1)));
    }
    std::vector<ImageRecord> images;
    for (const auto& e : j.at("images")) {
      ImageRecord r;
      r.offset = e.at("offset").get<std::uint32_t>();
      const auto& pr = e.at("pair");
      r.pair = {pr.at(0).get<std::uint32_t>(), pr.at(1).get<std::uint32_t>()};
      r.split = parse_split(e.at("split").get<std::string>());
      images.push_back(r);
    }
    return make_dataset(j.at("attributes").get<std::vector<std::string>>(),
                        j.at("objects").get<std::vector<std::string>>(), std::move(pairs),
                        std::move(images), std::move(feats), mode);
  } catch (const json::exception& e) {
    throw DatasetError("manifest-format", manifest.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DatasetError("manifest-format", manifest.string() + ": " + e.what());
  }
}

void save_dataset(const Dataset& dataset, const fs::path& manifest, const fs::path& features) {
  write_feature_file(features, dataset.features);
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw Error("cannot write manifest " + manifest.string());
  out << manifest_to_json(dataset) << "\n";
  if (!out) throw Error("short write to " + manifest.string());
}

// ---------------------------------------------------------------- synthetic

void SyntheticWorldConfig::validate() const {
  if (num_attributes < 2) throw ConfigError("num_attributes: need at least 2 attributes");
  if (num_objects < 2) throw ConfigError("num_objects: need at least 2 objects");
  if (feature_dim < 1) throw ConfigError("feature_dim: must be positive");
  if (!(unseen_fraction >= 0.0 && unseen_fraction < 1.0)) {
    throw ConfigError("unseen_fraction: must lie in [0, 1), got " + std::to_string(unseen_fraction));
  }
  if (images_per_pair < 1) throw ConfigError("images_per_pair: must be positive");
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
    throw ConfigError("noise_scale: must be finite and non-negative");
  }
}

namespace {

// Chooses `count` unseen pairs so that every attribute and object keeps at
// least one seen pair.
std::vector<Pair> choose_unseen(std::size_t na, std::size_t no, std::size_t count, Rng& rng) {
  if (count == 0) return {};
  if (count > na * no - std::max(na, no)) {
    throw ConfigError("unseen_fraction: " + std::to_string(count) + " unseen pairs of " +
                      std::to_string(na * no) + " cannot leave every primitive in a seen pair");
  }
  std::vector<Pair> all;
  for (std::uint32_t a = 0; a < na; ++a) {
    for (std::uint32_t o = 0; o < no; ++o) all.push_back({a, o});
  }
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::vector<Pair> order = all;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    std::vector<std::size_t> attr_seen(na, no), obj_seen(no, na);
    std::vector<Pair> chosen;
    for (Pair p : order) {
      if (chosen.size() == count) break;
      if (attr_seen[p.attr] > 1 && obj_seen[p.obj] > 1) {
        --attr_seen[p.attr];
        --obj_seen[p.obj];
        chosen.push_back(p);
      }
    }
    if (chosen.size() == count) {
      std::sort(chosen.begin(), chosen.end());
      return chosen;
    }
  }
  throw ConfigError("unseen_fraction: could not place " + std::to_string(count) +
                    " unseen pairs while keeping every primitive seen");
}

}  // namespace

Dataset generate_synthetic(const SyntheticWorldConfig& config) {
  config.validate();
  const std::size_t na = config.num_attributes, no = config.num_objects, dim = config.feature_dim;
  Rng rng(config.seed);
  const double embed_sd = 1.0 / std::sqrt(static_cast<double>(dim));
  const Tensor<double> attr_embed = rng.normal<double>({na, dim}, embed_sd);
  const Tensor<double> obj_embed = rng.normal<double>({no, dim}, embed_sd);
  // Unit-variance pre-activations: 2*dim inputs of variance 1/dim.
  const Tensor<double> mixer = rng.normal<double>({2 * dim, dim}, std::sqrt(0.5));

  const auto n_unseen =
      static_cast<std::size_t>(std::llround(config.unseen_fraction * static_cast<double>(na * no)));
  std::vector<Pair> unseen = choose_unseen(na, no, n_unseen, rng);
  std::vector<Pair> shuffled = unseen;
  for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.index(i)]);

  SplitPairs pairs;
  const std::size_t n_val_unseen = shuffled.size() / 2;
  pairs.val_unseen.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_val_unseen));
  pairs.test_unseen.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_val_unseen), shuffled.end());
  std::sort(pairs.val_unseen.begin(), pairs.val_unseen.end());
  std::sort(pairs.test_unseen.begin(), pairs.test_unseen.end());
  for (std::uint32_t a = 0; a < na; ++a) {
    for (std::uint32_t o = 0; o < no; ++o) {
      if (!std::binary_search(unseen.begin(), unseen.end(), Pair{a, o})) pairs.train_seen.push_back({a, o});
    }
  }

  const std::size_t per_pair = config.images_per_pair;
  const std::size_t held_out = per_pair * 15 / 100;
  if (held_out > 0) {
    pairs.val_seen = pairs.train_seen;
    pairs.test_seen = pairs.train_seen;
  }

  std::vector<float> data;
  std::vector<ImageRecord> images;
  std::vector<double> clean(dim);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::uint32_t a = 0; a < na; ++a) {
    for (std::uint32_t o = 0; o < no; ++o) {
      const Pair p{a, o};
      for (std::size_t j = 0; j < dim; ++j) {
        double acc = 0;
        for (std::size_t i = 0; i < dim; ++i) {
          acc += attr_embed.at(a, i) * mixer.at(i, j) + obj_embed.at(o, i) * mixer.at(dim + i, j);
        }
        clean[j] = std::tanh(acc);
      }
      const bool is_unseen = std::binary_search(unseen.begin(), unseen.end(), p);
      const bool val_side = std::binary_search(pairs.val_unseen.begin(), pairs.val_unseen.end(), p);
      for (std::size_t k = 0; k < per_pair; ++k) {
        ImageRecord r;
        r.offset = static_cast<std::uint32_t>(images.size());
        r.pair = p;
        if (is_unseen) {
          r.split = val_side ? Split::Val : Split::Test;
        } else {
          r.split = k < held_out ? Split::Val : k < 2 * held_out ? Split::Test : Split::Train;
        }
        images.push_back(r);
        for (std::size_t j = 0; j < dim; ++j) {
          const double eps = config.noise_scale > 0 ? config.noise_scale * noise(rng.engine()) : 0.0;
          data.push_back(static_cast<float>(clean[j] + eps));
        }
      }
    }
  }
  std::vector<std::string> attrs, objs;
  for (std::size_t a = 0; a < na; ++a) attrs.push_back("attr" + std::to_string(a));
  for (std::size_t o = 0; o < no; ++o) objs.push_back("obj" + std::to_string(o));
  Tensor<float> features(Shape{images.size(), dim}, std::move(data));
  return make_dataset(std::move(attrs), std::move(objs), std::move(pairs), std::move(images),
                      std::move(features));
}

}  // namespace bmp
