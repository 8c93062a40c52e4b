#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <set>

#include "bmpnet/dataset.hpp"
#include "bmpnet/error.hpp"
#include "support.hpp"

namespace bmp {
namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Two attributes, two objects; <a0,o0>, <a1,o1>, <a0,o1> seen for training
// and <a1,o0> unseen for test.
struct Manifest {
  std::vector<std::string> attrs = {"a0", "a1"};
  std::vector<std::string> objs = {"o0", "o1"};
  SplitPairs pairs;
  std::vector<ImageRecord> images;
  Tensor<float> features{Shape{5, 3}, 0.5f};

  Manifest() {
    pairs.train_seen = {{0, 0}, {0, 1}, {1, 1}};
    pairs.test_seen = {{0, 0}};
    pairs.test_unseen = {{1, 0}};
    images = {{0, {0, 0}, Split::Train}, {1, {0, 1}, Split::Train}, {2, {1, 1}, Split::Train},
              {3, {0, 0}, Split::Test}, {4, {1, 0}, Split::Test}};
  }
  Dataset build() const { return make_dataset(attrs, objs, pairs, images, features); }
};

std::string rule_of(const Manifest& m) {
  try {
    m.build();
  } catch (const DatasetError& e) {
    return e.rule();
  }
  return "";
}

TEST(Manifest, ValidManifestBuilds) {
  const Dataset d = Manifest().build();
  EXPECT_EQ(d.universe.seen().size(), 3u);
  EXPECT_EQ(d.universe.unseen(), (std::vector<Pair>{{1, 0}}));
  EXPECT_EQ(d.images_in(Split::Test).size(), 2u);
}

TEST(Manifest, TrainPairListedAsUnseenIsRejected) {
  Manifest m;
  m.pairs.test_unseen.push_back({0, 1});
  EXPECT_EQ(rule_of(m), "split-disjoint");
}

TEST(Manifest, SeenEvaluationPairMustBeTrained) {
  Manifest m;
  m.pairs.test_seen.push_back({1, 0});
  m.pairs.test_unseen.clear();
  m.images.pop_back();
  m.features = Tensor<float>({4, 3}, 0.5f);
  EXPECT_EQ(rule_of(m), "seen-subset");
}

TEST(Manifest, OutOfRangePairIsRejected) {
  Manifest m;
  m.pairs.train_seen.push_back({2, 0});
  EXPECT_EQ(rule_of(m), "vocabulary");
}

TEST(Manifest, ImageOffsetBeyondFeaturesIsRejected) {
  Manifest m;
  m.images[0].offset = 9;
  EXPECT_EQ(rule_of(m), "feature-count");
}

TEST(Manifest, ImageLabelOutsideItsSplitIsRejected) {
  Manifest m;
  m.images[0].pair = {1, 0};  // unseen pair on a training image
  EXPECT_EQ(rule_of(m), "image-label");
}

TEST(Manifest, NonFiniteFeatureIsRejected) {
  Manifest m;
  m.features.at(2, 1) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_EQ(rule_of(m), "feature-finite");
}

TEST(FeatureFile, RoundTripIsBitIdentical) {
  test::TempDir dir("features");
  std::mt19937_64 gen(1);
  const Tensor<float> f = test::uniform({7, 5}, gen).cast<float>();
  write_feature_file(dir / "f.bin", f);
  EXPECT_EQ(std::filesystem::file_size(dir / "f.bin"), kFeatureHeaderBytes + 7 * 5 * 4);
  const Tensor<float> back = read_feature_file(dir / "f.bin");
  EXPECT_EQ(back.shape(), (Shape{7, 5}));
  EXPECT_EQ(back, f);
}

TEST(FeatureFile, WrongLengthReportsBothSizes) {
  test::TempDir dir("features");
  write_feature_file(dir / "f.bin", Tensor<float>({3, 4}, 1.0f));
  std::filesystem::resize_file(dir / "f.bin", kFeatureHeaderBytes + 40);
  try {
    read_feature_file(dir / "f.bin");
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.rule(), "feature-length");
    const std::string msg = e.what();
    EXPECT_NE(msg.find("64"), std::string::npos) << msg;  // 16 + 48 expected
    EXPECT_NE(msg.find("56"), std::string::npos) << msg;  // actual
  }
}

TEST(FeatureFile, BadMagicIsRejected) {
  test::TempDir dir("features");
  std::ofstream(dir / "f.bin", std::ios::binary) << "NOPE0000000000000000";
  try {
    read_feature_file(dir / "f.bin");
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.rule(), "feature-header");
  }
}

TEST(FeatureFile, CsvReads) {
  test::TempDir dir("csv");
  std::ofstream(dir / "f.csv") << "1,2.5,-3\n4,5,6\n";
  const Tensor<float> f = read_feature_csv(dir / "f.csv");
  EXPECT_EQ(f.shape(), (Shape{2, 3}));
  EXPECT_EQ(f.at(0, 1), 2.5f);
  std::ofstream(dir / "bad.csv") << "1,2\n3\n";
  EXPECT_THROW(read_feature_csv(dir / "bad.csv"), DatasetError);
}

TEST(ManifestFile, SaveLoadRoundTrip) {
  test::TempDir dir("manifest");
  const Dataset d = test::tiny_synthetic(4, 4, 3, 8);
  save_dataset(d, dir / "m.json", dir / "f.bin");
  const Dataset back = load_dataset(dir / "m.json", dir / "f.bin");
  EXPECT_EQ(manifest_to_json(back), manifest_to_json(d));
  EXPECT_EQ(back.features, d.features);
  save_dataset(back, dir / "m2.json", dir / "f2.bin");
  EXPECT_EQ(slurp(dir / "m.json"), slurp(dir / "m2.json"));
  EXPECT_EQ(slurp(dir / "f.bin"), slurp(dir / "f2.bin"));
}

TEST(ManifestFile, MalformedJsonIsTyped) {
  test::TempDir dir("manifest");
  write_feature_file(dir / "f.bin", Tensor<float>({1, 2}, 0.0f));
  std::ofstream(dir / "m.json") << "{ not json";
  try {
    load_dataset(dir / "m.json", dir / "f.bin");
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.rule(), "manifest-format");
  }
  EXPECT_THROW(load_dataset(dir / "missing.json", dir / "f.bin"), DatasetError);
}

// ---------------------------------------------------------------- synthetic

TEST(Synthetic, DefaultWorldIsByteDeterministic) {
  test::TempDir dir("synthetic");
  const SyntheticWorldConfig c;
  save_dataset(generate_synthetic(c), dir / "a.json", dir / "a.bin");
  save_dataset(generate_synthetic(c), dir / "b.json", dir / "b.bin");
  EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "b.json"));
  EXPECT_EQ(slurp(dir / "a.bin"), slurp(dir / "b.bin"));
  SyntheticWorldConfig other = c;
  other.seed = 1;
  save_dataset(generate_synthetic(other), dir / "c.json", dir / "c.bin");
  EXPECT_NE(slurp(dir / "a.bin"), slurp(dir / "c.bin"));
}

TEST(Synthetic, DefaultWorldShape) {
  const Dataset d = generate_synthetic(SyntheticWorldConfig{});
  EXPECT_EQ(d.universe.num_attributes(), 8u);
  EXPECT_EQ(d.universe.num_objects(), 8u);
  EXPECT_EQ(d.feature_dim(), 64u);
  EXPECT_EQ(d.universe.unseen().size(), 16u);
  EXPECT_EQ(d.universe.seen().size() + d.universe.unseen().size(), 64u);
  EXPECT_EQ(d.images.size(), 64u * 20u);
  EXPECT_EQ(d.universe.candidates().size(), 64u);
}

TEST(Synthetic, ZeroUnseenFractionIsSupervised) {
  SyntheticWorldConfig c;
  c.num_attributes = 3;
  c.num_objects = 4;
  c.unseen_fraction = 0;
  const Dataset d = generate_synthetic(c);
  EXPECT_TRUE(d.universe.unseen().empty());
  EXPECT_EQ(d.universe.seen().size(), 12u);
}

TEST(Synthetic, NoiselessImagesOfAPairAreIdentical) {
  SyntheticWorldConfig c;
  c.num_attributes = 3;
  c.num_objects = 3;
  c.feature_dim = 8;
  c.noise_scale = 0;
  c.images_per_pair = 5;
  const Dataset d = generate_synthetic(c);
  std::map<Pair, std::vector<float>> first;
  for (const ImageRecord& r : d.images) {
    std::vector<float> row(d.features.data().begin() + r.offset * 8, d.features.data().begin() + (r.offset + 1) * 8);
    const auto [it, inserted] = first.emplace(r.pair, row);
    if (!inserted) EXPECT_EQ(it->second, row);
  }
}

TEST(Synthetic, EveryPrimitiveAppearsInASeenPair) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SyntheticWorldConfig c;
    c.num_attributes = 3 + seed % 4;
    c.num_objects = 2 + seed % 5;
    c.unseen_fraction = 0.4;
    c.images_per_pair = 3;
    c.feature_dim = 4;
    c.seed = seed;
    const Dataset d = generate_synthetic(c);
    std::set<std::uint32_t> attrs, objs;
    for (Pair p : d.universe.seen()) {
      attrs.insert(p.attr);
      objs.insert(p.obj);
    }
    EXPECT_EQ(attrs.size(), c.num_attributes);
    EXPECT_EQ(objs.size(), c.num_objects);
    EXPECT_EQ(d.universe.seen().size() + d.universe.unseen().size(), c.num_attributes * c.num_objects);
  }
}

TEST(Synthetic, InvalidConfigsAreRejected) {
  SyntheticWorldConfig c;
  c.unseen_fraction = 1.5;
  EXPECT_THROW(generate_synthetic(c), ConfigError);
  c = SyntheticWorldConfig{};
  c.num_attributes = 1;
  EXPECT_THROW(generate_synthetic(c), ConfigError);
  c = SyntheticWorldConfig{};
  c.num_attributes = 2;
  c.num_objects = 2;
  c.unseen_fraction = 0.9;  // 4 pairs, 4 unseen requested
  EXPECT_THROW(generate_synthetic(c), ConfigError);
}

}  // namespace
}  // namespace bmp
