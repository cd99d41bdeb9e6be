#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include <gtest/gtest.h>
#include <zlib.h>

#include "er/data.hpp"
#include "fuzz.hpp"

using er::Index;
using er::Matrix;

namespace {

const std::filesystem::path kSample = std::filesystem::path(ER_SOURCE_DIR) / "data" / "mnist-sample";

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("er_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_bytes(const std::filesystem::path& p, const fuzz::Bytes& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST(Encoding, LabelThreeAndRoundTrip) {
  const std::vector<int> labels{3};
  const Matrix y = er::encode_pm1(labels, 10);
  for (Index c = 0; c < 10; ++c) EXPECT_EQ(y(0, c), c == 3 ? 1.0 : -1.0);
  std::vector<int> all(10);
  std::iota(all.begin(), all.end(), 0);
  EXPECT_EQ(er::predict_classes(er::encode_pm1(all, 10)), all);
}

TEST(Idx, ParsesHandBuiltFile) {
  std::mt19937_64 rng(1);
  const auto img = fuzz::idx_images(2, 2, 3, rng);
  const auto lab = fuzz::idx_labels({7, 0});
  const auto d = er::mnist_from_idx(img, lab, "tiny");
  EXPECT_EQ(d.rows(), 2);
  EXPECT_EQ(d.x.cols(), 6);
  EXPECT_EQ(d.labels, (std::vector<int>{7, 0}));
  EXPECT_DOUBLE_EQ(d.x(1, 5), img[16 + 11] / 255.0);
  EXPECT_NO_THROW(d.validate());
}

TEST(Idx, SpecificErrorsCarryOffsets) {
  std::mt19937_64 rng(2);
  auto img = fuzz::idx_images(3, 2, 2, rng);
  img[3] = 0x01;
  try {
    er::parse_idx_images(img);
    FAIL();
  } catch (const er::FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
  auto labels = fuzz::idx_labels({1, 2, 3});
  labels[9] = 12;
  try {
    er::parse_idx_labels(labels);
    FAIL();
  } catch (const er::FormatError& e) {
    EXPECT_EQ(e.offset(), 9u);
  }
  const auto good_img = fuzz::idx_images(3, 2, 2, rng);
  try {
    er::mnist_from_idx(good_img, fuzz::idx_labels({1, 2}), "x");
    FAIL();
  } catch (const er::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("does not match"), std::string::npos);
  }
}

TEST(Idx, FuzzedImagesRejected) {
  const auto t = fuzz::idx_images_campaign(100, 10);
  EXPECT_TRUE(t.all_good()) << t.first_escape << " " << t.rejected << "/" << t.positioned;
}

TEST(Idx, FuzzedLabelsRejected) {
  const auto t = fuzz::idx_labels_campaign(100, 11);
  EXPECT_TRUE(t.all_good()) << t.first_escape;
}

TEST(Cifar, ParsesRecordsChannelMajor) {
  std::mt19937_64 rng(3);
  auto bytes = fuzz::cifar_records(2, rng);
  bytes[er::kCifarRecordBytes] = 9;
  const auto d = er::parse_cifar10(bytes, "tiny");
  EXPECT_EQ(d.x.rows(), 2);
  EXPECT_EQ(d.x.cols(), 3072);
  EXPECT_EQ(d.labels[1], 9);
  EXPECT_EQ(d.y_hat(1, 9), 1.0);
  EXPECT_DOUBLE_EQ(d.x(0, 1024), bytes[1 + 1024] / 255.0);
}

TEST(Cifar, ShortFinalRecordRejected) {
  std::mt19937_64 rng(4);
  auto bytes = fuzz::cifar_records(2, rng);
  bytes.pop_back();
  try {
    er::parse_cifar10(bytes, "short");
    FAIL();
  } catch (const er::FormatError& e) {
    EXPECT_EQ(e.offset(), er::kCifarRecordBytes);
  }
}

TEST(Cifar, FuzzedRecordsRejected) {
  const auto t = fuzz::cifar_campaign(100, 12);
  EXPECT_TRUE(t.all_good()) << t.first_escape;
}

TEST(Checkpoint, FuzzedCheckpointsRejected) {
  const auto t = fuzz::checkpoint_campaign(100, 13);
  EXPECT_TRUE(t.all_good()) << t.first_escape;
}

TEST(Files, ReadsPlainAndGzipAndFindsBothNamings) {
  const auto dir = scratch_dir("files");
  std::mt19937_64 rng(5);
  const auto img = fuzz::idx_images(4, 2, 2, rng);
  const auto lab = fuzz::idx_labels({1, 2, 3, 4});
  write_bytes(dir / "train-images-idx3-ubyte", img);
  write_bytes(dir / "train-labels-idx1-ubyte", lab);
  gzFile gz = gzopen((dir / "t10k-images.idx3-ubyte.gz").string().c_str(), "wb");
  gzwrite(gz, img.data(), static_cast<unsigned>(img.size()));
  gzclose(gz);
  write_bytes(dir / "t10k-labels.idx1-ubyte", lab);
  const auto split = er::load_mnist(dir);
  EXPECT_EQ(split.train.x, split.test.x);
  EXPECT_EQ(split.test.labels, (std::vector<int>{1, 2, 3, 4}));
  std::filesystem::remove(dir / "t10k-labels.idx1-ubyte");
  EXPECT_THROW(er::load_mnist(dir), er::Error);
  std::filesystem::remove_all(dir);
}

TEST(Files, CifarDirectoryLoad) {
  const auto dir = scratch_dir("cifar");
  std::mt19937_64 rng(6);
  for (int i = 1; i <= 5; ++i) write_bytes(dir / ("data_batch_" + std::to_string(i) + ".bin"), fuzz::cifar_records(2, rng));
  write_bytes(dir / "test_batch.bin", fuzz::cifar_records(3, rng));
  const auto split = er::load_cifar10(dir);
  EXPECT_EQ(split.train.rows(), 10);
  EXPECT_EQ(split.test.rows(), 3);
  std::filesystem::remove_all(dir);
}

TEST(Files, BundledMnistSample) {
  const auto split = er::load_mnist(kSample);
  EXPECT_EQ(split.train.rows(), 8000);
  EXPECT_EQ(split.test.rows(), 2000);
  EXPECT_EQ(split.train.x.cols(), 784);
  EXPECT_EQ(split.train.y_hat.cols(), 10);
  EXPECT_NO_THROW(split.train.validate());
  EXPECT_NO_THROW(split.test.validate());
}

TEST(Moons, DeterministicAndWellFormed) {
  const auto a = er::synth_two_moons(400, 0.1, 7);
  const auto b = er::synth_two_moons(400, 0.1, 7);
  const auto c = er::synth_two_moons(400, 0.1, 8);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.x, c.x);
  EXPECT_NO_THROW(a.validate());
  EXPECT_GE(a.x.minCoeff(), 0.0);
  EXPECT_LE(a.x.maxCoeff(), 1.0);
  EXPECT_EQ(std::count(a.labels.begin(), a.labels.end(), 1), 200);
  EXPECT_THROW(er::synth_two_moons(7, 0.1, 0), er::ConfigError);
  EXPECT_THROW(er::synth_two_moons(0, 0.1, 0), er::ConfigError);
}

// Noiseless arcs: each point's nearest same-class neighbour is closer than
// any point of the other class.
TEST(Moons, NoiselessArcsAreSeparable) {
  const auto d = er::synth_two_moons(100, 0.0, 1);
  double closest_cross = INFINITY;
  double farthest_same = 0.0;
  for (Index i = 0; i < d.rows(); ++i) {
    double nearest_same = INFINITY;
    for (Index j = 0; j < d.rows(); ++j) {
      if (i == j) continue;
      const double dist = (d.x.row(i) - d.x.row(j)).norm();
      if (d.labels[i] != d.labels[j]) closest_cross = std::min(closest_cross, dist);
      else nearest_same = std::min(nearest_same, dist);
    }
    farthest_same = std::max(farthest_same, nearest_same);
  }
  EXPECT_GT(closest_cross, farthest_same);
}

TEST(Subset, StratifiedDeterministicAndBounded) {
  const auto split = er::load_mnist(kSample);
  const auto s = er::subset(split.train, 1000, 3);
  EXPECT_EQ(s.rows(), 1000);
  std::map<int, int> counts, full;
  for (int l : s.labels) ++counts[l];
  for (int l : split.train.labels) ++full[l];
  for (const auto& [label, n] : counts) {
    const double expected = 1000.0 * full[label] / split.train.rows();
    EXPECT_LE(std::abs(n - expected), 1.0) << label;
  }
  EXPECT_EQ(er::subset(split.train, 1000, 3).x, s.x);
  EXPECT_THROW(er::subset(split.train, 0, 3), er::ConfigError);
  EXPECT_THROW(er::subset(split.train, 8001, 3), er::ConfigError);

  const auto moons = er::synth_two_moons(40, 0.1, 2);
  const auto perm = er::subset(moons, 40, 9);
  auto a = moons.labels, b = perm.labels;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
  EXPECT_NEAR(perm.x.sum(), moons.x.sum(), 1e-12);
}

TEST(Dataset, ValidateCatchesBrokenInvariants) {
  auto d = er::make_dataset(er::make_matrix({{0.2, 0.4}}), {1}, 3, "one");
  EXPECT_NO_THROW(d.validate());
  auto bad = d;
  bad.x(0, 0) = 1.5;
  EXPECT_THROW(bad.validate(), er::ConfigError);
  bad = d;
  bad.y_hat(0, 0) = 1.0;
  EXPECT_THROW(bad.validate(), er::ConfigError);
  bad = d;
  bad.labels[0] = 2;
  EXPECT_THROW(bad.validate(), er::ConfigError);
}
