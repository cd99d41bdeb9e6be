#pragma once

// Datasets for the experiments: MNIST IDX files (plain or gzip), CIFAR-10
// binary batches, a two-moons generator and stratified subsetting.
//
// Inputs are scaled to [0, 1]. Targets use +-1 encoding: one +1 per row for
// multi-class data, or a single +-1 column for binary tasks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <zlib.h>

#include "er/errors.hpp"
#include "er/linalg.hpp"
#include "er/network.hpp"

namespace er {

struct Dataset {
  Matrix x;
  Matrix y_hat;
  std::vector<int> labels;
  std::string name;

  Index rows() const noexcept { return x.rows(); }
  Index classes() const noexcept { return y_hat.cols() == 1 ? 2 : y_hat.cols(); }

  /// Throws ConfigError when any documented invariant is broken.
  void validate() const {
    if (x.rows() != y_hat.rows() || static_cast<std::size_t>(x.rows()) != labels.size()) {
      throw ConfigError("dataset '" + name + "': row counts of x, y_hat and labels differ");
    }
    if (x.size() > 0 && (x.minCoeff() < 0.0 || x.maxCoeff() > 1.0)) {
      throw ConfigError("dataset '" + name + "': inputs outside [0, 1]");
    }
    const auto decoded = predict_classes(y_hat);
    for (Index r = 0; r < y_hat.rows(); ++r) {
      int plus = 0;
      for (Index c = 0; c < y_hat.cols(); ++c) {
        const double v = y_hat(r, c);
        if (v != 1.0 && v != -1.0) throw ConfigError("dataset '" + name + "': target not +-1");
        plus += v == 1.0;
      }
      if (y_hat.cols() > 1 && plus != 1) {
        throw ConfigError("dataset '" + name + "': row " + std::to_string(r) +
                          " does not have exactly one +1 target");
      }
      if (decoded[static_cast<std::size_t>(r)] != labels[static_cast<std::size_t>(r)]) {
        throw ConfigError("dataset '" + name + "': label disagrees with target row " +
                          std::to_string(r));
      }
    }
  }
};

struct DatasetSplit {
  Dataset train;
  Dataset test;
};

/// Rows of -1 with a +1 at each label's index.
inline Matrix encode_pm1(std::span<const int> labels, int classes) {
  if (classes < 2) throw ConfigError("encode_pm1: need at least two classes");
  Matrix y = Matrix::Constant(static_cast<Index>(labels.size()), classes, -1.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw ConfigError("encode_pm1: label " + std::to_string(labels[i]) + " out of range");
    }
    y(static_cast<Index>(i), labels[i]) = 1.0;
  }
  return y;
}

inline Dataset make_dataset(Matrix x, std::vector<int> labels, int classes, std::string name) {
  Dataset d;
  d.y_hat = encode_pm1(labels, classes);
  d.x = std::move(x);
  d.labels = std::move(labels);
  d.name = std::move(name);
  return d;
}

/// Collapses a two-class dataset to a single +-1 output column
/// (+1 for class 1).
inline Dataset binary_targets(const Dataset& d) {
  if (d.y_hat.cols() != 2) throw ConfigError("binary_targets: dataset is not two-class");
  Dataset out = d;
  out.y_hat = d.y_hat.col(1);
  return out;
}

/// Appends a constant-1 input column, standing in for bias terms.
inline Dataset with_bias_column(const Dataset& d) {
  Dataset out = d;
  out.x.conservativeResize(Eigen::NoChange, d.x.cols() + 1);
  out.x.col(d.x.cols()).setOnes();
  return out;
}

inline Dataset take_rows(const Dataset& d, const std::vector<Index>& rows, std::string name) {
  Dataset out;
  out.x = d.x(rows, Eigen::all);
  out.y_hat = d.y_hat(rows, Eigen::all);
  out.labels.reserve(rows.size());
  for (Index r : rows) out.labels.push_back(d.labels[static_cast<std::size_t>(r)]);
  out.name = std::move(name);
  return out;
}

// ---------------------------------------------------------------------------
// Byte-level parsers

namespace detail {

inline std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t at) {
  return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
         (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
}

inline std::string hex32(std::uint32_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s = "0x";
  for (int shift = 28; shift >= 0; shift -= 4) s += digits[(v >> shift) & 0xF];
  return s;
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct IdxImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::span<const std::uint8_t> pixels;  // count * rows * cols bytes
};

/// Validates an IDX3 image file held in memory. The payload must match the
/// header exactly; the returned span aliases `bytes`.
inline IdxImages parse_idx_images(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t header = 16;
  if (bytes.size() < 4) throw FormatError("IDX images: truncated magic", bytes.size());
  const auto magic = detail::read_be32(bytes, 0);
  if (magic != kIdxImageMagic) {
    throw FormatError("IDX images: bad magic " + detail::hex32(magic) + ", expected " +
                          detail::hex32(kIdxImageMagic),
                      0);
  }
  if (bytes.size() < header) throw FormatError("IDX images: truncated header", bytes.size());
  IdxImages img;
  img.count = detail::read_be32(bytes, 4);
  img.rows = detail::read_be32(bytes, 8);
  img.cols = detail::read_be32(bytes, 12);
  if (img.count == 0) throw FormatError("IDX images: zero image count", 4);
  if (img.rows == 0 || img.cols == 0) throw FormatError("IDX images: zero image dimension", 8);
  const std::uint64_t expected = std::uint64_t{img.count} * img.rows * img.cols;
  const std::uint64_t actual = bytes.size() - header;
  if (actual < expected) {
    throw FormatError("IDX images: truncated payload, header promises " +
                          std::to_string(expected) + " pixel bytes but " +
                          std::to_string(actual) + " remain",
                      bytes.size());
  }
  if (actual > expected) {
    throw FormatError("IDX images: " + std::to_string(actual - expected) +
                          " trailing bytes after the last image",
                      header + static_cast<std::size_t>(expected));
  }
  img.pixels = bytes.subspan(header);
  return img;
}

/// Validates an IDX1 label file; every label must be a digit 0..9.
inline std::span<const std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t header = 8;
  if (bytes.size() < 4) throw FormatError("IDX labels: truncated magic", bytes.size());
  const auto magic = detail::read_be32(bytes, 0);
  if (magic != kIdxLabelMagic) {
    throw FormatError("IDX labels: bad magic " + detail::hex32(magic) + ", expected " +
                          detail::hex32(kIdxLabelMagic),
                      0);
  }
  if (bytes.size() < header) throw FormatError("IDX labels: truncated header", bytes.size());
  const std::uint64_t count = detail::read_be32(bytes, 4);
  if (count == 0) throw FormatError("IDX labels: zero label count", 4);
  const std::uint64_t actual = bytes.size() - header;
  if (actual < count) {
    throw FormatError("IDX labels: truncated payload, header promises " + std::to_string(count) +
                          " labels but " + std::to_string(actual) + " bytes remain",
                      bytes.size());
  }
  if (actual > count) {
    throw FormatError("IDX labels: trailing bytes after the last label",
                      header + static_cast<std::size_t>(count));
  }
  const auto labels = bytes.subspan(header);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 9) {
      throw FormatError("IDX labels: label " + std::to_string(labels[i]) + " is not a digit",
                        header + i);
    }
  }
  return labels;
}

/// Builds a 10-class dataset from in-memory IDX image and label files.
inline Dataset mnist_from_idx(std::span<const std::uint8_t> image_bytes,
                              std::span<const std::uint8_t> label_bytes, std::string name) {
  const IdxImages img = parse_idx_images(image_bytes);
  const auto labels = parse_idx_labels(label_bytes);
  if (labels.size() != img.count) {
    throw FormatError("IDX labels: count " + std::to_string(labels.size()) +
                          " does not match " + std::to_string(img.count) + " images",
                      4);
  }
  const Index features = static_cast<Index>(img.rows) * img.cols;
  Matrix x(static_cast<Index>(img.count), features);
  for (Index i = 0; i < x.size(); ++i) {
    x.data()[i] = static_cast<double>(img.pixels[static_cast<std::size_t>(i)]) / 255.0;
  }
  std::vector<int> ints(labels.begin(), labels.end());
  return make_dataset(std::move(x), std::move(ints), 10, std::move(name));
}

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarPixels = 3072;

/// Parses CIFAR-10 binary records: one label byte then 1024 R, 1024 G and
/// 1024 B bytes. Pixel order is kept channel-major.
inline Dataset parse_cifar10(std::span<const std::uint8_t> bytes, std::string name) {
  if (bytes.empty()) throw FormatError("CIFAR-10: empty batch file", 0);
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError("CIFAR-10: file length " + std::to_string(bytes.size()) +
                          " is not a multiple of 3073; last record is incomplete",
                      bytes.size() / kCifarRecordBytes * kCifarRecordBytes);
  }
  const std::size_t records = bytes.size() / kCifarRecordBytes;
  Matrix x(static_cast<Index>(records), static_cast<Index>(kCifarPixels));
  std::vector<int> labels(records);
  for (std::size_t r = 0; r < records; ++r) {
    const std::size_t at = r * kCifarRecordBytes;
    if (bytes[at] > 9) {
      throw FormatError("CIFAR-10: label byte " + std::to_string(bytes[at]) + " out of range",
                        at);
    }
    labels[r] = bytes[at];
    for (std::size_t p = 0; p < kCifarPixels; ++p) {
      x(static_cast<Index>(r), static_cast<Index>(p)) =
          static_cast<double>(bytes[at + 1 + p]) / 255.0;
    }
  }
  return make_dataset(std::move(x), std::move(labels), 10, std::move(name));
}

// ---------------------------------------------------------------------------
// Files

/// Reads a whole file, transparently inflating gzip content.
inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::uint8_t buffer[1 << 16];
  for (;;) {
    const int n = gzread(f, buffer, sizeof(buffer));
    if (n < 0) {
      int code = 0;
      const std::string msg = gzerror(f, &code);
      gzclose(f);
      throw FormatError(path.string() + ": " + msg, out.size());
    }
    if (n == 0) break;
    out.insert(out.end(), buffer, buffer + n);
  }
  gzclose(f);
  return out;
}

namespace detail {

inline std::filesystem::path find_idx(const std::filesystem::path& dir, const std::string& stem,
                                      const std::string& kind) {
  for (const std::string& name : {stem + "-" + kind + "-ubyte", stem + "." + kind + "-ubyte"}) {
    for (const char* suffix : {"", ".gz"}) {
      const auto candidate = dir / (name + suffix);
      if (std::filesystem::exists(candidate)) return candidate;
    }
  }
  throw Error("MNIST file " + stem + "-" + kind + "-ubyte[.gz] not found in " + dir.string());
}

inline Dataset load_mnist_split(const std::filesystem::path& dir, const std::string& split,
                                const std::string& name) {
  const auto images = find_idx(dir, split + "-images", "idx3");
  const auto labels = find_idx(dir, split + "-labels", "idx1");
  const auto image_bytes = read_file_bytes(images);
  const auto label_bytes = read_file_bytes(labels);
  try {
    return mnist_from_idx(image_bytes, label_bytes, name);
  } catch (const FormatError& e) {
    throw FormatError(dir.string() + "/" + split + ": " + e.what(), e.offset());
  }
}

}  // namespace detail

/// Loads train-{images,labels} and t10k-{images,labels} from `dir`.
inline DatasetSplit load_mnist(const std::filesystem::path& dir) {
  return {detail::load_mnist_split(dir, "train", "mnist-train"),
          detail::load_mnist_split(dir, "t10k", "mnist-test")};
}

/// Loads data_batch_1..5.bin and test_batch.bin from `dir`.
inline DatasetSplit load_cifar10(const std::filesystem::path& dir) {
  std::vector<std::uint8_t> train_bytes;
  for (int i = 1; i <= 5; ++i) {
    const auto path = dir / ("data_batch_" + std::to_string(i) + ".bin");
    const auto bytes = read_file_bytes(path);
    try {
      parse_cifar10(bytes, path.filename().string());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ": " + e.what(), e.offset());
    }
    train_bytes.insert(train_bytes.end(), bytes.begin(), bytes.end());
  }
  const auto test_path = dir / "test_batch.bin";
  const auto test_bytes = read_file_bytes(test_path);
  DatasetSplit split;
  split.train = parse_cifar10(train_bytes, "cifar10-train");
  try {
    split.test = parse_cifar10(test_bytes, "cifar10-test");
  } catch (const FormatError& e) {
    throw FormatError(test_path.string() + ": " + e.what(), e.offset());
  }
  return split;
}

// ---------------------------------------------------------------------------
// Synthetic data and sampling

/// Two interleaved half circles (outer: class 0, inner: class 1) with
/// Gaussian noise, features min-max scaled into [0, 1], rows shuffled.
inline Dataset synth_two_moons(Index n, double noise, std::uint64_t seed) {
  if (n < 2 || n % 2 != 0) {
    throw ConfigError("synth_two_moons: n must be an even number >= 2, got " + std::to_string(n));
  }
  if (!(noise >= 0.0)) throw ConfigError("synth_two_moons: noise must be non-negative");
  const Index half = n / 2;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix pts(n, 2);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < half; ++i) {
    const double t = half > 1 ? std::numbers::pi * static_cast<double>(i) / (half - 1) : 0.0;
    pts(i, 0) = std::cos(t);
    pts(i, 1) = std::sin(t);
    pts(half + i, 0) = 1.0 - std::cos(t);
    pts(half + i, 1) = 0.5 - std::sin(t);
    labels[static_cast<std::size_t>(i)] = 0;
    labels[static_cast<std::size_t>(half + i)] = 1;
  }
  if (noise > 0.0) {
    for (Index i = 0; i < pts.size(); ++i) pts.data()[i] += noise * gauss(rng);
  }
  for (Index c = 0; c < 2; ++c) {
    const double lo = pts.col(c).minCoeff();
    const double hi = pts.col(c).maxCoeff();
    pts.col(c) = ((pts.col(c).array() - lo) / (hi - lo)).matrix();
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  Dataset all = make_dataset(std::move(pts), std::move(labels), 2, "two-moons");
  return take_rows(all, order, "two-moons");
}

/// Seeded class-stratified sample of n rows. Each class receives its
/// proportional share, rounding remainders to the largest fractions.
inline Dataset subset(const Dataset& d, Index n, std::uint64_t seed) {
  if (n < 1 || n > d.rows()) {
    throw ConfigError("subset: n = " + std::to_string(n) + " outside [1, " +
                      std::to_string(d.rows()) + "]");
  }
  std::mt19937_64 rng(seed);
  const int classes = static_cast<int>(d.classes());
  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < d.labels.size(); ++i) {
    by_class[static_cast<std::size_t>(d.labels[i])].push_back(static_cast<Index>(i));
  }

  std::vector<Index> quota(by_class.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  Index assigned = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const double exact = static_cast<double>(n) * static_cast<double>(by_class[c].size()) /
                         static_cast<double>(d.rows());
    quota[c] = static_cast<Index>(std::floor(exact));
    assigned += quota[c];
    remainders.emplace_back(-(exact - std::floor(exact)), c);
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t k = 0; assigned < n; ++k) {
    const std::size_t c = remainders[k % remainders.size()].second;
    if (quota[c] < static_cast<Index>(by_class[c].size())) {
      ++quota[c];
      ++assigned;
    }
  }

  std::vector<Index> chosen;
  chosen.reserve(static_cast<std::size_t>(n));
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
    chosen.insert(chosen.end(), by_class[c].begin(), by_class[c].begin() + quota[c]);
  }
  std::shuffle(chosen.begin(), chosen.end(), rng);
  return take_rows(d, chosen, d.name + "-subset");
}

}  // namespace er
