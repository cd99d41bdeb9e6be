#pragma once

// Structured corruption of well-formed dataset and checkpoint files. Every
// mutation breaks the format (magic, header fields, record framing, label
// range, truncation or trailing bytes), so a correct parser must reject it
// with a FormatError whose offset lies inside the mutated buffer.

#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "er/data.hpp"
#include "er/errors.hpp"
#include "er/network.hpp"

namespace fuzz {

using Bytes = std::vector<std::uint8_t>;

inline void put_be32(Bytes& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

inline Bytes idx_images(std::uint32_t count, std::uint32_t rows, std::uint32_t cols, std::mt19937_64& rng) {
  Bytes b;
  put_be32(b, 0x803);
  put_be32(b, count);
  put_be32(b, rows);
  put_be32(b, cols);
  for (std::uint64_t i = 0; i < std::uint64_t{count} * rows * cols; ++i) b.push_back(static_cast<std::uint8_t>(rng()));
  return b;
}

inline Bytes idx_labels(const std::vector<int>& labels) {
  Bytes b;
  put_be32(b, 0x801);
  put_be32(b, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) b.push_back(static_cast<std::uint8_t>(l));
  return b;
}

inline Bytes cifar_records(std::size_t n, std::mt19937_64& rng) {
  Bytes b;
  for (std::size_t r = 0; r < n; ++r) {
    b.push_back(static_cast<std::uint8_t>(rng() % 10));
    for (std::size_t p = 0; p < er::kCifarPixels; ++p) b.push_back(static_cast<std::uint8_t>(rng()));
  }
  return b;
}

inline void flip_bit(Bytes& b, std::size_t lo, std::size_t hi, std::mt19937_64& rng) {
  const std::size_t at = lo + rng() % (hi - lo);
  b[at] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
}

inline void truncate(Bytes& b, std::mt19937_64& rng) { b.resize(rng() % b.size()); }

inline void append(Bytes& b, std::mt19937_64& rng) {
  const std::size_t extra = 1 + rng() % 16;
  for (std::size_t i = 0; i < extra; ++i) b.push_back(static_cast<std::uint8_t>(rng()));
}

inline Bytes mutate_idx_images(const Bytes& good, std::mt19937_64& rng) {
  Bytes b = good;
  switch (rng() % 5) {
    case 0: flip_bit(b, 0, 4, rng); break;
    case 1: flip_bit(b, 4, 8, rng); break;
    case 2: flip_bit(b, 8, 16, rng); break;
    case 3: truncate(b, rng); break;
    default: append(b, rng); break;
  }
  return b;
}

inline Bytes mutate_idx_labels(const Bytes& good, std::mt19937_64& rng) {
  Bytes b = good;
  switch (rng() % 5) {
    case 0: flip_bit(b, 0, 4, rng); break;
    case 1: flip_bit(b, 4, 8, rng); break;
    case 2: b[8 + rng() % (b.size() - 8)] = static_cast<std::uint8_t>(10 + rng() % 246); break;
    case 3: truncate(b, rng); break;
    default: append(b, rng); break;
  }
  return b;
}

inline Bytes mutate_cifar(const Bytes& good, std::mt19937_64& rng) {
  Bytes b = good;
  switch (rng() % 3) {
    case 0: {
      std::size_t len;
      do len = rng() % b.size(); while (len != 0 && len % er::kCifarRecordBytes == 0);
      b.resize(len);
      break;
    }
    case 1: {
      std::size_t extra;
      do extra = 1 + rng() % (2 * er::kCifarRecordBytes); while (extra % er::kCifarRecordBytes == 0);
      for (std::size_t i = 0; i < extra; ++i) b.push_back(static_cast<std::uint8_t>(rng()));
      break;
    }
    default: {
      const std::size_t record = rng() % (b.size() / er::kCifarRecordBytes);
      b[record * er::kCifarRecordBytes] = static_cast<std::uint8_t>(10 + rng() % 246);
      break;
    }
  }
  return b;
}

inline Bytes mutate_checkpoint(const Bytes& good, std::mt19937_64& rng) {
  Bytes b = good;
  switch (rng() % 6) {
    case 0: flip_bit(b, 0, 6, rng); break;
    case 1: {
      // dimension count: any other value in 0..15
      std::uint32_t n;
      std::memcpy(&n, b.data() + 14, 4);
      std::uint32_t m;
      do m = static_cast<std::uint32_t>(rng() % 16); while (m == n);
      std::memcpy(b.data() + 14, &m, 4);
      break;
    }
    case 2: {
      std::uint32_t n;
      std::memcpy(&n, b.data() + 14, 4);
      const std::size_t at = 18 + 4 * (rng() % n);
      std::uint32_t d;
      std::memcpy(&d, b.data() + at, 4);
      std::uint32_t m;
      do m = static_cast<std::uint32_t>(rng() % 64); while (m == d);
      std::memcpy(b.data() + at, &m, 4);
      break;
    }
    case 3: {
      std::uint32_t n;
      std::memcpy(&n, b.data() + 14, 4);
      const std::size_t weights_at = 18 + 4 * n;
      const std::size_t at = weights_at + 8 * (rng() % ((b.size() - weights_at) / 8));
      const double bad = rng() % 2 ? std::numeric_limits<double>::quiet_NaN()
                                   : std::numeric_limits<double>::infinity();
      std::memcpy(b.data() + at, &bad, 8);
      break;
    }
    case 4: truncate(b, rng); break;
    default: append(b, rng); break;
  }
  return b;
}

struct Tally {
  int total = 0;
  int rejected = 0;
  int positioned = 0;
  std::string first_escape;

  bool all_good() const { return total > 0 && rejected == total && positioned == total; }
};

// Runs `parse` on `count` mutations. A rejection is positioned when its
// offset lies within the buffer and the message carries it.
inline Tally run(int count, std::uint64_t seed, const Bytes& good,
                 const std::function<Bytes(const Bytes&, std::mt19937_64&)>& mutate,
                 const std::function<void(const Bytes&)>& parse) {
  Tally t;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < count; ++i) {
    const Bytes bad = mutate(good, rng);
    ++t.total;
    try {
      parse(bad);
      if (t.first_escape.empty()) t.first_escape = "mutation " + std::to_string(i) + " accepted";
    } catch (const er::FormatError& e) {
      ++t.rejected;
      if (e.offset() <= bad.size() && std::string(e.what()).find("byte offset") != std::string::npos) {
        ++t.positioned;
      }
    } catch (const std::exception& e) {
      if (t.first_escape.empty()) t.first_escape = std::string("wrong error type: ") + e.what();
    }
  }
  return t;
}

inline Tally idx_images_campaign(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Bytes good = idx_images(5, 4, 3, rng);
  return run(count, seed + 1, good, mutate_idx_images, [](const Bytes& b) { er::parse_idx_images(b); });
}

inline Tally idx_labels_campaign(int count, std::uint64_t seed) {
  const Bytes good = idx_labels({0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 3, 3});
  return run(count, seed, good, mutate_idx_labels, [](const Bytes& b) { er::parse_idx_labels(b); });
}

inline Tally cifar_campaign(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Bytes good = cifar_records(3, rng);
  return run(count, seed + 1, good, mutate_cifar, [](const Bytes& b) { er::parse_cifar10(b, "fuzz"); });
}

inline Tally checkpoint_campaign(int count, std::uint64_t seed) {
  const auto bytes = er::encode_checkpoint(er::init({4, 6, 3}, {seed, 1.0}));
  const Bytes good(bytes.begin(), bytes.end());
  return run(count, seed, good, mutate_checkpoint, [](const Bytes& b) { er::decode_checkpoint(b); });
}

}  // namespace fuzz
