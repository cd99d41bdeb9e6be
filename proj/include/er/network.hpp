#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "er/errors.hpp"
#include "er/linalg.hpp"

namespace er {

/// Weight initialization: i.i.d. Gaussian with per-layer standard
/// deviation scale / sqrt(fan_in).
struct InitSpec {
  std::uint64_t seed = 0;
  double scale = 1.0;
};

/// Multilayer tanh perceptron without bias terms.
///
/// Layer l (1-based, as in H_l = Z_{l-1} W_l) is stored at index l-1 of
/// `weights` and `pre`; `act` holds Z_0..Z_L so `act[l]` is Z_l. The cache
/// (pre, act) reflects the most recent forward pass and is empty until one
/// has run.
struct MlpState {
  std::vector<Index> layer_dims;
  std::vector<Matrix> weights;
  std::vector<Matrix> pre;
  std::vector<Matrix> act;
  std::uint64_t seed = 0;

  std::size_t depth() const noexcept { return weights.size(); }
  bool has_cache() const noexcept { return !act.empty(); }
  const Matrix& output() const { return act.back(); }
  void clear_cache() {
    pre.clear();
    act.clear();
  }
};

inline void validate_dims(const std::vector<Index>& dims) {
  if (dims.size() < 2) {
    throw ConfigError("network needs at least two layer sizes (input and output), got " +
                      std::to_string(dims.size()));
  }
  for (Index d : dims) {
    if (d < 1) throw ConfigError("layer sizes must be positive, got " + std::to_string(d));
  }
}

inline MlpState init(const std::vector<Index>& layer_dims, const InitSpec& spec) {
  validate_dims(layer_dims);
  if (!(spec.scale > 0.0) || !std::isfinite(spec.scale)) {
    throw ConfigError("init scale must be a positive finite number");
  }
  MlpState state;
  state.layer_dims = layer_dims;
  state.seed = spec.seed;
  std::mt19937_64 rng(spec.seed);
  for (std::size_t l = 1; l < layer_dims.size(); ++l) {
    const Index fan_in = layer_dims[l - 1];
    std::normal_distribution<double> gauss(0.0, spec.scale / std::sqrt(static_cast<double>(fan_in)));
    Matrix w(fan_in, layer_dims[l]);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = gauss(rng);
    state.weights.push_back(std::move(w));
  }
  return state;
}

/// Propagates x through every layer, refreshing the cache. Returns Z_L.
inline const Matrix& forward(MlpState& state, const Matrix& x) {
  if (x.cols() != state.layer_dims.front()) {
    throw ShapeError("forward: input has " + std::to_string(x.cols()) +
                     " columns, network expects " + std::to_string(state.layer_dims.front()));
  }
  state.pre.resize(state.depth());
  state.act.resize(state.depth() + 1);
  state.act[0] = x;
  for (std::size_t l = 0; l < state.depth(); ++l) {
    state.pre[l] = matmul(state.act[l], state.weights[l]);
    state.act[l + 1] = tanh_activation(state.pre[l]);
  }
  return state.act.back();
}

/// Forward pass that leaves the state untouched; safe on a shared state.
inline Matrix predict(const MlpState& state, const Matrix& x) {
  if (x.cols() != state.layer_dims.front()) {
    throw ShapeError("predict: input has " + std::to_string(x.cols()) +
                     " columns, network expects " + std::to_string(state.layer_dims.front()));
  }
  Matrix z = x;
  for (const auto& w : state.weights) z = tanh_activation(matmul(z, w));
  return z;
}

/// Row-wise argmax, ties to the lowest index. A single output column is
/// read as a binary +-1 unit: class 1 when positive, else class 0.
inline std::vector<int> predict_classes(const Matrix& y) {
  if (y.rows() == 0 || y.cols() == 0) {
    throw ShapeError("predict_classes: empty matrix " + shape_str(y));
  }
  std::vector<int> classes(static_cast<std::size_t>(y.rows()));
  for (Index r = 0; r < y.rows(); ++r) {
    if (y.cols() == 1) {
      classes[static_cast<std::size_t>(r)] = y(r, 0) > 0.0 ? 1 : 0;
      continue;
    }
    Index best = 0;
    for (Index c = 1; c < y.cols(); ++c) {
      if (y(r, c) > y(r, best)) best = c;
    }
    classes[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return classes;
}

/// Fraction of rows whose predicted class differs from the target's.
inline double misclassification_rate(const Matrix& y, const Matrix& y_hat) {
  if (y.rows() != y_hat.rows() || y.cols() != y_hat.cols()) {
    throw ShapeError("misclassification_rate: output " + shape_str(y) + " vs target " +
                     shape_str(y_hat));
  }
  const auto predicted = predict_classes(y);
  const auto expected = predict_classes(y_hat);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) wrong += predicted[i] != expected[i];
  return static_cast<double>(wrong) / static_cast<double>(predicted.size());
}

/// 0.5 * ||y_hat - y||_F^2
inline double half_squared_error(const Matrix& y, const Matrix& y_hat) {
  if (y.rows() != y_hat.rows() || y.cols() != y_hat.cols()) {
    throw ShapeError("half_squared_error: output " + shape_str(y) + " vs target " +
                     shape_str(y_hat));
  }
  return 0.5 * (y_hat - y).squaredNorm();
}

// Checkpoint layout, all integers and doubles little-endian:
//
//   bytes 0..5   magic "ERMLP1"
//   u64          init seed
//   u32          number of layer sizes (L + 1)
//   u32 x (L+1)  layer sizes n_0 .. n_L
//   f64 ...      W_1 .. W_L, each row-major (n_{l-1} x n_l)
//
// The file must end exactly after the last weight.

inline constexpr char kCheckpointMagic[6] = {'E', 'R', 'M', 'L', 'P', '1'};

namespace detail {

template <class T>
void put_le(std::vector<unsigned char>& out, T value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <class T>
T get_le(std::span<const unsigned char> in, std::size_t& pos, const char* what) {
  if (in.size() - pos < sizeof(T)) {
    throw FormatError(std::string("checkpoint truncated while reading ") + what, pos);
  }
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace detail

inline std::vector<unsigned char> encode_checkpoint(const MlpState& state) {
  std::vector<unsigned char> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  detail::put_le<std::uint64_t>(out, state.seed);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(state.layer_dims.size()));
  for (Index d : state.layer_dims) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  for (const auto& w : state.weights) {
    for (Index i = 0; i < w.size(); ++i) detail::put_le<double>(out, w.data()[i]);
  }
  return out;
}

inline MlpState decode_checkpoint(std::span<const unsigned char> bytes) {
  if (bytes.size() < sizeof(kCheckpointMagic) ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw FormatError("checkpoint: bad magic, expected ERMLP1", 0);
  }
  std::size_t pos = sizeof(kCheckpointMagic);
  MlpState state;
  state.seed = detail::get_le<std::uint64_t>(bytes, pos, "seed");
  const std::size_t dims_at = pos;
  const auto n_dims = detail::get_le<std::uint32_t>(bytes, pos, "layer count");
  if (n_dims < 2 || n_dims > 1024) throw FormatError("checkpoint: implausible layer count", dims_at);
  for (std::uint32_t i = 0; i < n_dims; ++i) {
    const std::size_t at = pos;
    const auto d = detail::get_le<std::uint32_t>(bytes, pos, "layer size");
    if (d == 0) throw FormatError("checkpoint: zero layer size", at);
    state.layer_dims.push_back(static_cast<Index>(d));
  }
  for (std::size_t l = 1; l < state.layer_dims.size(); ++l) {
    Matrix w(state.layer_dims[l - 1], state.layer_dims[l]);
    for (Index i = 0; i < w.size(); ++i) {
      const std::size_t at = pos;
      const double v = detail::get_le<double>(bytes, pos, "weights");
      if (!std::isfinite(v)) throw FormatError("checkpoint: non-finite weight", at);
      w.data()[i] = v;
    }
    state.weights.push_back(std::move(w));
  }
  if (pos != bytes.size()) throw FormatError("checkpoint: trailing bytes", pos);
  return state;
}

inline void save_checkpoint(const MlpState& state, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(state);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open checkpoint for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint: " + path.string());
}

inline MlpState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace er
