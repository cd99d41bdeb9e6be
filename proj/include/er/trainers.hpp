#pragma once

// Learning rules for MlpState: the backpropagation baseline and the
// Expectation Reflection (ER) family.
//
// ER replaces gradient descent's three ingredients: the slope sigma'(H)
// becomes H / tanh(H), transposes become (ridge) pseudo-inverses, and the
// step size is 1. Every ER rule below works on differences
// (dZ, dH, dW) except er_naive_target_step, which propagates target
// values and is kept as a comparison point.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "er/errors.hpp"
#include "er/linalg.hpp"
#include "er/network.hpp"

namespace er {

enum class Algorithm { bp, er_single, er_alg1, er_alg2, er_naive_target, er_minibatch };

inline std::string_view algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::bp: return "bp";
    case Algorithm::er_single: return "er-single";
    case Algorithm::er_alg1: return "er-alg1";
    case Algorithm::er_alg2: return "er-alg2";
    case Algorithm::er_naive_target: return "er-naive";
    case Algorithm::er_minibatch: return "er-minibatch";
  }
  return "?";
}

inline Algorithm parse_algorithm(std::string_view name) {
  for (auto a : {Algorithm::bp, Algorithm::er_single, Algorithm::er_alg1, Algorithm::er_alg2,
                 Algorithm::er_naive_target, Algorithm::er_minibatch}) {
    if (algorithm_name(a) == name) return a;
  }
  throw ConfigError("unknown algorithm '" + std::string(name) +
                    "' (expected bp, er-single, er-alg1, er-alg2, er-naive or er-minibatch)");
}

struct TrainConfig {
  Algorithm algorithm = Algorithm::er_alg2;
  /// Ridge coefficient, shared by activation and weight pseudo-inverses.
  double alpha = 0.0;
  /// BP learning rate, or the interpolation rate of mini-batch ER.
  double eta = 1.0;
  /// Rows per batch; empty means the whole training set.
  std::optional<Index> batch_size;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
      throw ConfigError("alpha must be a finite non-negative number");
    }
    if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in (0, 1]");
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (batch_size && *batch_size < 1) throw ConfigError("batch size must be positive");
    switch (algorithm) {
      case Algorithm::er_single:
      case Algorithm::er_alg1:
      case Algorithm::er_alg2:
      case Algorithm::er_naive_target:
        if (batch_size) {
          throw ConfigError(std::string(algorithm_name(algorithm)) +
                            " is a full-batch rule; drop the batch size");
        }
        break;
      case Algorithm::er_minibatch:
        if (!(alpha > 0.0)) throw ConfigError("er-minibatch requires alpha > 0");
        break;
      case Algorithm::bp:
        break;
    }
  }
};

struct StepReport {
  /// ||dW_l||_F per layer, layer 1 first.
  std::vector<double> dw_norms;
  double loss_before = 0.0;
  double loss_after = 0.0;
  double error_before = 0.0;
  double error_after = 0.0;
  /// Naive target propagation only: hidden activations with |Z| < 1e-8
  /// whose target is nonzero.
  std::size_t stability_warnings = 0;
};

/// Per-layer error signals of one ER backward sweep. `delta_pre[l-1]` is
/// dH_l and `delta_act[l]` is dZ_l, for l = 1..L (delta_act[0] is unused).
struct BackwardSignals {
  std::vector<Matrix> delta_pre;
  std::vector<Matrix> delta_act;
};

namespace detail {

inline void check_target(const MlpState& state, const Matrix& y_hat, std::string_view who) {
  if (!state.has_cache()) throw ConfigError(std::string(who) + ": run forward() first");
  const Matrix& y = state.output();
  if (y.rows() != y_hat.rows() || y.cols() != y_hat.cols()) {
    throw ShapeError(std::string(who) + ": target " + shape_str(y_hat) + " does not match output " +
                     shape_str(y));
  }
}

template <class Fn>
auto for_layer(std::size_t layer, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const SingularityError& e) {
    throw SingularityError("layer " + std::to_string(layer) + ": " + e.what());
  }
}

inline StepReport open_report(const MlpState& state, const Matrix& y_hat) {
  StepReport report;
  report.loss_before = half_squared_error(state.output(), y_hat);
  report.error_before = misclassification_rate(state.output(), y_hat);
  return report;
}

inline void close_report(StepReport& report, const MlpState& state, const Matrix& y_hat) {
  report.loss_after = half_squared_error(state.output(), y_hat);
  report.error_after = misclassification_rate(state.output(), y_hat);
}

/// Refreshes H_l, Z_l from Z_{l-1} for a single layer (0-based index).
inline void forward_layer(MlpState& state, std::size_t index) {
  state.pre[index] = matmul(state.act[index], state.weights[index]);
  state.act[index + 1] = tanh_activation(state.pre[index]);
}

}  // namespace detail

/// -dL/dW_l for L = 0.5 * ||y_hat - Z_L||^2 (summed over rows), from the
/// current cache.
inline std::vector<Matrix> bp_gradients(const MlpState& state, const Matrix& y_hat) {
  detail::check_target(state, y_hat, "bp_gradients");
  const std::size_t depth = state.depth();
  std::vector<Matrix> dw(depth);
  Matrix delta_act = y_hat - state.output();
  for (std::size_t l = depth; l-- > 0;) {
    const Matrix& z = state.act[l + 1];
    const Matrix slope = (1.0 - z.array().square()).matrix();
    const Matrix delta_pre = hadamard(slope, delta_act);
    if (l > 0) delta_act = matmul(delta_pre, state.weights[l].transpose());
    dw[l] = matmul(state.act[l].transpose(), delta_pre);
  }
  return dw;
}

/// One gradient-descent step: W_l += eta * Z_{l-1}^T dH_l.
inline StepReport bp_step(MlpState& state, const Matrix& x, const Matrix& y_hat, double eta) {
  forward(state, x);
  StepReport report = detail::open_report(state, y_hat);
  const auto dw = bp_gradients(state, y_hat);
  for (std::size_t l = 0; l < state.depth(); ++l) {
    const Matrix step = eta * dw[l];
    state.weights[l] += step;
    report.dw_norms.push_back(frobenius(step));
  }
  forward(state, x);
  detail::close_report(report, state, y_hat);
  return report;
}

/// ER backward sweep from the cached forward pass:
///   dZ_L = y_hat - Z_L,  dH_l = (H_l / Z_l) . dZ_l,  dZ_{l-1} = dH_l W_l^+
/// with H / Z evaluated as safe_ratio(H).
inline BackwardSignals er_backward(const MlpState& state, const Matrix& y_hat, double alpha) {
  detail::check_target(state, y_hat, "er_backward");
  const std::size_t depth = state.depth();
  BackwardSignals s;
  s.delta_pre.resize(depth);
  s.delta_act.resize(depth + 1);
  s.delta_act[depth] = y_hat - state.output();
  for (std::size_t l = depth; l >= 1; --l) {
    s.delta_pre[l - 1] = hadamard(safe_ratio(state.pre[l - 1]), s.delta_act[l]);
    if (l > 1) {
      const Matrix w_pinv =
          detail::for_layer(l, [&] { return ridge_pinv(state.weights[l - 1], alpha); });
      s.delta_act[l - 1] = matmul(s.delta_pre[l - 1], w_pinv);
    }
  }
  return s;
}

/// Single-layer ER: H_new = (y_hat / Y) . H, solved for W by regression on x.
inline StepReport er_single_step(MlpState& state, const Matrix& x, const Matrix& y_hat,
                                 double alpha = 0.0) {
  if (state.depth() != 1) {
    throw ConfigError("er_single_step needs a one-layer network, got depth " +
                      std::to_string(state.depth()));
  }
  forward(state, x);
  StepReport report = detail::open_report(state, y_hat);
  const Matrix delta_pre = hadamard(safe_ratio(state.pre[0]), y_hat - state.output());
  const Matrix dw = detail::for_layer(1, [&] { return ridge_solve(x, delta_pre, alpha); });
  state.weights[0] += dw;
  report.dw_norms.push_back(frobenius(dw));
  forward(state, x);
  detail::close_report(report, state, y_hat);
  return report;
}

/// Multilayer ER with updates interleaved into the backward sweep. Every
/// dW_l regresses on the activation Z_{l-1} from before the step.
inline StepReport er_alg1_step(MlpState& state, const Matrix& x, const Matrix& y_hat,
                               double alpha = 0.0) {
  forward(state, x);
  detail::check_target(state, y_hat, "er_alg1_step");
  StepReport report = detail::open_report(state, y_hat);
  const std::size_t depth = state.depth();
  report.dw_norms.assign(depth, 0.0);
  Matrix delta_act = y_hat - state.output();
  for (std::size_t l = depth; l >= 1; --l) {
    const Matrix delta_pre = hadamard(safe_ratio(state.pre[l - 1]), delta_act);
    if (l > 1) {
      const Matrix w_pinv =
          detail::for_layer(l, [&] { return ridge_pinv(state.weights[l - 1], alpha); });
      delta_act = matmul(delta_pre, w_pinv);
    }
    const Matrix dw =
        detail::for_layer(l, [&] { return ridge_solve(state.act[l - 1], delta_pre, alpha); });
    state.weights[l - 1] += dw;
    report.dw_norms[l - 1] = frobenius(dw);
  }
  forward(state, x);
  detail::close_report(report, state, y_hat);
  return report;
}

namespace detail {

// Backward sweep with the current weights, then layer-by-layer updates
// W_l += eta * Z_{l-1}^+ dH_l where Z_{l-1} is recomputed from the already
// updated lower layers. Expects a fresh cache for x.
inline std::vector<double> alg2_sweep(MlpState& state, const Matrix& y_hat, double alpha,
                                      double eta) {
  const BackwardSignals signals = er_backward(state, y_hat, alpha);
  std::vector<double> norms;
  for (std::size_t l = 0; l < state.depth(); ++l) {
    const Matrix dw =
        for_layer(l + 1, [&] { return ridge_solve(state.act[l], signals.delta_pre[l], alpha); });
    if (eta == 1.0) {
      state.weights[l] += dw;
      norms.push_back(frobenius(dw));
    } else {
      const Matrix step = eta * dw;
      state.weights[l] += step;
      norms.push_back(frobenius(step));
    }
    forward_layer(state, l);
  }
  return norms;
}

}  // namespace detail

/// Multilayer ER that collects every dH_l first, then updates layers
/// bottom-up so each regression sees the activation produced by the
/// already-updated layers beneath it.
inline StepReport er_alg2_step(MlpState& state, const Matrix& x, const Matrix& y_hat,
                               double alpha = 0.0) {
  forward(state, x);
  detail::check_target(state, y_hat, "er_alg2_step");
  StepReport report = detail::open_report(state, y_hat);
  report.dw_norms = detail::alg2_sweep(state, y_hat, alpha, 1.0);
  detail::close_report(report, state, y_hat);
  return report;
}

/// Threshold under which a hidden activation is treated as zero by the
/// naive target rule's stability counter.
inline constexpr double kNaiveTargetFloor = 1e-8;

/// Target-value variant of multilayer ER: Z_L^new = y_hat,
/// H_l^new = (H_l / Z_l) . Z_l^new, Z_{l-1}^new = H_l^new W_l^+, then
/// W_l^new = Z_{l-1}^+ H_l^new bottom-up (activations recomputed as in
/// er_alg2_step). Regression errors are not cancelled, which is what makes
/// it worse than the difference form.
inline StepReport er_naive_target_step(MlpState& state, const Matrix& x, const Matrix& y_hat,
                                       double alpha = 0.0) {
  forward(state, x);
  detail::check_target(state, y_hat, "er_naive_target_step");
  StepReport report = detail::open_report(state, y_hat);
  const std::size_t depth = state.depth();

  std::vector<Matrix> target_pre(depth);
  Matrix target_act = y_hat;
  for (std::size_t l = depth; l >= 1; --l) {
    const Matrix& z = state.act[l];
    for (Index i = 0; i < z.size(); ++i) {
      if (std::abs(z.data()[i]) < kNaiveTargetFloor && target_act.data()[i] != 0.0) {
        ++report.stability_warnings;
      }
    }
    target_pre[l - 1] = hadamard(safe_ratio(state.pre[l - 1]), target_act);
    if (l > 1) {
      const Matrix w_pinv =
          detail::for_layer(l, [&] { return ridge_pinv(state.weights[l - 1], alpha); });
      target_act = matmul(target_pre[l - 1], w_pinv);
    }
  }
  for (std::size_t l = 0; l < depth; ++l) {
    Matrix w_new =
        detail::for_layer(l + 1, [&] { return ridge_solve(state.act[l], target_pre[l], alpha); });
    report.dw_norms.push_back(frobenius(w_new - state.weights[l]));
    state.weights[l] = std::move(w_new);
    detail::forward_layer(state, l);
  }
  detail::close_report(report, state, y_hat);
  return report;
}

struct DtpCheckOptions {
  double tolerance = 1e-10;
  /// Negative control: drop the inverse-error adjustment term.
  bool include_adjustment = true;
};

/// Verifies, for every layer of the cached forward pass, that the
/// adjusted-target updates
///   Z_{l-1}^new = H_l^new W_l^+ - (H_l W_l^+ - Z_{l-1})
///   W_l^new     = Z_{l-1}^+ H_l^new - (Z_{l-1}^+ H_l - W_l)
/// reduce to the difference-form updates dH_l W_l^+ and Z_{l-1}^+ dH_l.
/// The tolerance is relative to the largest magnitude involved.
inline bool dtp_adjustment_identity_check(const MlpState& state, const Matrix& y_hat,
                                          double alpha, const DtpCheckOptions& options = {}) {
  const BackwardSignals signals = er_backward(state, y_hat, alpha);
  const auto close = [&](const Matrix& lhs, const Matrix& rhs, double scale) {
    const double gap = (lhs - rhs).cwiseAbs().maxCoeff();
    return gap <= options.tolerance * std::max(1.0, scale);
  };
  for (std::size_t l = state.depth(); l >= 1; --l) {
    const Matrix& h = state.pre[l - 1];
    const Matrix& z_prev = state.act[l - 1];
    const Matrix& w = state.weights[l - 1];
    const Matrix& delta_pre = signals.delta_pre[l - 1];
    const Matrix h_new = h + delta_pre;

    if (l > 1) {
      const Matrix w_pinv = detail::for_layer(l, [&] { return ridge_pinv(w, alpha); });
      const Matrix reach = matmul(h_new, w_pinv);
      const Matrix adjustment = matmul(h, w_pinv) - z_prev;
      const Matrix z_new = options.include_adjustment ? Matrix(reach - adjustment) : reach;
      const double scale = std::max(reach.cwiseAbs().maxCoeff(), z_prev.cwiseAbs().maxCoeff());
      if (!close(z_new - z_prev, matmul(delta_pre, w_pinv), scale)) return false;
    }

    const Matrix w_new_raw =
        detail::for_layer(l, [&] { return ridge_solve(z_prev, h_new, alpha); });
    const Matrix adjustment =
        detail::for_layer(l, [&] { return ridge_solve(z_prev, h, alpha); }) - w;
    const Matrix w_new =
        options.include_adjustment ? Matrix(w_new_raw - adjustment) : w_new_raw;
    const Matrix dw = detail::for_layer(l, [&] { return ridge_solve(z_prev, delta_pre, alpha); });
    const double scale = std::max(w_new_raw.cwiseAbs().maxCoeff(), w.cwiseAbs().maxCoeff());
    if (!close(w_new - w, dw, scale)) return false;
  }
  return true;
}

/// Row order used by mini-batch epoch `epoch` (seeded with seed + epoch).
inline std::vector<Index> epoch_permutation(Index rows, std::uint64_t seed, std::size_t epoch) {
  std::vector<Index> order(static_cast<std::size_t>(rows));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed + epoch);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

struct MinibatchPlan {
  Index batch_size = 128;
  double alpha = 1.0;
  double eta = 0.1;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
};

/// One pass over shuffled mini-batches, each running the er_alg2_step
/// procedure with ridge pseudo-inverses and the interpolated update
/// W <- (1 - eta) W + eta W^new. Only structural checks are made here, so
/// alpha == 0 (plain Algorithm-2 stepping) is allowed and fails on the
/// first singular batch.
inline StepReport interpolated_alg2_epoch(MlpState& state, const Matrix& x, const Matrix& y_hat,
                                          const MinibatchPlan& plan) {
  if (x.rows() != y_hat.rows()) {
    throw ShapeError("mini-batch epoch: inputs " + shape_str(x) + " and targets " +
                     shape_str(y_hat) + " differ in rows");
  }
  if (plan.batch_size < 1) throw ConfigError("batch size must be positive");
  if (!(plan.eta >= 0.0 && plan.eta <= 1.0)) throw ConfigError("eta must lie in [0, 1]");
  detail::check_alpha(plan.alpha, "mini-batch epoch");

  forward(state, x);
  detail::check_target(state, y_hat, "mini-batch epoch");
  StepReport report = detail::open_report(state, y_hat);
  const std::vector<Matrix> start = state.weights;

  const auto order = epoch_permutation(x.rows(), plan.seed, plan.epoch);
  for (std::size_t begin = 0; begin < order.size();
       begin += static_cast<std::size_t>(plan.batch_size)) {
    const std::size_t end =
        std::min(order.size(), begin + static_cast<std::size_t>(plan.batch_size));
    const std::vector<Index> rows(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                  order.begin() + static_cast<std::ptrdiff_t>(end));
    const Matrix xb = x(rows, Eigen::all);
    const Matrix yb = y_hat(rows, Eigen::all);
    forward(state, xb);
    detail::alg2_sweep(state, yb, plan.alpha, plan.eta);
  }

  for (std::size_t l = 0; l < state.depth(); ++l) {
    report.dw_norms.push_back(frobenius(state.weights[l] - start[l]));
  }
  forward(state, x);
  detail::close_report(report, state, y_hat);
  return report;
}

/// Gradient descent over shuffled batches (order from epoch_permutation).
/// The report covers the whole data set; dw_norms are the net change.
inline StepReport bp_epoch(MlpState& state, const Matrix& x, const Matrix& y_hat, double eta,
                           Index batch_size, std::uint64_t seed, std::size_t epoch) {
  if (x.rows() != y_hat.rows()) {
    throw ShapeError("bp_epoch: inputs " + shape_str(x) + " and targets " + shape_str(y_hat) +
                     " differ in rows");
  }
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  forward(state, x);
  detail::check_target(state, y_hat, "bp_epoch");
  StepReport report = detail::open_report(state, y_hat);
  const std::vector<Matrix> start = state.weights;
  const auto order = epoch_permutation(x.rows(), seed, epoch);
  for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(batch_size));
    const std::vector<Index> rows(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                  order.begin() + static_cast<std::ptrdiff_t>(end));
    const Matrix xb = x(rows, Eigen::all);
    const Matrix yb = y_hat(rows, Eigen::all);
    forward(state, xb);
    const auto dw = bp_gradients(state, yb);
    for (std::size_t l = 0; l < state.depth(); ++l) state.weights[l] += eta * dw[l];
  }
  for (std::size_t l = 0; l < state.depth(); ++l) {
    report.dw_norms.push_back(frobenius(state.weights[l] - start[l]));
  }
  forward(state, x);
  detail::close_report(report, state, y_hat);
  return report;
}

/// Mini-batch ER epoch driven by a TrainConfig (alpha > 0). Without a
/// batch size the whole data set forms a single batch.
inline StepReport er_minibatch_epoch(MlpState& state, const Matrix& x, const Matrix& y_hat,
                                     const TrainConfig& config, std::size_t epoch = 0) {
  if (!(config.alpha > 0.0)) throw ConfigError("er_minibatch_epoch requires alpha > 0");
  const Index batch = config.batch_size ? *config.batch_size : std::max<Index>(x.rows(), 1);
  return interpolated_alg2_epoch(state, x, y_hat,
                                 MinibatchPlan{batch, config.alpha, config.eta, config.seed, epoch});
}

}  // namespace er
