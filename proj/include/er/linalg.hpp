#pragma once

// Dense matrix primitives shared by every learning rule: products, the
// regularized pseudo-inverse family, and the H / tanh(H) slope.

#include <cmath>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "er/errors.hpp"

namespace er {

/// Row-major double matrix. Rows are samples wherever a matrix carries
/// activations; weights are (fan_in x fan_out).
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

/// Singular values below this fraction of the largest one count as zero
/// when an unregularized (alpha == 0) solve is requested.
inline constexpr double kRankTolerance = 1e-10;

/// Below this magnitude safe_ratio switches to its Taylor series.
inline constexpr double kSeriesCutoff = 1e-4;

/// Largest double strictly below 1. tanh_activation never leaves
/// (-kTanhBound, kTanhBound), even where std::tanh rounds to +-1.
inline constexpr double kTanhBound = 1.0 - std::numeric_limits<double>::epsilon() / 2;

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require_finite(const Matrix& m, std::string_view context) {
  if (!m.allFinite()) {
    throw NumericError(std::string(context) + ": non-finite value in " + shape_str(m) +
                       " result");
  }
}

/// Builds a matrix from row-major data, validating size and finiteness.
inline Matrix make_matrix(Index rows, Index cols, std::span<const double> data) {
  if (rows <= 0 || cols <= 0) {
    throw ShapeError("make_matrix: dimensions must be positive, got " + std::to_string(rows) +
                     "x" + std::to_string(cols));
  }
  if (static_cast<Index>(data.size()) != rows * cols) {
    throw ShapeError("make_matrix: " + std::to_string(data.size()) + " values for " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix m = Eigen::Map<const Matrix>(data.data(), rows, cols);
  require_finite(m, "make_matrix");
  return m;
}

inline Matrix make_matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const auto n_rows = static_cast<Index>(rows.size());
  const auto n_cols = n_rows > 0 ? static_cast<Index>(rows.begin()->size()) : Index{0};
  if (n_rows == 0 || n_cols == 0) throw ShapeError("make_matrix: empty initializer");
  Matrix m(n_rows, n_cols);
  Index r = 0;
  for (const auto& row : rows) {
    if (static_cast<Index>(row.size()) != n_cols) throw ShapeError("make_matrix: ragged rows");
    Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  require_finite(m, "make_matrix");
  return m;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: cannot multiply " + shape_str(a) + " by " + shape_str(b));
  }
  Matrix out(a.rows(), b.cols());
  out.noalias() = a * b;
  require_finite(out, "matmul");
  return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("hadamard: shapes differ, " + shape_str(a) + " vs " + shape_str(b));
  }
  Matrix out = a.cwiseProduct(b);
  require_finite(out, "hadamard");
  return out;
}

inline double tanh_activation(double h) {
  const double y = std::tanh(h);
  return y > kTanhBound ? kTanhBound : (y < -kTanhBound ? -kTanhBound : y);
}

inline Matrix tanh_activation(const Matrix& h) {
  return h.unaryExpr([](double v) { return tanh_activation(v); });
}

/// h / tanh(h), with the removable singularity at 0 filled by its series
/// 1 + h^2/3 - h^4/45. Always >= 1.
inline double safe_ratio(double h) {
  if (std::abs(h) < kSeriesCutoff) {
    const double h2 = h * h;
    return 1.0 + h2 / 3.0 - h2 * h2 / 45.0;
  }
  return h / std::tanh(h);
}

inline Matrix safe_ratio(const Matrix& h) {
  return h.unaryExpr([](double v) { return safe_ratio(v); });
}

inline double frobenius(const Matrix& m) { return m.norm(); }

namespace detail {

using ColMatrix = Eigen::MatrixXd;

inline void check_rank(const ColMatrix& r, double rank_tol, std::string_view context) {
  Eigen::BDCSVD<ColMatrix> svd(r);
  const auto& s = svd.singularValues();
  const double largest = s.size() > 0 ? s(0) : 0.0;
  const double smallest = s.size() > 0 ? s(s.size() - 1) : 0.0;
  if (!(largest > 0.0) || smallest < rank_tol * largest) {
    throw SingularityError(std::string(context) +
                           ": matrix is rank-deficient (smallest/largest singular value " +
                           std::to_string(largest > 0.0 ? smallest / largest : 0.0) +
                           "); use a positive ridge coefficient alpha");
  }
}

inline void check_alpha(double alpha, std::string_view context) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw ConfigError(std::string(context) + ": alpha must be a finite non-negative number");
  }
}

}  // namespace detail

/// Returns (X^T X + alpha I)^-1 X^T B without forming the pseudo-inverse.
///
/// Tall inputs (and every alpha == 0 request) factor the stacked system
/// [X; sqrt(alpha) I] by Householder QR and solve in the least-squares
/// sense. Wide inputs with alpha > 0 use the equivalent
/// X^T (X X^T + alpha I)^-1 B, which keeps the factorization at
/// (rows x rows). With alpha == 0 a rank check on the triangular factor
/// raises SingularityError when sigma_min < rank_tol * sigma_max.
inline Matrix ridge_solve(const Matrix& x, const Matrix& rhs, double alpha,
                          double rank_tol = kRankTolerance) {
  detail::check_alpha(alpha, "ridge_solve");
  if (x.rows() != rhs.rows()) {
    throw ShapeError("ridge_solve: design " + shape_str(x) + " and right-hand side " +
                     shape_str(rhs) + " differ in rows");
  }
  const Index m = x.rows();
  const Index n = x.cols();
  Matrix out;

  if (m >= n || alpha == 0.0) {
    if (alpha == 0.0 && m < n) {
      throw SingularityError("ridge_solve: " + shape_str(x) +
                             " design has fewer rows than columns and cannot have full column "
                             "rank; use a positive ridge coefficient alpha");
    }
    const Index extra = alpha > 0.0 ? n : 0;
    detail::ColMatrix stacked(m + extra, n);
    stacked.topRows(m) = x;
    detail::ColMatrix stacked_rhs(m + extra, rhs.cols());
    stacked_rhs.topRows(m) = rhs;
    if (extra > 0) {
      stacked.bottomRows(n) = std::sqrt(alpha) * detail::ColMatrix::Identity(n, n);
      stacked_rhs.bottomRows(n).setZero();
    }
    Eigen::HouseholderQR<detail::ColMatrix> qr(stacked);
    if (alpha == 0.0) {
      detail::ColMatrix r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
      detail::check_rank(r, rank_tol, "ridge_solve");
    }
    out = qr.solve(stacked_rhs);
  } else {
    // (X^T X + aI)^-1 X^T = X^T (X X^T + aI)^-1
    detail::ColMatrix stacked(n + m, m);
    stacked.topRows(n) = x.transpose();
    stacked.bottomRows(m) = std::sqrt(alpha) * detail::ColMatrix::Identity(m, m);
    Eigen::HouseholderQR<detail::ColMatrix> qr(stacked);
    const auto r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
    detail::ColMatrix y = rhs;
    r.transpose().solveInPlace(y);
    r.solveInPlace(y);
    out = x.transpose() * y;
  }
  require_finite(out, "ridge_solve");
  return out;
}

/// (X^T X + alpha I)^-1 X^T, shape (x.cols x x.rows). alpha == 0 gives the
/// Moore-Penrose pseudo-inverse and requires full column rank.
inline Matrix ridge_pinv(const Matrix& x, double alpha, double rank_tol = kRankTolerance) {
  return ridge_solve(x, Matrix::Identity(x.rows(), x.rows()), alpha, rank_tol);
}

}  // namespace er
