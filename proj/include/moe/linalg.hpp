#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace moe {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SymmetricEigen {
  Vector values;   // descending by |value|, ties by value
  Matrix vectors;  // columns, matching `values`
  int sweeps = 0;
};

/// Cyclic Jacobi eigensolver for dense symmetric matrices. Iterates until the
/// off-diagonal Frobenius norm drops below tol * ||A||_F.
inline SymmetricEigen jacobi_eigen(const Matrix& input, double tol = 1e-12, int max_sweeps = 100) {
  const Eigen::Index n = input.rows();
  if (input.cols() != n) throw DataError("jacobi_eigen: matrix is not square");
  Matrix a = 0.5 * (input + input.transpose());
  Matrix v = Matrix::Identity(n, n);
  const double scale = std::max(a.norm(), 1e-300);

  auto off_norm = [&] {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) s += 2.0 * a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  int sweep = 0;
  for (; sweep < max_sweeps && off_norm() > tol * scale; ++sweep) {
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
    const double ai = std::abs(a(i, i)), aj = std::abs(a(j, j));
    if (ai != aj) return ai > aj;
    return a(i, i) > a(j, j);
  });

  SymmetricEigen out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  out.sweeps = sweep;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index src = order[static_cast<std::size_t>(i)];
    out.values[i] = a(src, src);
    Vector col = v.col(src);
    // deterministic sign: first non-negligible coordinate positive
    for (Eigen::Index r = 0; r < n; ++r) {
      if (std::abs(col[r]) > 1e-12) {
        if (col[r] < 0) col = -col;
        break;
      }
    }
    out.vectors.col(i) = col;
  }
  return out;
}

/// Maximum over rows of the row-wise Euclidean distance.
inline double max_row_distance(const Matrix& a, const Matrix& b) {
  if (a.rows() == 0) return 0.0;
  return (a - b).rowwise().norm().maxCoeff();
}

/// Scales each row into the closed ball of the given radius.
inline void project_rows(Matrix& w, double radius) {
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    const double n = w.row(i).norm();
    if (n > radius) w.row(i) *= radius / n;
  }
}

inline Matrix normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (n > 0) out.row(i) /= n;
  }
  return out;
}

}  // namespace moe
