#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "error.hpp"
#include "linalg.hpp"

namespace moe {

/// perm[i] is the estimate row matched to truth row i.
using Permutation = std::vector<int>;

inline constexpr int kBruteForceMaxK = 8;

/// Minimum-cost assignment (Hungarian algorithm, O(k^3)); returns perm with
/// perm[row] = column.
inline Permutation hungarian(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw DataError("hungarian: cost matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  Permutation perm(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j) perm[static_cast<std::size_t>(p[j] - 1)] = j - 1;
  return perm;
}

/// Estimate-to-truth map from a truth-to-estimate permutation.
inline Permutation invert(const Permutation& perm) {
  Permutation inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  return inv;
}

struct RegressorFit {
  double fit = 0.0;
  Permutation permutation;
  bool exact = true;  // false when the bottleneck objective was approximated
};

/// max over permutations of min_i |<a_perm(i), a*_i>| on unit-normalized rows.
inline RegressorFit regressor_fit(const Matrix& est, const Matrix& truth) {
  if (est.rows() != truth.rows() || est.cols() != truth.cols()) throw DataError("regressor_fit: shape mismatch");
  const int k = static_cast<int>(truth.rows());
  const Matrix sim = (normalize_rows(truth) * normalize_rows(est).transpose()).cwiseAbs();  // sim(i, j) truth i, est j
  RegressorFit out;
  if (k > kBruteForceMaxK) {
    out.permutation = hungarian(-sim);
    out.exact = false;
    out.fit = std::numeric_limits<double>::infinity();
    for (int i = 0; i < k; ++i) out.fit = std::min(out.fit, sim(i, out.permutation[static_cast<std::size_t>(i)]));
    return out;
  }
  Permutation perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  double best_min = -1.0, best_sum = -1.0;
  do {
    double mn = std::numeric_limits<double>::infinity(), sum = 0.0;
    for (int i = 0; i < k; ++i) {
      const double s = sim(i, perm[static_cast<std::size_t>(i)]);
      mn = std::min(mn, s);
      sum += s;
    }
    if (mn > best_min || (mn == best_min && sum > best_sum)) {
      best_min = mn;
      best_sum = sum;
      out.permutation = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  out.fit = std::max(0.0, best_min);
  return out;
}

/// Gating matrix padded with the implicit zero k-th row.
inline Matrix pad_gating(const Matrix& w, Eigen::Index d) {
  Matrix out = Matrix::Zero(w.rows() + 1, d);
  if (w.rows() > 0) out.topRows(w.rows()) = w;
  return out;
}

/// Truth gating expressed in the estimate's labelling: estimate row j is truth
/// row s = est_to_truth[j], and logits are shifted so the estimate's reference
/// expert (row k-1) has logit zero. Returns a padded k x d matrix.
inline Matrix align_truth_gating(const Matrix& truth_w, const Permutation& est_to_truth, Eigen::Index d) {
  const Matrix pad = pad_gating(truth_w, d);
  const Eigen::Index k = pad.rows();
  if (static_cast<Eigen::Index>(est_to_truth.size()) != k) throw DataError("align_truth_gating: permutation size mismatch");
  const Eigen::RowVectorXd ref = pad.row(est_to_truth.back());
  Matrix out(k, d);
  for (Eigen::Index j = 0; j < k; ++j) out.row(j) = pad.row(est_to_truth[static_cast<std::size_t>(j)]) - ref;
  return out;
}

struct GatingFit {
  double fit = std::numeric_limits<double>::quiet_NaN();
  bool defined = false;  // false when an aligned truth row is zero
};

/// Absolute cosine between estimated and true gating rows; for k > 2 the minimum
/// over rows after aligning the truth to the regressor-matched labelling.
inline GatingFit gating_fit(const Matrix& est_w, const Matrix& truth_w, const Permutation& est_to_truth = {}) {
  if (est_w.rows() != truth_w.rows() || est_w.cols() != truth_w.cols()) throw DataError("gating_fit: shape mismatch");
  const Eigen::Index k = est_w.rows() + 1, d = est_w.cols();
  Permutation map = est_to_truth;
  if (map.empty()) {
    map.resize(static_cast<std::size_t>(k));
    std::iota(map.begin(), map.end(), 0);
  }
  const Matrix aligned = align_truth_gating(truth_w, map, d);
  GatingFit out;
  double mn = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j + 1 < k; ++j) {
    const double ne = est_w.row(j).norm(), nt = aligned.row(j).norm();
    if (nt == 0.0) return out;
    mn = std::min(mn, ne > 0 ? std::abs(est_w.row(j).dot(aligned.row(j))) / (ne * nt) : 0.0);
  }
  out.fit = std::min(1.0, mn);
  out.defined = true;
  return out;
}

inline GatingFit gating_fit(const Vector& est, const Vector& truth) {
  return gating_fit(Matrix(est.transpose()), Matrix(truth.transpose()));
}

struct ParamError {
  double error = 0.0;
  Permutation permutation;  // truth row i matched to estimate row permutation[i]
  bool exact = true;
};

/// E(A, W) = min over one relabelling of ||A - A*_pi||_F + ||[W 0] - [W* 0]_pi||_F,
/// with the truth gating shifted so the estimate's reference expert has zero logits.
inline ParamError param_error(const Matrix& a, const Matrix& w, const Matrix& a_true, const Matrix& w_true) {
  if (a.rows() != a_true.rows() || a.cols() != a_true.cols() || w.rows() != w_true.rows() ||
      w.rows() != a.rows() - 1 || (w.rows() > 0 && (w.cols() != a.cols() || w_true.cols() != a.cols())))
    throw DataError("param_error: shape mismatch");
  const Eigen::Index k = a.rows(), d = a.cols();
  const Matrix wpad = pad_gating(w, d);
  auto evaluate = [&](const Permutation& est_to_truth) {
    Matrix a_perm(k, d);
    for (Eigen::Index j = 0; j < k; ++j) a_perm.row(j) = a_true.row(est_to_truth[static_cast<std::size_t>(j)]);
    return (a - a_perm).norm() + (wpad - align_truth_gating(w_true, est_to_truth, d)).norm();
  };
  ParamError out;
  if (k > kBruteForceMaxK) {
    Matrix cost(k, k);  // truth i vs estimate j, unshifted
    const Matrix tpad = pad_gating(w_true, d);
    for (Eigen::Index i = 0; i < k; ++i)
      for (Eigen::Index j = 0; j < k; ++j)
        cost(i, j) = (a.row(j) - a_true.row(i)).squaredNorm() + (wpad.row(j) - tpad.row(i)).squaredNorm();
    out.permutation = hungarian(cost);
    out.error = evaluate(invert(out.permutation));
    out.exact = false;
    return out;
  }
  Permutation e2t(static_cast<std::size_t>(k));
  std::iota(e2t.begin(), e2t.end(), 0);
  out.error = std::numeric_limits<double>::infinity();
  do {
    const double e = evaluate(e2t);
    if (e < out.error) {
      out.error = e;
      out.permutation = invert(e2t);
    }
  } while (std::next_permutation(e2t.begin(), e2t.end()));
  return out;
}

}  // namespace moe
