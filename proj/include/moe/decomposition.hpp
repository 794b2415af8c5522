#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cqt.hpp"
#include "error.hpp"
#include "linalg.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "sym_tensor.hpp"

namespace moe {

struct WhiteningMap {
  Matrix w_map;                     // d x k, w_map^T (s T2) w_map = diag(eigen_signs)
  Matrix pseudo_inverse_transpose;  // k x d, maps whitened vectors back to R^d
  Vector eigenvalues;               // top-k eigenvalues of s T2, descending |value|
  std::vector<int> eigen_signs;     // signs absorbed into the whitened metric
  int c2_sign = 1;                  // s
};

/// Whitens sign(c2) * T2 with its top-k eigenpairs.
inline WhiteningMap whiten(const Sym2& t2, Eigen::Index k, int c2_sign, double rank_tol = 1e-6) {
  const auto d = static_cast<Eigen::Index>(t2.dim());
  if (k < 1 || k > d) throw ConfigError("whiten: need 1 <= k <= d");
  if (c2_sign != 1 && c2_sign != -1) throw ConfigError("whiten: c2_sign must be +1 or -1");
  Matrix m = t2.to_dense();
  if (c2_sign < 0) m = -m;
  const SymmetricEigen eig = jacobi_eigen(m);
  const double top = std::abs(eig.values[0]);
  if (!(top > 0.0) || std::abs(eig.values[k - 1]) <= rank_tol * top)
    throw NumericalError("rank deficient: regressors not linearly independent or n too small");

  WhiteningMap out;
  out.c2_sign = c2_sign;
  out.eigenvalues = eig.values.head(k);
  out.w_map.resize(d, k);
  out.pseudo_inverse_transpose.resize(k, d);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double lam = eig.values[i];
    const double s = std::sqrt(std::abs(lam));
    out.eigen_signs.push_back(lam >= 0 ? 1 : -1);
    out.w_map.col(i) = eig.vectors.col(i) / s;
    out.pseudo_inverse_transpose.row(i) = eig.vectors.col(i).transpose() * s;
  }
  return out;
}

struct PowerOptions {
  int restarts = 30;
  int iterations = 50;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  /// Components with eigenvalue below this fraction of the first are flagged.
  double noise_floor = 1e-3;
};

struct PowerComponent {
  Vector vector;
  double eigenvalue = 0.0;
  int iterations = 0;
  bool below_noise_floor = false;
};

struct PowerResult {
  std::vector<PowerComponent> components;  // descending eigenvalue
  std::vector<double> deflation_residuals;  // ||T||_F after each deflation
  std::vector<std::string> warnings;
};

namespace detail {

inline Vector power_step(const Sym3& t, const Vector& v) {
  Vector next = t.collapse(v);
  const double n = next.norm();
  if (!(n > 0.0) || !std::isfinite(n)) return v;
  return next / n;
}

}  // namespace detail

/// Robust tensor power method with deflation on a symmetric k x k x k tensor.
/// Each component takes the best of L random restarts (by T(v,v,v) after a
/// sign flip making it positive), refines it for N more iterations and deflates.
inline PowerResult power_method(const Sym3& tensor, Eigen::Index k, const PowerOptions& opts = {}) {
  if (opts.restarts < 1 || opts.iterations < 1) throw ConfigError("power_method: need restarts >= 1 and iterations >= 1");
  const auto dim = static_cast<Eigen::Index>(tensor.dim());
  if (k < 1 || k > dim) throw ConfigError("power_method: need 1 <= k <= tensor dimension");

  Sym3 t = tensor;
  PowerResult out;
  for (Eigen::Index comp = 0; comp < k; ++comp) {
    std::vector<Vector> cand(static_cast<std::size_t>(opts.restarts));
    std::vector<double> value(cand.size());
    parallel_for(cand.size(), opts.threads, [&](std::size_t r) {
      Engine rng = make_engine(derive_seed(opts.seed, static_cast<std::uint64_t>(comp)), r);
      Vector v = uniform_on_sphere(rng, dim);
      for (int it = 0; it < opts.iterations; ++it) v = detail::power_step(t, v);
      double val = t.contract(v);
      if (val < 0) {
        v = -v;
        val = -val;
      }
      cand[r] = std::move(v);
      value[r] = val;
    });
    const auto best = static_cast<std::size_t>(std::max_element(value.begin(), value.end()) - value.begin());
    PowerComponent pc;
    pc.vector = cand[best];
    pc.iterations = opts.iterations;
    for (int it = 0; it < opts.iterations; ++it) {
      Vector next = detail::power_step(t, pc.vector);
      if (next.dot(pc.vector) < 0) next = -next;
      const double change = (next - pc.vector).norm();
      pc.vector = std::move(next);
      ++pc.iterations;
      if (change < 1e-15) break;
    }
    pc.eigenvalue = t.contract(pc.vector);
    if (pc.eigenvalue < 0) {
      pc.vector = -pc.vector;
      pc.eigenvalue = -pc.eigenvalue;
    }
    t.add_rank_one(-pc.eigenvalue, pc.vector);
    out.deflation_residuals.push_back(t.frobenius_norm());
    out.components.push_back(std::move(pc));
  }

  std::stable_sort(out.components.begin(), out.components.end(),
                   [](const PowerComponent& a, const PowerComponent& b) { return a.eigenvalue > b.eigenvalue; });
  const double lead = out.components.front().eigenvalue;
  for (std::size_t i = 0; i < out.components.size(); ++i) {
    auto& c = out.components[i];
    if (!(c.eigenvalue > opts.noise_floor * lead)) {
      c.below_noise_floor = true;
      out.warnings.push_back("component " + std::to_string(i) + " eigenvalue " + std::to_string(c.eigenvalue) +
                             " is below the noise floor");
    }
  }
  return out;
}

struct DecompositionResult {
  Matrix vectors;               // k x d, unit rows
  Vector weights;               // estimated mixture weights E[p_i], positive
  Vector scales;                // c3 * weights, the rank-one coefficients of T3
  Vector eigenvalues;           // whitened power-method eigenvalues
  double residual = 0.0;        // ||T3 - sum scales_i a_i^{(x)3}||_F
  int restarts = 0;
  std::vector<int> iterations;  // per component
  std::vector<bool> flagged;    // below the noise floor
  std::vector<double> deflation_residuals;
  std::vector<int> eigen_signs;
  std::vector<std::string> warnings;
};

/// Regressors from (T2, T3): whiten, decompose the whitened T3, back-project and
/// normalize. With T2 = c2 sum p_i a_i a_i^T and T3 = c3 sum p_i a_i^{(x)3}, the
/// whitened eigenvalues are |c3| / (|c2|^{3/2} sqrt(p_i)).
inline DecompositionResult recover_regressors(const Sym2& t2, const Sym3& t3, Eigen::Index k,
                                              const CqtCoefficients& cqt, const PowerOptions& opts = {}) {
  if (t2.dim() != t3.dim()) throw DataError("recover_regressors: T2 and T3 dimensions differ");
  if (k > static_cast<Eigen::Index>(t2.dim())) throw ConfigError("recover_regressors: need k <= d");
  if (cqt.c2 == 0.0 || cqt.c3 == 0.0) throw NumericalError("recover_regressors: degenerate CQT scales");
  const WhiteningMap wm = whiten(t2, k, cqt.c2 > 0 ? 1 : -1);
  const Sym3 tw = t3.transform(wm.w_map);
  const PowerResult pr = power_method(tw, k, opts);

  const double c2_pow = std::pow(std::abs(cqt.c2), 1.5);
  DecompositionResult res;
  const auto d = static_cast<Eigen::Index>(t2.dim());
  res.vectors.resize(k, d);
  res.weights.resize(k);
  res.scales.resize(k);
  res.eigenvalues.resize(k);
  res.restarts = opts.restarts;
  res.eigen_signs = wm.eigen_signs;
  res.deflation_residuals = pr.deflation_residuals;
  res.warnings = pr.warnings;
  for (int s : wm.eigen_signs)
    if (s < 0) res.warnings.push_back("whitening absorbed a negative eigenvalue of sign-corrected T2");
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& c = pr.components[static_cast<std::size_t>(i)];
    Vector a = wm.pseudo_inverse_transpose.transpose() * c.vector;
    if (cqt.c3 < 0) a = -a;
    res.vectors.row(i) = a.normalized().transpose();
    res.eigenvalues[i] = c.eigenvalue;
    const double root_p = std::abs(cqt.c3) / (c.eigenvalue * c2_pow);
    res.weights[i] = root_p * root_p;
    res.scales[i] = cqt.c3 * res.weights[i];
    res.iterations.push_back(c.iterations);
    res.flagged.push_back(c.below_noise_floor);
  }
  Sym3 resid = t3;
  for (Eigen::Index i = 0; i < k; ++i) resid.add_rank_one(-res.scales[i], res.vectors.row(i).transpose());
  res.residual = resid.frobenius_norm();
  return res;
}

}  // namespace moe
