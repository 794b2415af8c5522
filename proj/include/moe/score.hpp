#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "error.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "sym_tensor.hpp"

namespace moe {

// Score functions S_m(x) = (-1)^m grad^m p(x) / p(x). For the standard
// Gaussian these are the Hermite tensors:
//   S2(x)_{jk}  = x_j x_k - delta_jk
//   S3(x)_{jkl} = x_j x_k x_l - x_j delta_kl - x_k delta_jl - x_l delta_jk

/// Writes S2(x) into a packed Sym2 buffer, scaled by s and added to out.
inline void add_score2_gaussian(std::span<const double> x, double s, std::span<double> out) {
  const std::size_t d = x.size();
  std::size_t p = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const double sx = s * x[i];
    out[p++] += sx * x[i] - s;
    for (std::size_t j = i + 1; j < d; ++j) out[p++] += sx * x[j];
  }
}

/// Writes S3(x) into a packed Sym3 buffer, scaled by s and added to out.
inline void add_score3_gaussian(std::span<const double> x, double s, std::span<double> out) {
  const std::size_t d = x.size();
  std::size_t p = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const double sx = s * x[i];
    for (std::size_t j = i; j < d; ++j) {
      const double sxx = sx * x[j];
      for (std::size_t l = j; l < d; ++l, ++p) {
        double v = sxx * x[l];
        if (j == l) v -= sx;
        if (i == l) v -= s * x[j];
        if (i == j) v -= s * x[l];
        out[p] += v;
      }
    }
  }
}

inline Sym2 score2_gaussian(const Eigen::Ref<const Vector>& x) {
  Sym2 t(static_cast<std::size_t>(x.size()));
  add_score2_gaussian({x.data(), static_cast<std::size_t>(x.size())}, 1.0, t.data());
  return t;
}

inline Sym3 score3_gaussian(const Eigen::Ref<const Vector>& x) {
  Sym3 t(static_cast<std::size_t>(x.size()));
  add_score3_gaussian({x.data(), static_cast<std::size_t>(x.size())}, 1.0, t.data());
  return t;
}

/// Posterior component responsibilities r_c(x) of an identity-covariance
/// Gaussian mixture, computed with log-sum-exp.
inline Vector mixture_responsibilities(const Eigen::Ref<const Vector>& x, const InputDistribution& dist) {
  const Eigen::Index c = dist.weights.size();
  Vector logr(c);
  for (Eigen::Index i = 0; i < c; ++i) {
    const double w = dist.weights[i];
    logr[i] = w > 0 ? std::log(w) - 0.5 * (x - dist.means.row(i).transpose()).squaredNorm()
                    : -std::numeric_limits<double>::infinity();
  }
  const double mx = logr.maxCoeff();
  Vector r = (logr.array() - mx).exp().matrix();
  return r / r.sum();
}

/// Accumulates s * S_m(x) for the given input law into out (m = 2 or 3).
/// For the mixture, (-1)^m grad^m p / p = sum_c r_c(x) He_m(x - mu_c).
inline void add_score(std::span<const double> x, const InputDistribution& dist, int order, double s,
                      std::span<double> out, std::vector<double>& scratch) {
  if (order != 2 && order != 3) throw ConfigError("score order must be 2 or 3");
  auto add = order == 2 ? add_score2_gaussian : add_score3_gaussian;
  if (dist.kind == InputKind::StandardGaussian) {
    add(x, s, out);
    return;
  }
  const Eigen::Map<const Vector> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  const Vector r = mixture_responsibilities(xv, dist);
  scratch.resize(x.size());
  for (Eigen::Index c = 0; c < r.size(); ++c) {
    if (r[c] == 0.0) continue;
    for (std::size_t j = 0; j < x.size(); ++j) scratch[j] = x[j] - dist.means(c, static_cast<Eigen::Index>(j));
    add(scratch, s * r[c], out);
  }
}

inline Sym2 score2(const Eigen::Ref<const Vector>& x, const InputDistribution& dist) {
  if (x.size() != dist.d) throw DataError("score: dimension mismatch");
  Sym2 t(static_cast<std::size_t>(x.size()));
  std::vector<double> scratch;
  add_score({x.data(), static_cast<std::size_t>(x.size())}, dist, 2, 1.0, t.data(), scratch);
  return t;
}

inline Sym3 score3(const Eigen::Ref<const Vector>& x, const InputDistribution& dist) {
  if (x.size() != dist.d) throw DataError("score: dimension mismatch");
  Sym3 t(static_cast<std::size_t>(x.size()));
  std::vector<double> scratch;
  add_score({x.data(), static_cast<std::size_t>(x.size())}, dist, 3, 1.0, t.data(), scratch);
  return t;
}

}  // namespace moe
