#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "activation.hpp"
#include "error.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "quadrature.hpp"
#include "random.hpp"

namespace moe {

inline constexpr double kSigmaSquaredFloor = 1e-12;

/// n x k matrix of log N(y_s | g(<a_i, x_s>), sigma^2). Fixed while the
/// regressors are fixed, so gating EM computes it once.
inline Matrix log_densities(const Dataset& data, const Matrix& a, double sigma, const Activation& act) {
  if (a.cols() != data.d()) throw DataError("log_densities: regressor dimension does not match the data");
  const double s2 = std::max(sigma * sigma, kSigmaSquaredFloor);
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * s2);
  Matrix proj = data.x * a.transpose();
  for (Eigen::Index s = 0; s < proj.rows(); ++s)
    for (Eigen::Index i = 0; i < proj.cols(); ++i) {
      const double r = data.y[s] - act(proj(s, i));
      proj(s, i) = log_norm - 0.5 * r * r / s2;
    }
  return proj;
}

/// Row-wise log softmax of the gating logits (<w_1,x>, ..., <w_{k-1},x>, 0).
inline Matrix log_gating(const RowMatrix& x, const Matrix& w) {
  const Eigen::Index n = x.rows(), k = w.rows() + 1;
  Matrix out(n, k);
  if (k > 1) out.leftCols(k - 1) = x * w.transpose();
  out.col(k - 1).setZero();
  for (Eigen::Index s = 0; s < n; ++s) {
    const double mx = out.row(s).maxCoeff();
    const double lse = mx + std::log((out.row(s).array() - mx).exp().sum());
    out.row(s).array() -= lse;
  }
  return out;
}

struct Posteriors {
  Matrix p;                 // n x k, rows sum to 1
  double loglik = 0.0;      // mean observed-data log-likelihood (NaN for hard assignment)
  bool hard_assignment = false;
};

/// Responsibilities from cached log densities, in the log domain.
inline Posteriors posteriors_from_cache(const RowMatrix& x, const Matrix& w, const Matrix& log_dens) {
  Matrix lp = log_gating(x, w) + log_dens;
  Posteriors out;
  double total = 0.0;
  for (Eigen::Index s = 0; s < lp.rows(); ++s) {
    const double mx = lp.row(s).maxCoeff();
    const double lse = mx + std::log((lp.row(s).array() - mx).exp().sum());
    lp.row(s) = (lp.row(s).array() - lse).exp().matrix();
    total += lse;
  }
  out.p = std::move(lp);
  out.loglik = total / static_cast<double>(x.rows());
  return out;
}

/// One-hot responsibilities by smallest residual (noiseless labels).
inline Posteriors hard_posteriors(const Dataset& data, const Matrix& a, const Activation& act) {
  Posteriors out;
  out.hard_assignment = true;
  out.loglik = std::numeric_limits<double>::quiet_NaN();
  out.p = Matrix::Zero(data.n(), a.rows());
  const Matrix proj = data.x * a.transpose();
  for (Eigen::Index s = 0; s < data.n(); ++s) {
    Eigen::Index best = 0;
    double best_r = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double r = std::abs(data.y[s] - act(proj(s, i)));
      if (r < best_r) {
        best_r = r;
        best = i;
      }
    }
    out.p(s, best) = 1.0;
  }
  return out;
}

inline Posteriors e_step(const Dataset& data, const Matrix& a, const Matrix& w, double sigma, const Activation& act) {
  if (w.rows() != a.rows() - 1) throw DataError("e_step: gating must have k-1 rows");
  if (sigma == 0.0) return hard_posteriors(data, a, act);
  return posteriors_from_cache(data.x, w, log_densities(data, a, sigma, act));
}

/// Empirical Q(w | w_t) for fixed responsibilities.
inline double q_value(const RowMatrix& x, const Matrix& post, const Matrix& w) {
  const Eigen::Index k = w.rows() + 1;
  if (k == 1) return 0.0;
  const Matrix logits = x * w.transpose();
  double s = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = 0.0;
    for (Eigen::Index i = 0; i < k - 1; ++i) mx = std::max(mx, logits(r, i));
    double z = std::exp(-mx);
    double lin = 0.0;
    for (Eigen::Index i = 0; i < k - 1; ++i) {
      z += std::exp(logits(r, i) - mx);
      lin += post(r, i) * logits(r, i);
    }
    s += lin - (mx + std::log(z));
  }
  return s / static_cast<double>(x.rows());
}

/// Gradient of Q(. | w_t) at w: (1/n) sum_s (p_s - softmax(w x_s)) x_s^T over the first k-1 experts.
inline Matrix q_gradient(const RowMatrix& x, const Matrix& post, const Matrix& w) {
  const Eigen::Index k = w.rows() + 1;
  if (k == 1) return Matrix(0, x.cols());
  Matrix resid = post.leftCols(k - 1) - log_gating(x, w).leftCols(k - 1).array().exp().matrix();
  return resid.transpose() * x / static_cast<double>(x.rows());
}

struct MStepOptions {
  int max_iters = 500;
  double tol = 1e-7;
  double armijo = 1e-4;
  double shrink = 0.5;
};

struct MStepResult {
  Matrix w;
  double q = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Maximizes Q over the product of radius-R balls by projected gradient ascent
/// with Armijo backtracking, starting from w_init.
inline MStepResult m_step(const RowMatrix& x, const Matrix& post, const Matrix& w_init, double radius,
                          const MStepOptions& opts = {}) {
  if (post.rows() != x.rows() || post.cols() != w_init.rows() + 1) throw DataError("m_step: posterior shape mismatch");
  MStepResult out;
  out.w = w_init;
  project_rows(out.w, radius);
  out.q = q_value(x, post, out.w);
  if (w_init.rows() == 0) {
    out.converged = true;
    return out;
  }
  double eta = 1.0;
  for (int it = 0; it < opts.max_iters; ++it) {
    const Matrix g = q_gradient(x, post, out.w);
    Matrix unit = out.w + g;
    project_rows(unit, radius);
    if ((unit - out.w).norm() <= opts.tol) {
      out.converged = true;
      break;
    }
    bool accepted = false;
    while (eta > 1e-20) {
      Matrix cand = out.w + eta * g;
      project_rows(cand, radius);
      const double qc = q_value(x, post, cand);
      if (qc >= out.q + opts.armijo * (g.array() * (cand - out.w).array()).sum()) {
        out.w = std::move(cand);
        out.q = qc;
        accepted = true;
        break;
      }
      eta *= opts.shrink;
    }
    out.iterations = it + 1;
    if (!accepted) {
      out.converged = true;  // no ascent direction left at machine precision
      break;
    }
    eta *= 2.0;
  }
  return out;
}

struct TraceRecord {
  int iter = 0;
  double step_norm = std::numeric_limits<double>::quiet_NaN();
  double q_value = std::numeric_limits<double>::quiet_NaN();
  double dist_to_truth = std::numeric_limits<double>::quiet_NaN();
  double loglik = std::numeric_limits<double>::quiet_NaN();
};

struct GatingOptions {
  double radius = 1.0;
  double eps = 1e-4;
  int max_iters = 100;
  std::uint64_t seed = 0;
  std::optional<Matrix> init;   // default: rows uniform in the radius ball
  std::optional<Matrix> truth;  // enables dist_to_truth in the trace
  MStepOptions m_step;
  bool keep_iterates = false;
};

struct GatingState {
  Matrix w;
  Matrix posteriors;
  std::vector<TraceRecord> trace;  // row 0 is the initial point
  std::vector<Matrix> iterates;    // w_0, w_1, ... when requested
  double radius = 1.0;
  int iterations = 0;
  bool converged = false;
  bool hard_assignment = false;
};

/// Gating initial point: rows uniform in the radius ball.
inline Matrix random_gating(Eigen::Index k, Eigen::Index d, double radius, std::uint64_t seed) {
  Engine rng = make_engine(seed, 0x6a7e);
  Matrix w(std::max<Eigen::Index>(k - 1, 0), d);
  for (Eigen::Index i = 0; i + 1 < k; ++i) w.row(i) = uniform_in_ball(rng, d, radius).transpose();
  return w;
}

namespace detail {

template <typename Update>
GatingState run_gating_loop(const Dataset& data, const Matrix& a, double sigma, const Activation& act,
                            const GatingOptions& opts, Update&& update) {
  data.validate();
  if (a.cols() != data.d()) throw DataError("gating EM: regressor dimension does not match the data");
  if (!(opts.radius > 0)) throw ConfigError("gating EM: radius must be positive");
  const Eigen::Index k = a.rows();
  GatingState st;
  st.radius = opts.radius;
  st.w = opts.init ? *opts.init : random_gating(k, data.d(), opts.radius, opts.seed);
  if (st.w.rows() != k - 1 || (k > 1 && st.w.cols() != data.d())) throw ConfigError("gating EM: init must be (k-1) x d");
  project_rows(st.w, opts.radius);

  const bool hard = sigma == 0.0;
  const Matrix log_dens = hard ? Matrix() : log_densities(data, a, sigma, act);
  auto estep = [&](const Matrix& w) {
    return hard ? hard_posteriors(data, a, act) : posteriors_from_cache(data.x, w, log_dens);
  };
  auto dist = [&](const Matrix& w) {
    return opts.truth ? max_row_distance(w, *opts.truth) : std::numeric_limits<double>::quiet_NaN();
  };

  Posteriors post = estep(st.w);
  st.hard_assignment = post.hard_assignment;
  st.trace.push_back({0, std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
                      dist(st.w), post.loglik});
  if (opts.keep_iterates) st.iterates.push_back(st.w);
  for (int t = 1; t <= opts.max_iters; ++t) {
    auto [next, q] = update(post.p, st.w);
    const double step = max_row_distance(next, st.w);
    st.w = std::move(next);
    post = estep(st.w);
    st.trace.push_back({t, step, q, dist(st.w), post.loglik});
    if (opts.keep_iterates) st.iterates.push_back(st.w);
    st.iterations = t;
    if (step < opts.eps) {
      st.converged = true;
      break;
    }
  }
  st.posteriors = std::move(post.p);
  return st;
}

}  // namespace detail

/// Gating-only EM with the regressors held fixed.
inline GatingState run_em(const Dataset& data, const Matrix& a, double sigma, const Activation& act,
                          const GatingOptions& opts = {}) {
  return detail::run_gating_loop(data, a, sigma, act, opts, [&](const Matrix& p, const Matrix& w) {
    MStepResult r = m_step(data.x, p, w, opts.radius, opts.m_step);
    return std::pair<Matrix, double>(std::move(r.w), r.q);
  });
}

/// Gradient EM: one projected ascent step of size alpha on Q(. | w_t) per iteration.
inline GatingState run_gradient_em(const Dataset& data, const Matrix& a, double sigma, const Activation& act,
                                   double alpha, const GatingOptions& opts = {}) {
  if (!(alpha >= 0.0)) throw ConfigError("gradient EM: step must be nonnegative");
  return detail::run_gating_loop(data, a, sigma, act, opts, [&](const Matrix& p, const Matrix& w) {
    Matrix next = w + alpha * q_gradient(data.x, p, w);
    project_rows(next, opts.radius);
    const double q = q_value(data.x, p, next);
    return std::pair<Matrix, double>(std::move(next), q);
  });
}

struct GatingConstants {
  double lambda = 0.0;  // min over ||w|| <= 1 of the smallest eigenvalue of E[f'(w.x) x x^T]
  double mu = 0.0;      // max over ||w|| <= 1 of the largest eigenvalue
  double lambda_at = 0.0;
  double mu_at = 0.0;
  double step() const { return 2.0 / (mu + lambda); }
};

/// For f the logistic function and x ~ N(0, I), E[f'(w.x) x x^T] has eigenvalue
/// E f'(aZ) + a^2 E f'''(aZ) along w and E f'(aZ) across it, with a = ||w||.
/// Both are evaluated by Gauss-Hermite quadrature on a grid over a in [0, radius]
/// and refined by golden-section search around the grid optimum.
inline GatingConstants gating_constants(double radius = 1.0, int order = 120, int grid = 1000) {
  const GaussHermiteRule rule = gauss_hermite(order);
  auto f1 = [](double t) { return activation_eval(Activation::sigmoid(), 1, t); };
  auto f3 = [](double t) { return activation_eval(Activation::sigmoid(), 3, t); };
  auto eig = [&](double a) {
    const double across = rule.expect([&](double z) { return f1(a * z); });
    const double along = across + a * a * rule.expect([&](double z) { return f3(a * z); });
    return std::pair<double, double>(std::min(across, along), std::max(across, along));
  };
  auto refine = [&](double center, auto&& objective) {
    const double h = radius / grid;
    double lo = std::max(0.0, center - h), hi = std::min(radius, center + h);
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 100; ++it) {
      const double m1 = hi - g * (hi - lo), m2 = lo + g * (hi - lo);
      if (objective(m1) < objective(m2)) hi = m2;
      else lo = m1;
    }
    return 0.5 * (lo + hi);
  };
  GatingConstants c;
  c.lambda = std::numeric_limits<double>::infinity();
  c.mu = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= grid; ++i) {
    const double a = radius * i / grid;
    const auto [lo, hi] = eig(a);
    if (lo < c.lambda) {
      c.lambda = lo;
      c.lambda_at = a;
    }
    if (hi > c.mu) {
      c.mu = hi;
      c.mu_at = a;
    }
  }
  c.lambda_at = refine(c.lambda_at, [&](double a) { return eig(a).first; });
  c.mu_at = refine(c.mu_at, [&](double a) { return -eig(a).second; });
  c.lambda = std::min(c.lambda, eig(c.lambda_at).first);
  c.mu = std::max(c.mu, eig(c.mu_at).second);
  return c;
}

}  // namespace moe
