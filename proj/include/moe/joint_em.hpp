#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Cholesky>

#include "activation.hpp"
#include "error.hpp"
#include "gating_em.hpp"
#include "linalg.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "random.hpp"

namespace moe {

struct WeightedLeastSquares {
  Vector a;  // argmin a^T H a - 2 b^T a
  bool ridge = false;
};

/// Closed-form weighted least squares; adds a ridge when H is numerically singular.
inline WeightedLeastSquares weighted_least_squares(const Matrix& h, const Vector& b, double ridge = 1e-8) {
  WeightedLeastSquares out;
  Eigen::LDLT<Matrix> ldlt(h);
  const double scale = std::max(h.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  const Vector diag = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success || diag.minCoeff() <= 1e-12 * scale) {
    out.ridge = true;
    ldlt.compute(h + ridge * Matrix::Identity(h.rows(), h.cols()));
  }
  out.a = ldlt.solve(b);
  return out;
}

struct JointOptions {
  double radius = 1.0;
  double eps = 1e-4;
  int max_iters = 100;
  std::uint64_t seed = 0;
  std::optional<Matrix> init_a;
  std::optional<Matrix> init_w;
  std::optional<Matrix> truth_a;  // with truth_w, enables param_error in the trace
  std::optional<Matrix> truth_w;
  MStepOptions m_step;
  int expert_iters = 50;  // inner ascent iterations for nonlinear experts
};

struct JointState {
  Matrix a;
  Matrix w;
  Matrix posteriors;
  std::vector<TraceRecord> trace;  // dist_to_truth holds E(A, W)
  std::vector<double> unconstrained_norms;  // last linear M-step, before renormalization
  int iterations = 0;
  bool converged = false;
  bool ridge_flagged = false;
};

namespace detail {

/// Responsibility-weighted Gaussian log-likelihood of one expert, up to constants.
inline double expert_objective(const Dataset& data, const Vector& p, const Vector& a, const Activation& act) {
  const Vector proj = data.x * a;
  double s = 0.0;
  for (Eigen::Index r = 0; r < data.n(); ++r) {
    const double e = data.y[r] - act(proj[r]);
    s -= p[r] * e * e;
  }
  return s / static_cast<double>(data.n());
}

/// Riemannian gradient ascent on the sphere with normalization retraction and backtracking.
inline Vector expert_ascent(const Dataset& data, const Vector& p, Vector a, const Activation& act, int iters) {
  double f = expert_objective(data, p, a, act);
  double eta = 1.0;
  for (int it = 0; it < iters; ++it) {
    const Vector proj = data.x * a;
    Vector g = Vector::Zero(a.size());
    for (Eigen::Index r = 0; r < data.n(); ++r) {
      const double t = proj[r];
      g += (2.0 * p[r] * (data.y[r] - act(t)) * act.eval(1, t)) * data.x.row(r).transpose();
    }
    g /= static_cast<double>(data.n());
    g -= g.dot(a) * a;
    if (g.norm() < 1e-10) break;
    bool accepted = false;
    while (eta > 1e-16) {
      const Vector cand = (a + eta * g).normalized();
      const double fc = expert_objective(data, p, cand, act);
      if (fc >= f + 1e-4 * eta * g.squaredNorm()) {
        a = cand;
        f = fc;
        accepted = true;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) break;
    eta *= 2.0;
  }
  return a;
}

}  // namespace detail

/// Classical EM over regressors and gating from a random start.
inline JointState run_joint_em(const Dataset& data, Eigen::Index k, double sigma, const Activation& act,
                               const JointOptions& opts = {}) {
  data.validate();
  if (k < 2) throw ConfigError("joint EM needs k >= 2");
  if (!(sigma > 0.0)) throw ConfigError("joint EM needs sigma > 0");
  const Eigen::Index d = data.d();
  JointState st;
  Engine rng = make_engine(opts.seed, 0x101e);
  if (opts.init_a) {
    st.a = normalize_rows(*opts.init_a);
  } else {
    st.a.resize(k, d);
    for (Eigen::Index i = 0; i < k; ++i) st.a.row(i) = uniform_on_sphere(rng, d).transpose();
  }
  if (opts.init_w) {
    st.w = *opts.init_w;
  } else {
    st.w.resize(k - 1, d);
    for (Eigen::Index i = 0; i + 1 < k; ++i) st.w.row(i) = uniform_in_ball(rng, d, opts.radius).transpose();
  }
  if (st.a.rows() != k || st.a.cols() != d || st.w.rows() != k - 1 || st.w.cols() != d)
    throw ConfigError("joint EM: initial parameters have the wrong shape");
  project_rows(st.w, opts.radius);

  const bool have_truth = opts.truth_a && opts.truth_w;
  auto error = [&] {
    return have_truth ? param_error(st.a, st.w, *opts.truth_a, *opts.truth_w).error
                      : std::numeric_limits<double>::quiet_NaN();
  };

  Posteriors post = e_step(data, st.a, st.w, sigma, act);
  st.trace.push_back({0, std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(), error(),
                      post.loglik});
  const double inv_n = 1.0 / static_cast<double>(data.n());
  for (int t = 1; t <= opts.max_iters; ++t) {
    Matrix a_next(k, d);
    st.unconstrained_norms.assign(static_cast<std::size_t>(k), std::numeric_limits<double>::quiet_NaN());
    for (Eigen::Index i = 0; i < k; ++i) {
      const Vector p = post.p.col(i);
      if (act.kind() == ActivationKind::Linear) {
        const Matrix h = data.x.transpose() * p.asDiagonal() * data.x * inv_n;
        const Vector b = data.x.transpose() * p.cwiseProduct(data.y) * inv_n;
        const WeightedLeastSquares ls = weighted_least_squares(h, b);
        st.ridge_flagged = st.ridge_flagged || ls.ridge;
        st.unconstrained_norms[static_cast<std::size_t>(i)] = ls.a.norm();
        const double nrm = ls.a.norm();
        if (nrm > 0.0) a_next.row(i) = (ls.a / nrm).transpose();
        else a_next.row(i) = st.a.row(i);
      } else {
        a_next.row(i) = detail::expert_ascent(data, p, st.a.row(i).transpose(), act, opts.expert_iters).transpose();
      }
    }
    MStepResult g = m_step(data.x, post.p, st.w, opts.radius, opts.m_step);
    const double step = std::max(max_row_distance(a_next, st.a), max_row_distance(g.w, st.w));
    st.a = std::move(a_next);
    st.w = std::move(g.w);
    post = e_step(data, st.a, st.w, sigma, act);
    st.trace.push_back({t, step, g.q, error(), post.loglik});
    st.iterations = t;
    if (step < opts.eps) {
      st.converged = true;
      break;
    }
  }
  st.posteriors = std::move(post.p);
  return st;
}

}  // namespace moe
