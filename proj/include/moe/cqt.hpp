#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "activation.hpp"
#include "error.hpp"
#include "quadrature.hpp"

namespace moe {

/// How derivatives of the conditional label moments are integrated.
///
/// Stein: E[h^(m)(Z)] is computed as E[h(Z) He_m(Z)], which includes the
/// distributional parts of kinked activations (the Relu kink contributes a
/// point mass to g''). This is what makes the gating cross moments vanish.
///
/// Pointwise: derivatives are taken pointwise (Relu g'' = 0 everywhere). This
/// reproduces the coefficients that are usually quoted for Relu, but those do
/// not nullify the cross moments.
enum class CqtConvention { Stein, Pointwise };

inline std::string to_string(CqtConvention c) { return c == CqtConvention::Stein ? "stein" : "pointwise"; }

struct CqtOptions {
  int quadrature_order = 80;
  CqtConvention convention = CqtConvention::Stein;
};

/// Coefficients of P3(y) = y^3 + alpha y^2 + beta y and P2(y) = y^2 + gamma y.
struct CqtCoefficients {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double sigma = 0.0;
  Activation activation = Activation::linear();
  double c3 = 0.0;  // E[S3'''(Z)], scale of the rank-one terms of T3
  double c2 = 0.0;  // E[S2''(Z)], scale of the rank-one terms of T2
  CqtConvention convention = CqtConvention::Stein;
  int quadrature_order = 80;
};

inline double apply_p3(const CqtCoefficients& c, double y) { return y * (y * (y + c.alpha) + c.beta); }
inline double apply_p2(const CqtCoefficients& c, double y) { return y * (y + c.gamma); }

namespace detail {

/// E[Z^p 1{Z > 0}] for Z ~ N(0, 1).
inline double half_normal_moment(int p) {
  double odd_double_factorial = 1.0;  // (p-1)!!
  for (int i = p - 1; i > 1; i -= 2) odd_double_factorial *= i;
  if (p % 2 == 0) return 0.5 * odd_double_factorial;
  return odd_double_factorial / std::sqrt(2.0 * std::numbers::pi);
}

// Coefficients of He_h in the monomial basis, lowest degree first.
inline constexpr std::array<std::array<double, 4>, 4> kHermiteCoefficients{{
    {1.0, 0.0, 0.0, 0.0},
    {0.0, 1.0, 0.0, 0.0},
    {-1.0, 0.0, 1.0, 0.0},
    {0.0, -3.0, 0.0, 1.0},
}};

}  // namespace detail

/// m[j][h] = E[g(Z)^j He_h(Z)] for j, h in 0..3.
struct GaussianMoments {
  std::array<std::array<double, 4>, 4> m{};
};

inline GaussianMoments gaussian_moments(const Activation& act, int order) {
  GaussianMoments out;
  if (act.kind() == ActivationKind::Relu) {
    for (int j = 0; j < 4; ++j)
      for (int h = 0; h < 4; ++h) {
        if (j == 0) {
          out.m[0][h] = h == 0 ? 1.0 : 0.0;
          continue;
        }
        double s = 0.0;
        for (int q = 0; q < 4; ++q) s += detail::kHermiteCoefficients[h][q] * detail::half_normal_moment(j + q);
        out.m[j][h] = s;
      }
    return out;
  }
  const GaussHermiteRule rule = gauss_hermite(order);
  for (int j = 0; j < 4; ++j)
    for (int h = 0; h < 4; ++h)
      out.m[j][h] = rule.expect([&](double z) { return std::pow(act(z), j) * hermite_e(h, z); });
  return out;
}

/// Linear system for (alpha, beta) and the gamma quotient, as the 2x2 matrix
/// [[2E(g g'), E(g')], [2E(g'^2 + g g''), E(g'')]] with its right-hand side.
struct CqtSystem {
  Eigen::Matrix2d matrix;
  Eigen::Vector2d rhs;
  double gamma_numerator = 0.0;    // -2 E[g g']
  double gamma_denominator = 0.0;  // E[g']
};

inline CqtSystem stein_system(const GaussianMoments& g, double sigma) {
  const auto& m = g.m;
  const double s2 = sigma * sigma;
  CqtSystem sys;
  sys.matrix << m[2][1], m[1][1], m[2][2], m[1][2];
  sys.rhs << -m[3][1] - 3.0 * s2 * m[1][1], -m[3][2] - 3.0 * s2 * m[1][2];
  sys.gamma_numerator = -m[2][1];
  sys.gamma_denominator = m[1][1];
  return sys;
}

/// The same system from pointwise derivatives of g.
inline CqtSystem derivative_system(const Activation& act, double sigma, int order) {
  const double s2 = sigma * sigma;
  CqtSystem sys;
  if (act.kind() == ActivationKind::Relu) {
    const double h0 = detail::half_normal_moment(0), h1 = detail::half_normal_moment(1),
                 h2 = detail::half_normal_moment(2);
    sys.matrix << 2.0 * h1, h0, 2.0 * h0, 0.0;
    sys.rhs << -3.0 * (h2 + s2 * h0), -6.0 * h1;
    sys.gamma_numerator = -2.0 * h1;
    sys.gamma_denominator = h0;
    return sys;
  }
  const GaussHermiteRule rule = gauss_hermite(order);
  double egg1 = 0, eg1 = 0, e_row2 = 0, eg2 = 0, e_rhs1 = 0, e_rhs2 = 0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double z = rule.nodes[i], wt = rule.weights[i];
    const double g = act.eval(0, z), g1 = act.eval(1, z), g2 = act.eval(2, z);
    egg1 += wt * g * g1;
    eg1 += wt * g1;
    e_row2 += wt * (g1 * g1 + g * g2);
    eg2 += wt * g2;
    e_rhs1 += wt * (g * g * g1 + g1 * s2);
    e_rhs2 += wt * (g2 * (g * g + s2) + 2.0 * g * g1 * g1);
  }
  sys.matrix << 2.0 * egg1, eg1, 2.0 * e_row2, eg2;
  sys.rhs << -3.0 * e_rhs1, -3.0 * e_rhs2;
  sys.gamma_numerator = -2.0 * egg1;
  sys.gamma_denominator = eg1;
  return sys;
}

/// E[S3'(Z)], E[S3''(Z)], E[S3'''(Z)], E[S2'(Z)], E[S2''(Z)] and, for
/// quadrature-based values, the change when the quadrature order is doubled.
struct ConditionReport {
  double s3_first = 0, s3_second = 0, s3_third = 0, s2_first = 0, s2_second = 0;
  double err_s3_first = 0, err_s3_second = 0, err_s3_third = 0, err_s2_first = 0, err_s2_second = 0;

  bool satisfied(double tol = 1e-8) const {
    return std::abs(s3_first) <= tol && std::abs(s3_second) <= tol && std::abs(s2_first) <= tol &&
           std::abs(s3_third) >= 1e-6 && std::abs(s2_second) >= 1e-6;
  }
};

namespace detail {

inline std::array<double, 5> condition_values(const CqtCoefficients& c, int order) {
  const double s2 = c.sigma * c.sigma;
  const Activation& act = c.activation;
  if (c.convention == CqtConvention::Stein) {
    const auto m = gaussian_moments(act, order).m;
    auto s3 = [&](int h) { return m[3][h] + c.alpha * m[2][h] + (c.beta + 3.0 * s2) * m[1][h] + c.alpha * s2 * m[0][h]; };
    auto s2f = [&](int h) { return m[2][h] + c.gamma * m[1][h] + s2 * m[0][h]; };
    return {s3(1), s3(2), s3(3), s2f(1), s2f(2)};
  }
  if (act.kind() == ActivationKind::Relu) {
    const double h0 = half_normal_moment(0), h1 = half_normal_moment(1), h2 = half_normal_moment(2);
    return {3.0 * h2 + 2.0 * c.alpha * h1 + (c.beta + 3.0 * s2) * h0, 2.0 * c.alpha * h0 + 6.0 * h1, 6.0 * h0,
            2.0 * h1 + c.gamma * h0, 2.0 * h0};
  }
  const GaussHermiteRule rule = gauss_hermite(order);
  std::array<double, 5> v{};
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double z = rule.nodes[i], wt = rule.weights[i];
    const double g = act.eval(0, z), g1 = act.eval(1, z), g2 = act.eval(2, z), g3 = act.eval(3, z);
    v[0] += wt * (3.0 * g * g * g1 + 2.0 * c.alpha * g * g1 + (c.beta + 3.0 * s2) * g1);
    v[1] += wt * (2.0 * c.alpha * (g1 * g1 + g * g2) + c.beta * g2 + 3.0 * g2 * (g * g + s2) + 6.0 * g * g1 * g1);
    v[2] += wt * (2.0 * c.alpha * (3.0 * g1 * g2 + g * g3) + (c.beta + 3.0 * s2 + 3.0 * g * g) * g3 +
                  18.0 * g * g1 * g2 + 6.0 * g1 * g1 * g1);
    v[3] += wt * (2.0 * g * g1 + c.gamma * g1);
    v[4] += wt * (2.0 * (g1 * g1 + g * g2) + c.gamma * g2);
  }
  return v;
}

}  // namespace detail

inline ConditionReport check_conditions(const CqtCoefficients& c, int order = 0) {
  if (order <= 0) order = c.quadrature_order;
  const auto v = detail::condition_values(c, order);
  const auto v2 = detail::condition_values(c, 2 * order);
  ConditionReport r;
  r.s3_first = v[0];
  r.s3_second = v[1];
  r.s3_third = v[2];
  r.s2_first = v[3];
  r.s2_second = v[4];
  r.err_s3_first = std::abs(v[0] - v2[0]);
  r.err_s3_second = std::abs(v[1] - v2[1]);
  r.err_s3_third = std::abs(v[2] - v2[2]);
  r.err_s2_first = std::abs(v[3] - v2[3]);
  r.err_s2_second = std::abs(v[4] - v2[4]);
  return r;
}

/// Solves for (alpha, beta, gamma) so that E[S3'] = E[S3''] = 0 and E[S2'] = 0
/// under Z ~ N(0, 1), and verifies the nondegeneracy of E[S3'''] and E[S2''].
inline CqtCoefficients solve_cqt(const Activation& act, double sigma, const CqtOptions& opts = {}) {
  if (!(sigma >= 0.0)) throw ConfigError("solve_cqt: sigma must be nonnegative");
  const CqtSystem sys = opts.convention == CqtConvention::Stein
                            ? stein_system(gaussian_moments(act, opts.quadrature_order), sigma)
                            : derivative_system(act, sigma, opts.quadrature_order);
  const double det = sys.matrix.determinant();
  if (std::abs(det) <= 1e-12 * std::max(1.0, sys.matrix.cwiseAbs().maxCoeff()))
    throw NumericalError("activation '" + act.name() + "' not valid: singular CQT system (Condition 1)");
  if (std::abs(sys.gamma_denominator) <= 1e-12)
    throw NumericalError("activation '" + act.name() + "' not valid: E[g'] = 0 (Condition 2)");
  const Eigen::Vector2d ab = sys.matrix.partialPivLu().solve(sys.rhs);

  CqtCoefficients c;
  c.alpha = ab[0];
  c.beta = ab[1];
  c.gamma = sys.gamma_numerator / sys.gamma_denominator;
  c.sigma = sigma;
  c.activation = act;
  c.convention = opts.convention;
  c.quadrature_order = opts.quadrature_order;
  const auto v = detail::condition_values(c, opts.quadrature_order);
  c.c3 = v[2];
  c.c2 = v[4];
  if (std::abs(c.c3) < 1e-6)
    throw NumericalError("activation '" + act.name() + "' not valid: E[S3'''(Z)] vanishes (Condition 1)");
  if (std::abs(c.c2) < 1e-6)
    throw NumericalError("activation '" + act.name() + "' not valid: E[S2''(Z)] vanishes (Condition 2)");
  return c;
}

}  // namespace moe
