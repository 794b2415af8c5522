#include <cmath>

#include <gtest/gtest.h>

#include "moe/gating_em.hpp"
#include "moe/metrics.hpp"
#include "oracles.hpp"

namespace moe {
namespace {

// k = 2, a1 = e0, a2 = e1, w* = w_norm * e2 (orthogonal to both regressors).
MoeModel toy(Eigen::Index d, double w_norm, double sigma) {
  MoeModel m;
  m.a = Matrix::Zero(2, d);
  m.a(0, 0) = 1.0;
  m.a(1, 1) = 1.0;
  m.w = Matrix::Zero(1, d);
  m.w(0, 2) = w_norm;
  m.sigma = sigma;
  m.radius = 1.0;
  return m;
}

Dataset draw(const MoeModel& m, Eigen::Index n, std::uint64_t seed) {
  return sample_dataset(m, InputDistribution::standard_gaussian(m.d()), n, seed);
}

TEST(EStep, IdenticalExpertsGiveThePrior) {
  const MoeModel m = toy(4, 1.0, 0.1);
  const Dataset data = draw(m, 200, 1);
  Matrix a(3, 4);
  a.rowwise() = m.a.row(0);
  Matrix w(2, 4);
  w << 0.3, 0, 0.2, -0.5, -0.1, 0.4, 0, 0.2;
  const Posteriors post = e_step(data, a, w, 0.1, Activation::linear());
  const Matrix prior = log_gating(data.x, w).array().exp().matrix();
  EXPECT_LT((post.p - prior).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(EStep, WellSeparatedExpertsAndSingleExpert) {
  Dataset one;
  one.x = RowMatrix(1, 2);
  one.x << 1.0, 0.0;
  Matrix a(2, 2);
  a << 1, 0, 0, 1;
  one.y = Vector::Constant(1, 1.0);  // g(a1.x) = 1, g(a2.x) = 0
  const double sigma = 0.01;
  const Posteriors post = e_step(one, a, Matrix::Zero(1, 2), sigma, Activation::linear());
  EXPECT_NEAR(post.p(0, 0), 1.0 / (1.0 + std::exp(-1.0 / (2 * sigma * sigma))), 1e-15);

  const Posteriors single = e_step(one, a.topRows(1), Matrix(0, 2), 0.3, Activation::linear());
  EXPECT_EQ(single.p(0, 0), 1.0);
}

TEST(EStep, PermutingExpertsPermutesPosteriors) {
  const Dataset data = draw(toy(5, 1.0, 0.2), 300, 4);
  Matrix a(3, 5), w(2, 5);
  a << 1, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0;
  w << 0.1, 0.2, 0.3, 0, 0.5, -0.4, 0.1, 0, 0.2, 0;
  const Posteriors p = e_step(data, a, w, 0.2, Activation::sigmoid());
  Matrix a2 = a, w2 = w;
  a2.row(0).swap(a2.row(1));
  w2.row(0).swap(w2.row(1));
  const Posteriors q = e_step(data, a2, w2, 0.2, Activation::sigmoid());
  EXPECT_LT((p.p.col(0) - q.p.col(1)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((p.p.col(2) - q.p.col(2)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((p.p.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-14);
  EXPECT_NEAR(p.loglik, q.loglik, 1e-12);
}

TEST(MStep, GradientMatchesFiniteDifferences) {
  const Dataset data = draw(toy(4, 1.0, 0.1), 500, 2);
  Matrix post(500, 3);
  for (Eigen::Index r = 0; r < 500; ++r) {
    const double u = 0.5 + 0.4 * std::sin(double(r));
    post.row(r) << u * 0.6, u * 0.4, 1 - u;
  }
  Matrix w(2, 4);
  w << 0.2, -0.1, 0.3, 0.0, 0.1, 0.1, -0.2, 0.4;
  const Matrix g = q_gradient(data.x, post, w);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < 2; ++i)
    for (Eigen::Index j = 0; j < 4; ++j) {
      Matrix wp = w, wm = w;
      wp(i, j) += h;
      wm(i, j) -= h;
      EXPECT_NEAR((q_value(data.x, post, wp) - q_value(data.x, post, wm)) / (2 * h), g(i, j), 1e-8);
    }
}

TEST(MStep, UniformPosteriorsOnSymmetricInputsGiveZero) {
  Dataset data = draw(toy(4, 1.0, 0.1), 1000, 3);
  RowMatrix x(2000, 4);
  x << data.x, -data.x;
  const Matrix post = Matrix::Constant(2000, 2, 0.5);
  Matrix init(1, 4);
  init << 0.5, -0.3, 0.2, 0.1;
  const MStepResult r = m_step(x, post, init, 1.0);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.w.norm(), 1e-6);
  EXPECT_GE(r.q, q_value(x, post, init));
}

TEST(MStep, SeparableLabelsPinTheRadius) {
  const Dataset data = draw(toy(3, 1.0, 0.1), 800, 5);
  const Vector u = Eigen::Vector3d(0.0, 0.6, 0.8);
  Matrix post = Matrix::Zero(800, 2);
  for (Eigen::Index r = 0; r < 800; ++r) post(r, data.x.row(r).dot(u) > 0 ? 0 : 1) = 1.0;
  for (double radius : {1.0, 2.5}) {
    const MStepResult res = m_step(data.x, post, Matrix::Zero(1, 3), radius);
    EXPECT_NEAR(res.w.norm(), radius, 1e-12);
    EXPECT_GT(res.w.row(0).dot(u), 0.9 * radius);
  }
}

TEST(GatingEm, FixedPointAtTruth) {
  const MoeModel m = toy(10, 1.0, 0.1);
  const Dataset data = draw(m, 100000, 6);
  GatingOptions o;
  o.init = m.w;
  o.max_iters = 1;
  const GatingState st = run_em(data, m.a, m.sigma, m.activation, o);
  EXPECT_LT((st.w - m.w).norm(), 0.05);
}

TEST(GatingEm, ConvergesFromRandomStartsWithMonotoneLikelihood) {
  const MoeModel m = toy(6, 1.0, 0.1);
  const Dataset data = draw(m, 20000, 7);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    GatingOptions o;
    o.seed = seed;
    o.truth = m.w;
    const GatingState st = run_em(data, m.a, m.sigma, m.activation, o);
    EXPECT_TRUE(st.converged);
    EXPECT_LT(st.trace.back().dist_to_truth, 0.1);
    for (std::size_t t = 1; t < st.trace.size(); ++t) {
      EXPECT_GE(st.trace[t].loglik, st.trace[t - 1].loglik - 1e-9) << t;
      EXPECT_EQ(st.trace[t].iter, int(t));
    }
    // contraction towards the truth until the statistical floor
    for (std::size_t t = 1; t < st.trace.size() && st.trace[t - 1].dist_to_truth > 0.1; ++t)
      EXPECT_LT(st.trace[t].dist_to_truth, st.trace[t - 1].dist_to_truth);
  }
}

TEST(GatingEm, NoiselessLabelsUseHardAssignment) {
  const MoeModel m = toy(5, 1.0, 0.0);
  const Dataset data = draw(m, 5000, 8);
  GatingOptions o;
  o.seed = 4;
  const GatingState st = run_em(data, m.a, 0.0, m.activation, o);
  EXPECT_TRUE(st.hard_assignment);
  EXPECT_GT(gating_fit(st.w, m.w).fit, 0.95);
}

TEST(GatingEm, RegressorErrorFloorIsAtMostLinear) {
  const MoeModel m = toy(8, 1.0, 0.1);
  const Dataset data = draw(m, 50000, 9);
  const double kappa = std::sqrt(6.0 * (2.0 + m.sigma * m.sigma)) / 2.0;
  auto final_dist = [&](double eps) {
    Matrix a = m.a;
    a(0, 3) += eps;
    a(1, 4) -= eps;
    GatingOptions o;
    o.init = Matrix::Zero(1, 8);
    return (run_em(data, normalize_rows(a), m.sigma, m.activation, o).w - m.w).norm();
  };
  const double base = final_dist(0.0);
  for (double eps : {0.05, 0.1}) EXPECT_LE(final_dist(eps), base + kappa * eps) << eps;
}

TEST(GradientEm, ZeroStepKeepsTheStart) {
  const MoeModel m = toy(4, 1.0, 0.1);
  const Dataset data = draw(m, 1000, 10);
  GatingOptions o;
  o.seed = 3;
  const GatingState st = run_gradient_em(data, m.a, m.sigma, m.activation, 0.0, o);
  EXPECT_EQ(st.iterations, 1);
  EXPECT_TRUE(st.w == random_gating(2, 4, 1.0, 3));
  EXPECT_THROW(run_gradient_em(data, m.a, m.sigma, m.activation, -1.0, o), ConfigError);
}

TEST(GradientEm, ReachesTheEmLimit) {
  const MoeModel m = toy(10, 1.0, 0.1);
  const Dataset data = draw(m, 2000, 11);
  GatingOptions o;
  o.seed = 5;
  o.max_iters = 1000;
  const GatingState em = run_em(data, m.a, m.sigma, m.activation, o);
  const GatingState gem = run_gradient_em(data, m.a, m.sigma, m.activation, gating_constants().step(), o);
  EXPECT_TRUE(gem.converged);
  EXPECT_LE(max_row_distance(em.w, gem.w), 2 * o.eps / (1 - 0.9));
}

TEST(GatingConstants, MatchIndependentQuadrature) {
  const GatingConstants c = gating_constants();
  EXPECT_NEAR(c.lambda, 0.1442, 0.002);
  EXPECT_NEAR(c.mu, 0.25, 1e-3);
  EXPECT_NEAR(c.step(), 2.0 / (c.mu + c.lambda), 1e-15);
  // direct evaluation of E[f'(a Z) Z^2] and E[f'(a Z)] with a Gauss-Legendre rule
  const auto rule = oracle::normal_rule({}, 12.0, 30);
  auto f1 = [](double t) {
    const double s = 1.0 / (1.0 + std::exp(-t));
    return s * (1 - s);
  };
  const double a = c.lambda_at;
  const double along = oracle::expect(rule, [&](double z) { return f1(a * z) * z * z; });
  const double across = oracle::expect(rule, [&](double z) { return f1(a * z); });
  EXPECT_NEAR(std::min(along, across), c.lambda, 1e-9);
  double grid_min = 1.0;
  for (int i = 0; i <= 200; ++i) {
    const double b = i / 200.0;
    grid_min = std::min({grid_min, oracle::expect(rule, [&](double z) { return f1(b * z) * z * z; }),
                         oracle::expect(rule, [&](double z) { return f1(b * z); })});
  }
  EXPECT_LE(c.lambda, grid_min + 1e-9);
  EXPECT_NEAR(oracle::expect(rule, [&](double z) { return f1(c.mu_at * z); }), c.mu, 1e-9);
}

}  // namespace
}  // namespace moe
