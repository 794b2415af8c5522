#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <gtest/gtest.h>

#include "moe/decomposition.hpp"
#include "moe/metrics.hpp"

namespace moe {
namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Matrix random_orthonormal_rows(Eigen::Index k, Eigen::Index d, unsigned seed) {
  Eigen::HouseholderQR<Matrix> qr(random_matrix(d, k, seed));
  return Matrix(qr.householderQ() * Matrix::Identity(d, k)).transpose();
}

CqtCoefficients scales(double c3, double c2) {
  CqtCoefficients c;
  c.c3 = c3;
  c.c2 = c2;
  return c;
}

TEST(Jacobi, AgreesWithEigenSolver) {
  for (unsigned seed : {1u, 2u, 3u}) {
    const Matrix b = random_matrix(7, 7, seed);
    const Matrix a = b + b.transpose();
    const SymmetricEigen j = jacobi_eigen(a);
    Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    Vector ref = es.eigenvalues();
    std::sort(ref.data(), ref.data() + ref.size(), [](double x, double y) { return std::abs(x) > std::abs(y); });
    for (Eigen::Index i = 0; i < 7; ++i) EXPECT_NEAR(j.values[i], ref[i], 1e-10);
    EXPECT_LT((a * j.vectors - j.vectors * j.values.asDiagonal()).norm(), 1e-10);
    EXPECT_LT((j.vectors.transpose() * j.vectors - Matrix::Identity(7, 7)).norm(), 1e-12);
  }
}

TEST(Whiten, IdentityAndDiagonalExamples) {
  const WhiteningMap id = whiten(Sym2::from_dense(Matrix::Identity(4, 4)), 4, 1);
  EXPECT_LT((id.w_map.cwiseAbs() * id.w_map.cwiseAbs().transpose() - Matrix::Identity(4, 4)).norm(), 1e-12);
  EXPECT_LT((id.w_map.transpose() * id.w_map - Matrix::Identity(4, 4)).norm(), 1e-12);

  Matrix t = Matrix::Zero(3, 3);
  t(0, 0) = 2.0;
  t(1, 1) = 1.0;
  const WhiteningMap wm = whiten(Sym2::from_dense(t), 2, 1);
  EXPECT_NEAR(std::abs(wm.w_map(0, 0)), 1.0 / std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(std::abs(wm.w_map(1, 1)), 1.0, 1e-14);
  EXPECT_NEAR(wm.w_map(1, 0), 0.0, 1e-14);
  EXPECT_NEAR(wm.w_map(2, 0) + wm.w_map(2, 1), 0.0, 1e-14);
}

TEST(Whiten, NonOrthogonalRegressorsBecomeOrthonormal) {
  const Matrix a = normalize_rows(random_matrix(3, 6, 9));
  const Vector s = (Vector(3) << 0.5, 0.3, 0.2).finished();
  const Matrix t2 = a.transpose() * s.asDiagonal() * a;
  const WhiteningMap wm = whiten(Sym2::from_dense(t2), 3, 1);
  Matrix tilde(3, 3);
  for (Eigen::Index i = 0; i < 3; ++i) tilde.col(i) = std::sqrt(s[i]) * wm.w_map.transpose() * a.row(i).transpose();
  EXPECT_LT((tilde.transpose() * tilde - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Whiten, RankDeficiencyIsReported) {
  Matrix a(2, 4);
  a << 1, 0, 0, 0, 1, 0, 0, 0;
  EXPECT_THROW(whiten(Sym2::from_dense(a.transpose() * a), 2, 1), NumericalError);
}

TEST(PowerMethod, SingleAndOrthogonalComponents) {
  const PowerResult one = power_method(Sym3::rank_one(5.0, Vector::Unit(1, 0)), 1);
  EXPECT_NEAR(one.components[0].eigenvalue, 5.0, 1e-12);
  EXPECT_NEAR(one.components[0].vector[0], 1.0, 1e-12);

  Sym3 t(2);
  t.add_rank_one(3.0, Vector::Unit(2, 0));
  t.add_rank_one(2.0, Vector::Unit(2, 1));
  const PowerResult two = power_method(t, 2);
  EXPECT_NEAR(two.components[0].eigenvalue, 3.0, 1e-12);
  EXPECT_NEAR(two.components[1].eigenvalue, 2.0, 1e-12);
  EXPECT_NEAR((two.components[0].vector - Vector::Unit(2, 0)).norm(), 0.0, 1e-12);
  EXPECT_NEAR((two.components[1].vector - Vector::Unit(2, 1)).norm(), 0.0, 1e-12);
  EXPECT_NEAR(two.deflation_residuals.back(), 0.0, 1e-12);
}

TEST(PowerMethod, RobustToSmallPerturbations) {
  const Eigen::Index k = 4;
  const Matrix v = random_orthonormal_rows(k, k, 4);
  Sym3 t(k);
  for (Eigen::Index i = 0; i < k; ++i) t.add_rank_one(4.0 - i, v.row(i).transpose());
  Sym3 noise(k);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  for (double& x : noise.data()) x = n(rng);
  const double eps = 1e-3;
  noise *= eps / noise.frobenius_norm();
  t += noise;
  PowerOptions o;
  o.seed = 77;
  const PowerResult r = power_method(t, k, o);
  for (Eigen::Index i = 0; i < k; ++i) {
    const Vector& est = r.components[static_cast<std::size_t>(i)].vector;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < k; ++j)
      best = std::min({best, (est - v.row(j).transpose()).norm(), (est + v.row(j).transpose()).norm()});
    EXPECT_LE(best, 10 * eps) << i;
    EXPECT_NEAR(r.components[static_cast<std::size_t>(i)].eigenvalue, 4.0 - i, 10 * eps);
  }
}

TEST(PowerMethod, ResultDoesNotDependOnSeedOrThreads) {
  const Eigen::Index k = 3;
  const Matrix v = random_orthonormal_rows(k, k, 5);
  Sym3 t(k);
  for (Eigen::Index i = 0; i < k; ++i) t.add_rank_one(3.0 - i, v.row(i).transpose());
  PowerOptions a, b;
  a.seed = 1;
  b.seed = 2;
  b.threads = 3;
  const PowerResult ra = power_method(t, k, a), rb = power_method(t, k, b);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_LT((ra.components[i].vector - rb.components[i].vector).norm(), 1e-10);
  PowerOptions c = a;
  c.threads = 4;
  const PowerResult rc = power_method(t, k, c);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(ra.components[i].vector == rc.components[i].vector);
}

// Population tensors T2 = c2 sum p_i a_i a_i^T, T3 = c3 sum p_i a_i^(x)3.
void check_exact_recovery(double c3, double c2) {
  const Eigen::Index k = 4, d = 7;
  const Matrix a = normalize_rows(random_matrix(k, d, 31));
  const Vector p = (Vector(k) << 0.4, 0.3, 0.2, 0.1).finished();
  Sym3 t3(d);
  for (Eigen::Index i = 0; i < k; ++i) t3.add_rank_one(c3 * p[i], a.row(i).transpose());
  const Sym2 t2 = Sym2::from_dense(c2 * a.transpose() * p.asDiagonal() * a);
  const DecompositionResult r = recover_regressors(t2, t3, k, scales(c3, c2));
  const RegressorFit fit = regressor_fit(r.vectors, a);
  EXPECT_GE(fit.fit, 1.0 - 1e-6);
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::Index j = fit.permutation[static_cast<std::size_t>(i)];
    EXPECT_GT(r.vectors.row(j).dot(a.row(i)), 0.0) << "sign";
    EXPECT_NEAR(r.weights[j], p[i], 1e-8);
  }
  EXPECT_LT(r.residual, 1e-8);
  for (std::size_t i = 1; i < r.deflation_residuals.size(); ++i)
    EXPECT_LE(r.deflation_residuals[i], r.deflation_residuals[i - 1] + 1e-12);
  for (bool f : r.flagged) EXPECT_FALSE(f);
}

TEST(Recovery, ExactPopulationTensors) { check_exact_recovery(6.0, 2.0); }
TEST(Recovery, NegativeScalesAreSignCorrected) { check_exact_recovery(-0.7, -1.5); }
TEST(Recovery, MixedScaleSigns) { check_exact_recovery(0.37, -0.36); }

TEST(Recovery, RejectsBadShapes) {
  EXPECT_THROW(recover_regressors(Sym2(3), Sym3(4), 2, scales(1, 1)), DataError);
  EXPECT_THROW(recover_regressors(Sym2(3), Sym3(3), 4, scales(1, 1)), ConfigError);
  EXPECT_THROW(recover_regressors(Sym2(3), Sym3(3), 2, scales(0, 1)), NumericalError);
}

}  // namespace
}  // namespace moe
