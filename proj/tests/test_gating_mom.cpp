#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "moe/gating_mom.hpp"
#include "moe/metrics.hpp"

namespace moe {
namespace {

MoeModel two_experts(Eigen::Index d, double w_norm, double sigma) {
  MoeModel m;
  m.a = Matrix::Zero(2, d);
  m.a(0, 0) = 1.0;
  m.a(1, 1) = 1.0;
  m.w = Matrix::Zero(1, d);
  m.w(0, 2) = w_norm;
  m.sigma = sigma;
  return m;
}

Dataset draw(const MoeModel& m, Eigen::Index n, std::uint64_t seed) {
  return sample_dataset(m, InputDistribution::standard_gaussian(m.d()), n, seed);
}

TEST(Mom, RecoversTheGatingDirection) {
  const MoeModel m = two_experts(10, 1.0, 0.05);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Dataset data = draw(m, 100000, seed);
    const MomResult r = mom_gating(data, m.a.row(0).transpose(), m.a.row(1).transpose(), m.sigma);
    EXPECT_GE(gating_fit(r.w, m.w.row(0).transpose()).fit, 0.95) << seed;
    EXPECT_GT(r.w.dot(m.w.row(0).transpose()), 0.0) << "sign";
    EXPECT_NEAR(r.w.norm(), 1.0, 1e-12);
    EXPECT_FALSE(r.low_signal);
  }
}

TEST(Mom, SwappedExpertsFlipTheDirection) {
  const MoeModel m = two_experts(6, 1.0, 0.05);
  const Dataset data = draw(m, 50000, 4);
  const MomResult r = mom_gating(data, m.a.row(1).transpose(), m.a.row(0).transpose(), m.sigma);
  EXPECT_LT(r.w.dot(m.w.row(0).transpose()), -0.9);
}

TEST(Mom, ZeroGatingGivesANoiseLevelMoment) {
  const MoeModel m = two_experts(8, 0.0, 0.05);
  const Eigen::Index n = 100000;
  const Dataset data = draw(m, n, 5);
  const MomResult r = mom_gating(data, m.a.row(0).transpose(), m.a.row(1).transpose(), m.sigma);
  EXPECT_LT(r.moment.norm(), 4.0 * std::sqrt(8.0 / double(n)));
}

TEST(RatioCdf, LimitsAndMidpoint) {
  const MoeModel m = two_experts(3, 1.0, 0.2);
  const Vector x = Eigen::Vector3d(0.7, -0.4, 0.0);  // w.x = 0, so f = 1/2
  EXPECT_EQ(ratio_cdf_oracle(x, -std::numeric_limits<double>::infinity(), m), 0.0);
  EXPECT_EQ(ratio_cdf_oracle(x, std::numeric_limits<double>::infinity(), m), 1.0);
  EXPECT_LT(ratio_cdf_oracle(x, -50.0, m), 1e-12);
  EXPECT_GT(ratio_cdf_oracle(x, 50.0, m), 1.0 - 1e-12);
  EXPECT_NEAR(ratio_cdf_oracle(x, 0.5, m), 0.5, 1e-15);
  double prev = 0.0;
  for (double z = -3; z <= 4; z += 0.05) {
    const double c = ratio_cdf_oracle(x, z, m);
    EXPECT_GE(c, prev);
    prev = c;
  }
}

TEST(RatioCdf, MatchesSimulationWithinDkwBand) {
  const MoeModel m = two_experts(3, 1.5, 0.3);
  const Vector x = Eigen::Vector3d(0.8, 0.3, 0.5);
  const double f = 1.0 / (1.0 + std::exp(-m.w.row(0).dot(x)));
  const double g1 = m.a.row(0).dot(x), g2 = m.a.row(1).dot(x), gap = g1 - g2;
  std::mt19937_64 rng(99);
  std::bernoulli_distribution pick(f);
  std::normal_distribution<double> noise;
  const int draws = 20000;
  std::vector<double> ratio(draws);
  for (double& r : ratio) {
    const double y = (pick(rng) ? g1 : g2) + m.sigma * noise(rng);
    r = (y - g2) / gap;
  }
  std::sort(ratio.begin(), ratio.end());
  const double band = std::sqrt(std::log(2.0 / 1e-3) / (2.0 * draws));
  double worst = 0.0;
  for (double z = -1.5; z <= 2.5; z += 0.01) {
    const double emp = double(std::upper_bound(ratio.begin(), ratio.end(), z) - ratio.begin()) / draws;
    worst = std::max(worst, std::abs(emp - ratio_cdf_oracle(x, z, m)));
  }
  EXPECT_LT(worst, band);
}

TEST(NaiveRatio, HeavyTailWithNoiseStableWithout) {
  const MoeModel noisy = two_experts(5, 1.0, 0.05);
  const Dataset data = draw(noisy, 100000, 6);
  const NaiveRatioResult r = naive_ratio_mean(data, noisy.a.row(0).transpose(), noisy.a.row(1).transpose());
  EXPECT_GT(r.tail_ratio, 5.0);

  const MoeModel clean = two_experts(5, 1.0, 0.0);
  const Dataset cdata = draw(clean, 100000, 6);
  const NaiveRatioResult c = naive_ratio_mean(cdata, clean.a.row(0).transpose(), clean.a.row(1).transpose());
  EXPECT_LE(c.tail_ratio, 1.0 + 1e-9);
  EXPECT_TRUE(c.mean.allFinite());
  const RatioStatistic rs = ratio_statistic(cdata, clean.a.row(0).transpose(), clean.a.row(1).transpose());
  for (double v : rs.values) EXPECT_TRUE(std::abs(v) < 1e-9 || std::abs(v - 1.0) < 1e-9);
}

TEST(Mom, RejectsUnsupportedInputs) {
  const MoeModel m = two_experts(4, 1.0, 0.1);
  const Dataset data = draw(m, 100, 7);
  const Vector a1 = m.a.row(0).transpose(), a2 = m.a.row(1).transpose();
  EXPECT_THROW(mom_gating(data, a1, a2, 0.1, Activation::sigmoid()), ConfigError);
  EXPECT_THROW(mom_gating(data, a1, a1, 0.1), DataError);
  EXPECT_THROW(mom_gating(data, a1, a2, -1.0), ConfigError);
  EXPECT_THROW(ratio_statistic(data, Vector::Ones(3), a2), DataError);
}

TEST(Mom, CountsDegenerateSamples) {
  Dataset data;
  data.x = RowMatrix(4, 2);
  data.x << 1, 1, 2, 0, 0, 1, 3, 3;  // rows 0 and 3 have <a1 - a2, x> = 0
  data.y = Vector::Ones(4);
  const RatioStatistic r = ratio_statistic(data, Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1));
  EXPECT_EQ(r.degenerate_count, 2);
  ASSERT_EQ(r.values.size(), 2u);
  EXPECT_DOUBLE_EQ(r.values[0], 0.5);  // (1 - 0) / 2
  EXPECT_DOUBLE_EQ(r.values[1], 0.0);  // (1 - 1) / -1
}

}  // namespace
}  // namespace moe
