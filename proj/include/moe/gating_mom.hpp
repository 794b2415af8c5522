#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "activation.hpp"
#include "error.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "quadrature.hpp"

namespace moe {

inline constexpr double kRatioDenominatorFloor = 1e-12;

/// Ratio(x, y) = (y - <a2, x>) / <a1 - a2, x> over the non-degenerate samples.
struct RatioStatistic {
  std::vector<double> values;
  std::vector<Eigen::Index> rows;  // dataset row of each value
  Eigen::Index degenerate_count = 0;
};

inline RatioStatistic ratio_statistic(const Dataset& data, const Vector& a1, const Vector& a2) {
  data.validate();
  if (a1.size() != data.d() || a2.size() != data.d()) throw DataError("ratio statistic: regressor dimension mismatch");
  const Vector delta = a1 - a2;
  if (delta.norm() == 0.0) throw DataError("degenerate model: a1 = a2");
  RatioStatistic out;
  out.values.reserve(static_cast<std::size_t>(data.n()));
  for (Eigen::Index s = 0; s < data.n(); ++s) {
    const double den = data.x.row(s).dot(delta);
    if (std::abs(den) < kRatioDenominatorFloor) {
      ++out.degenerate_count;
      continue;
    }
    out.values.push_back((data.y[s] - data.x.row(s).dot(a2)) / den);
    out.rows.push_back(s);
  }
  return out;
}

struct MomResult {
  Vector w;               // unit direction estimate
  Vector moment;          // (1/n) sum 1{Ratio <= z} x
  double alpha_hat = 0.0; // plug-in estimate of the proportionality scalar
  Eigen::Index degenerate_count = 0;
  bool low_signal = false;
  std::vector<std::string> warnings;
};

/// Gating direction for k = 2 from the thresholded ratio moment
/// E[1{Ratio <= z} x] = alpha w*. The sign is fixed in a second pass from
/// alpha = E[f'(w.x) (1 - 2 Phi(|<a1 - a2, x>| / 2 sigma))] at the plug-in direction.
inline MomResult mom_gating(const Dataset& data, const Vector& a1, const Vector& a2, double sigma,
                            const Activation& act = Activation::linear(), double threshold = 0.5) {
  if (act.kind() != ActivationKind::Linear)
    throw ConfigError("method-of-moments gating supports only the linear activation");
  if (!(sigma >= 0.0)) throw ConfigError("mom_gating: sigma must be nonnegative");
  const RatioStatistic ratio = ratio_statistic(data, a1, a2);
  MomResult out;
  out.degenerate_count = ratio.degenerate_count;
  const auto n = static_cast<double>(ratio.values.size());
  if (ratio.values.empty()) throw DataError("mom_gating: every sample is degenerate");
  out.moment = Vector::Zero(data.d());
  for (std::size_t i = 0; i < ratio.values.size(); ++i)
    if (ratio.values[i] <= threshold) out.moment += data.x.row(ratio.rows[i]).transpose();
  out.moment /= n;

  const double norm = out.moment.norm();
  if (norm < 3.0 / std::sqrt(n)) {
    out.low_signal = true;
    out.warnings.push_back("signal below noise floor: moment norm " + std::to_string(norm));
  }
  if (norm == 0.0) {
    out.w = Vector::Zero(data.d());
    return out;
  }
  const Vector dir = out.moment / norm;
  const Vector delta = a1 - a2;
  double alpha = 0.0;
  for (const Eigen::Index s : ratio.rows) {
    const double t = data.x.row(s).dot(dir);
    const double gap = std::abs(data.x.row(s).dot(delta));
    const double shrink = sigma > 0 ? 1.0 - 2.0 * normal_cdf(gap / (2.0 * sigma)) : -1.0;
    alpha += activation_eval(Activation::sigmoid(), 1, t) * shrink;
  }
  out.alpha_hat = alpha / n;
  out.w = out.alpha_hat < 0 ? Vector(-dir) : dir;
  return out;
}

/// P(Ratio <= z | x) = f(w.x) Phi((z - 1)|D| / sigma) + (1 - f(w.x)) Phi(z |D| / sigma), D = <a1 - a2, x>.
inline double ratio_cdf_oracle(const Vector& x, double z, const MoeModel& model) {
  if (model.k() != 2) throw ConfigError("ratio_cdf_oracle: model must have k = 2");
  if (!(model.sigma > 0)) throw ConfigError("ratio_cdf_oracle: sigma must be positive");
  const double gap = std::abs(x.dot(model.a.row(0).transpose() - model.a.row(1).transpose()));
  if (gap == 0.0) throw DataError("ratio_cdf_oracle: <a1 - a2, x> = 0");
  const double f = Activation::logistic(model.w.row(0).dot(x));
  if (std::isinf(z)) return z > 0 ? 1.0 : 0.0;
  return f * normal_cdf((z - 1.0) * gap / model.sigma) + (1.0 - f) * normal_cdf(z * gap / model.sigma);
}

struct NaiveRatioResult {
  Vector mean;               // (1/n) sum Ratio x
  double tail_ratio = 0.0;   // q99.9 / q99 of |Ratio|
  Eigen::Index degenerate_count = 0;
};

/// The non-integrable estimator E[Ratio x], kept as a negative control.
inline NaiveRatioResult naive_ratio_mean(const Dataset& data, const Vector& a1, const Vector& a2) {
  const RatioStatistic ratio = ratio_statistic(data, a1, a2);
  if (ratio.values.empty()) throw DataError("naive_ratio_mean: every sample is degenerate");
  NaiveRatioResult out;
  out.degenerate_count = ratio.degenerate_count;
  out.mean = Vector::Zero(data.d());
  for (std::size_t i = 0; i < ratio.values.size(); ++i)
    out.mean += ratio.values[i] * data.x.row(ratio.rows[i]).transpose();
  out.mean /= static_cast<double>(ratio.values.size());

  std::vector<double> mag(ratio.values.size());
  std::transform(ratio.values.begin(), ratio.values.end(), mag.begin(), [](double v) { return std::abs(v); });
  std::sort(mag.begin(), mag.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(mag.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, mag.size() - 1);
    return mag[lo] + (pos - static_cast<double>(lo)) * (mag[hi] - mag[lo]);
  };
  const double q99 = quantile(0.99);
  out.tail_ratio = q99 > 0 ? quantile(0.999) / q99 : 1.0;
  return out;
}

}  // namespace moe
