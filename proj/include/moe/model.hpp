#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "activation.hpp"
#include "error.hpp"
#include "linalg.hpp"
#include "parallel.hpp"
#include "random.hpp"

namespace moe {

/// k-MoE generative model. Expert i emits g(<a_i, x>) + sigma * N(0, 1) and is
/// selected with probability softmax(<w_1,x>, ..., <w_{k-1},x>, 0)_i; the k-th
/// gating row is fixed to zero and never stored.
struct MoeModel {
  Matrix a;  // k x d, unit rows
  Matrix w;  // (k-1) x d
  double sigma = 0.0;
  Activation activation = Activation::linear();
  double radius = 1.0;

  Eigen::Index k() const { return a.rows(); }
  Eigen::Index d() const { return a.cols(); }

  void validate() const {
    if (a.rows() < 1 || a.cols() < 1) throw ConfigError("model needs k >= 1 and d >= 1");
    if (w.rows() != a.rows() - 1 || (w.rows() > 0 && w.cols() != a.cols()))
      throw ConfigError("gating matrix must be (k-1) x d");
    if (!(sigma >= 0.0)) throw ConfigError("sigma must be nonnegative");
    if (!(radius > 0.0)) throw ConfigError("radius must be positive");
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      if (std::abs(a.row(i).norm() - 1.0) > 1e-9) throw ConfigError("regressor rows must have unit norm");
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      if (w.row(i).norm() > radius + 1e-9) throw ConfigError("gating row exceeds the radius bound");
  }
};

/// Numerically stable softmax over the logits (<w_1,x>, ..., <w_{k-1},x>, 0).
inline Vector gating_probabilities(const Matrix& w, const Eigen::Ref<const Vector>& x) {
  const Eigen::Index k = w.rows() + 1;
  Vector logits(k);
  if (w.rows() > 0) logits.head(k - 1) = w * x;
  logits[k - 1] = 0.0;
  const double mx = logits.maxCoeff();
  Vector p = (logits.array() - mx).exp().matrix();
  return p / p.sum();
}

/// E[y | x] = sum_i softmax_i(w x) g(<a_i, x>).
inline double predict(const MoeModel& model, const Eigen::Ref<const Vector>& x) {
  if (x.size() != model.d()) throw DataError("predict: input dimension mismatch");
  const Vector p = gating_probabilities(model.w, x);
  double y = 0.0;
  for (Eigen::Index i = 0; i < model.k(); ++i) y += p[i] * model.activation(model.a.row(i).dot(x));
  return y;
}

enum class InputKind { StandardGaussian, GaussianMixture };

/// Input law: standard Gaussian, or a mixture of identity-covariance Gaussians.
struct InputDistribution {
  InputKind kind = InputKind::StandardGaussian;
  Eigen::Index d = 1;
  Vector weights;  // mixture only
  Matrix means;    // components x d, mixture only

  static InputDistribution standard_gaussian(Eigen::Index d) {
    if (d < 1) throw ConfigError("input dimension must be >= 1");
    InputDistribution dist;
    dist.d = d;
    return dist;
  }

  static InputDistribution gaussian_mixture(Vector weights, Matrix means) {
    InputDistribution dist;
    dist.kind = InputKind::GaussianMixture;
    dist.d = means.cols();
    dist.weights = std::move(weights);
    dist.means = std::move(means);
    dist.validate();
    return dist;
  }

  std::size_t components() const {
    return kind == InputKind::GaussianMixture ? static_cast<std::size_t>(weights.size()) : 1;
  }

  void validate() const {
    if (d < 1) throw ConfigError("input dimension must be >= 1");
    if (kind != InputKind::GaussianMixture) return;
    if (weights.size() < 1 || weights.size() != means.rows())
      throw ConfigError("mixture weights and means disagree on the number of components");
    if (means.cols() != d) throw ConfigError("mixture means must have dimension d");
    if ((weights.array() < 0.0).any()) throw ConfigError("mixture weights must be nonnegative");
    if (std::abs(weights.sum() - 1.0) > 1e-12) throw ConfigError("mixture weights must sum to 1");
  }
};

struct Dataset {
  RowMatrix x;                      // n x d
  Vector y;                         // n
  std::optional<std::vector<int>> z;  // latent expert, diagnostics only

  Eigen::Index n() const { return x.rows(); }
  Eigen::Index d() const { return x.cols(); }

  void validate() const {
    if (x.rows() < 1) throw DataError("dataset is empty");
    if (x.rows() != y.size()) throw DataError("dataset inputs and labels disagree in length");
    if (z && static_cast<Eigen::Index>(z->size()) != y.size())
      throw DataError("latent labels disagree in length");
  }

  /// Rows [begin, end) as a new dataset.
  Dataset slice(Eigen::Index begin, Eigen::Index end) const {
    Dataset out;
    out.x = x.middleRows(begin, end - begin);
    out.y = y.segment(begin, end - begin);
    if (z) out.z = std::vector<int>(z->begin() + begin, z->begin() + end);
    return out;
  }
};

/// Samples per RNG stream; stream c covers samples [c*kSampleChunk, (c+1)*kSampleChunk).
inline constexpr Eigen::Index kSampleChunk = 4096;

/// Draws n i.i.d. samples (x, z, y). Each chunk of kSampleChunk samples owns a
/// derived RNG stream, so the result is identical for any thread count.
inline Dataset sample_dataset(const MoeModel& model, const InputDistribution& dist, Eigen::Index n,
                              std::uint64_t seed, unsigned threads = 1) {
  model.validate();
  dist.validate();
  if (n < 1) throw ConfigError("sample_dataset: n must be >= 1");
  if (dist.d != model.d()) throw ConfigError("input distribution dimension does not match the model");

  const Eigen::Index d = model.d();
  const Eigen::Index k = model.k();
  Dataset data;
  data.x.resize(n, d);
  data.y.resize(n);
  data.z = std::vector<int>(static_cast<std::size_t>(n));

  std::vector<double> cum_weights;
  if (dist.kind == InputKind::GaussianMixture) {
    double acc = 0.0;
    for (Eigen::Index c = 0; c < dist.weights.size(); ++c) cum_weights.push_back(acc += dist.weights[c]);
  }

  const auto chunks = static_cast<std::size_t>((n + kSampleChunk - 1) / kSampleChunk);
  parallel_for(chunks, threads, [&](std::size_t chunk) {
    Engine rng = make_engine(seed, chunk);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const Eigen::Index begin = static_cast<Eigen::Index>(chunk) * kSampleChunk;
    const Eigen::Index end = std::min(n, begin + kSampleChunk);
    Vector x(d);
    for (Eigen::Index s = begin; s < end; ++s) {
      for (Eigen::Index j = 0; j < d; ++j) x[j] = normal(rng);
      if (!cum_weights.empty()) {
        const double u = unif(rng) * cum_weights.back();
        std::size_t c = 0;
        while (c + 1 < cum_weights.size() && u >= cum_weights[c]) ++c;
        x += dist.means.row(static_cast<Eigen::Index>(c)).transpose();
      }
      const Vector p = gating_probabilities(model.w, x);
      const double u = unif(rng);
      Eigen::Index zi = 0;
      double acc = p[0];
      while (zi + 1 < k && u >= acc) acc += p[++zi];
      data.x.row(s) = x.transpose();
      (*data.z)[static_cast<std::size_t>(s)] = static_cast<int>(zi);
      data.y[s] = model.activation(model.a.row(zi).dot(x)) + model.sigma * normal(rng);
    }
  });
  return data;
}

}  // namespace moe
