#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Dense>

namespace moe {

using Engine = std::mt19937_64;

/// Recorded in reports so runs can be reproduced bit for bit.
inline constexpr std::string_view kGeneratorName = "mt19937_64+splitmix64-streams";

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent child seed for stream `stream` of a parent seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

inline Engine make_engine(std::uint64_t seed, std::uint64_t stream) {
  return Engine(derive_seed(seed, stream));
}

inline Eigen::VectorXd standard_normal_vector(Engine& rng, Eigen::Index d) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = normal(rng);
  return v;
}

inline Eigen::VectorXd uniform_on_sphere(Engine& rng, Eigen::Index d) {
  Eigen::VectorXd v = standard_normal_vector(rng, d);
  double n = v.norm();
  while (n == 0.0) {
    v = standard_normal_vector(rng, d);
    n = v.norm();
  }
  return v / n;
}

/// Uniform draw from the closed Euclidean ball of the given radius.
inline Eigen::VectorXd uniform_in_ball(Engine& rng, Eigen::Index d, double radius) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double r = radius * std::pow(unif(rng), 1.0 / static_cast<double>(d));
  return r * uniform_on_sphere(rng, d);
}

}  // namespace moe
