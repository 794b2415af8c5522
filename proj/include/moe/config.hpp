#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "cqt.hpp"
#include "error.hpp"
#include "io.hpp"
#include "model.hpp"
#include "random.hpp"

namespace moe {

enum class Algorithm { SpectralEm, SpectralGradientEm, SpectralMom, JointEm };

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::SpectralEm: return "spectral+em";
    case Algorithm::SpectralGradientEm: return "spectral+gradient-em";
    case Algorithm::SpectralMom: return "spectral+mom";
    case Algorithm::JointEm: return "joint-em";
  }
  return "";
}

inline Algorithm algorithm_from_name(const std::string& name) {
  for (Algorithm a : {Algorithm::SpectralEm, Algorithm::SpectralGradientEm, Algorithm::SpectralMom, Algorithm::JointEm})
    if (to_string(a) == name) return a;
  throw ConfigError("unknown algorithm '" + name + "' (expected spectral+em, spectral+gradient-em, spectral+mom or joint-em)");
}

inline bool is_spectral(Algorithm a) { return a != Algorithm::JointEm; }

struct SolverConfig {
  int power_restarts = 30;
  int power_iterations = 50;
  double em_eps = 1e-4;
  int em_max_iters = 100;
  std::optional<double> gradient_step;  // default 2 / (mu + lambda)
  double mom_threshold = 0.5;
  CqtConvention cqt_convention = CqtConvention::Stein;
  int quadrature_order = 80;
  double p3_cap_factor = 50.0;  // <= 0 disables the outlier cap
  bool gaussian_score = false;  // use the N(0, I) score even for mixture inputs
  std::optional<double> fit_radius;  // default: R for k = 2, 2R for k >= 3
};

struct InputConfig {
  std::string kind = "gaussian";  // gaussian | gmm
  std::optional<double> p;        // gmm with weights (p, 1 - p) and random means
  double mean_norm = 1.0;         // norm of the random means
  Vector weights;                 // explicit gmm weights
  Matrix means;                   // explicit gmm means
};

struct ExperimentConfig {
  std::string experiment = "custom";
  Eigen::Index k = 2;
  Eigen::Index d = 10;
  double sigma = 0.1;
  std::string activation = "linear";
  double radius = 1.0;
  bool orthogonal = true;
  double gating_norm = 1.0;
  InputConfig input;
  Eigen::Index n = 2000;
  int trials = 10;
  std::uint64_t seed = 1;
  std::vector<Algorithm> algorithms{Algorithm::SpectralEm};
  SolverConfig solver;
  std::string data_path;  // tabular input for realdata
  std::string target;
  std::vector<std::string> features;
  double split = 0.75;
  std::string out = "results";

  double fit_radius() const { return solver.fit_radius.value_or(k <= 2 ? radius : 2.0 * radius); }

  void validate() const {
    if (k < 1 || d < 1) throw ConfigError("config: need k >= 1 and d >= 1");
    if (!(sigma >= 0.0)) throw ConfigError("config: sigma must be nonnegative");
    if (!(radius > 0.0)) throw ConfigError("config: radius must be positive");
    if (!(gating_norm >= 0.0 && gating_norm <= radius)) throw ConfigError("config: gating_norm must lie in [0, radius]");
    if (n < 1) throw ConfigError("config: n must be >= 1");
    if (trials < 1) throw ConfigError("config: trials must be >= 1");
    if (algorithms.empty()) throw ConfigError("config: no algorithm selected");
    if (solver.power_restarts < 1 || solver.power_iterations < 1) throw ConfigError("config: power method needs restarts, iterations >= 1");
    if (!(solver.em_eps > 0.0) || solver.em_max_iters < 1) throw ConfigError("config: em_eps > 0 and em_max_iters >= 1 required");
    if (input.kind != "gaussian" && input.kind != "gmm") throw ConfigError("config: input.kind must be gaussian or gmm");
    if (input.kind == "gmm" && !input.p && input.weights.size() == 0) throw ConfigError("config: gmm input needs p or weights/means");
    if (input.p && !(*input.p >= 0.0 && *input.p <= 1.0)) throw ConfigError("config: input.p must lie in [0, 1]");
    Activation::from_name(activation);
  }

  Json to_json() const {
    Json algos = Json::array();
    for (Algorithm a : algorithms) algos.push_back(to_string(a));
    Json in = {{"kind", input.kind}, {"mean_norm", input.mean_norm}};
    in["p"] = input.p ? Json(*input.p) : Json(nullptr);
    in["weights"] = vector_to_json(input.weights);
    in["means"] = matrix_to_json(input.means);
    Json solver_json = {{"power_restarts", solver.power_restarts},
                        {"power_iterations", solver.power_iterations},
                        {"em_eps", solver.em_eps},
                        {"em_max_iters", solver.em_max_iters},
                        {"gradient_step", solver.gradient_step ? Json(*solver.gradient_step) : Json(nullptr)},
                        {"mom_threshold", solver.mom_threshold},
                        {"cqt_convention", to_string(solver.cqt_convention)},
                        {"quadrature_order", solver.quadrature_order},
                        {"p3_cap_factor", solver.p3_cap_factor},
                        {"gaussian_score", solver.gaussian_score},
                        {"fit_radius", solver.fit_radius ? Json(*solver.fit_radius) : Json(nullptr)}};
    return {{"experiment", experiment},
            {"model",
             {{"k", k}, {"d", d}, {"sigma", sigma}, {"activation", activation}, {"radius", radius},
              {"orthogonal", orthogonal}, {"gating_norm", gating_norm}}},
            {"input", in},
            {"n", n},
            {"trials", trials},
            {"seed", seed},
            {"algorithms", algos},
            {"solver", solver_json},
            {"data", {{"path", data_path}, {"target", target}, {"features", features}, {"split", split}}},
            {"out", out}};
  }

  /// Fields present in `j` override the current values.
  void merge_json(const Json& j) {
    try {
      if (!j.is_object()) throw ConfigError("config must be a JSON object");
      experiment = j.value("experiment", experiment);
      if (j.contains("model")) {
        const Json& m = j["model"];
        k = m.value("k", k);
        d = m.value("d", d);
        sigma = m.value("sigma", sigma);
        activation = m.value("activation", activation);
        radius = m.value("radius", radius);
        orthogonal = m.value("orthogonal", orthogonal);
        gating_norm = m.value("gating_norm", gating_norm);
      }
      if (j.contains("input")) {
        const Json& in = j["input"];
        input.kind = in.value("kind", input.kind);
        if (in.contains("p")) input.p = in["p"].is_null() ? std::nullopt : std::optional<double>(in["p"].get<double>());
        input.mean_norm = in.value("mean_norm", input.mean_norm);
        if (in.contains("weights")) input.weights = vector_from_json(in["weights"], "input.weights");
        if (in.contains("means"))
          input.means = in["means"].empty() ? Matrix(0, d) : matrix_from_json(in["means"], d, "input.means");
      }
      n = j.value("n", n);
      trials = j.value("trials", trials);
      seed = j.value("seed", seed);
      if (j.contains("algorithms")) {
        algorithms.clear();
        for (const auto& a : j["algorithms"]) algorithms.push_back(algorithm_from_name(a.get<std::string>()));
      }
      if (j.contains("solver")) {
        const Json& s = j["solver"];
        solver.power_restarts = s.value("power_restarts", solver.power_restarts);
        solver.power_iterations = s.value("power_iterations", solver.power_iterations);
        solver.em_eps = s.value("em_eps", solver.em_eps);
        solver.em_max_iters = s.value("em_max_iters", solver.em_max_iters);
        if (s.contains("gradient_step"))
          solver.gradient_step = s["gradient_step"].is_null() ? std::nullopt : std::optional<double>(s["gradient_step"].get<double>());
        solver.mom_threshold = s.value("mom_threshold", solver.mom_threshold);
        if (s.contains("cqt_convention")) {
          const std::string c = s["cqt_convention"].get<std::string>();
          if (c == "stein") solver.cqt_convention = CqtConvention::Stein;
          else if (c == "pointwise") solver.cqt_convention = CqtConvention::Pointwise;
          else throw ConfigError("solver.cqt_convention must be stein or pointwise");
        }
        solver.quadrature_order = s.value("quadrature_order", solver.quadrature_order);
        solver.p3_cap_factor = s.value("p3_cap_factor", solver.p3_cap_factor);
        solver.gaussian_score = s.value("gaussian_score", solver.gaussian_score);
        if (s.contains("fit_radius"))
          solver.fit_radius = s["fit_radius"].is_null() ? std::nullopt : std::optional<double>(s["fit_radius"].get<double>());
      }
      if (j.contains("data")) {
        const Json& dj = j["data"];
        data_path = dj.value("path", data_path);
        target = dj.value("target", target);
        if (dj.contains("features")) features = dj["features"].get<std::vector<std::string>>();
        split = dj.value("split", split);
      }
      out = j.value("out", out);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed config: ") + e.what());
    }
  }

  static ExperimentConfig from_json(const Json& j) {
    ExperimentConfig c;
    c.merge_json(j);
    c.validate();
    return c;
  }

  /// FNV-1a 64 of the canonical JSON (sorted keys), excluding the output directory.
  std::string hash() const {
    Json j = to_json();
    j.erase("out");
    const std::string s = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }
};

struct DrawnProblem {
  MoeModel model;
  InputDistribution dist;
  std::vector<std::string> warnings;
};

/// Ground-truth parameters for one trial: regressor rows uniform on the sphere,
/// gating rows uniform on the sphere of radius gating_norm, optionally projected
/// onto the orthogonal complement of span{a_i}.
inline DrawnProblem draw_problem(const ExperimentConfig& cfg, std::uint64_t trial_seed) {
  cfg.validate();
  const Eigen::Index k = cfg.k, d = cfg.d;
  DrawnProblem out;
  Engine rng = make_engine(trial_seed, 1);
  out.model.sigma = cfg.sigma;
  out.model.radius = cfg.radius;
  out.model.activation = Activation::from_name(cfg.activation);
  out.model.a.resize(k, d);
  for (Eigen::Index i = 0; i < k; ++i) out.model.a.row(i) = uniform_on_sphere(rng, d).transpose();
  out.model.w.resize(k - 1, d);
  Matrix basis;
  if (cfg.orthogonal && k > 1) {
    if (2 * k - 1 >= d) out.warnings.push_back("2k - 1 >= d: orthogonal gating leaves little room (outside the analysed regime)");
    if (k >= d) throw ConfigError("orthogonal gating needs k < d");
    Eigen::HouseholderQR<Matrix> qr(out.model.a.transpose());
    basis = qr.householderQ() * Matrix::Identity(d, k);
  }
  for (Eigen::Index i = 0; i + 1 < k; ++i) {
    Vector w = uniform_on_sphere(rng, d);
    if (basis.size() > 0) {
      for (int pass = 0; pass < 2; ++pass) w -= basis * (basis.transpose() * w);
      w.normalize();
    }
    out.model.w.row(i) = cfg.gating_norm * w.transpose();
  }
  out.model.validate();

  if (cfg.input.kind == "gaussian") {
    out.dist = InputDistribution::standard_gaussian(d);
  } else if (cfg.input.p) {
    Engine mrng = make_engine(trial_seed, 4);
    Matrix means(2, d);
    for (Eigen::Index c = 0; c < 2; ++c) means.row(c) = cfg.input.mean_norm * uniform_on_sphere(mrng, d).transpose();
    Vector weights(2);
    weights << *cfg.input.p, 1.0 - *cfg.input.p;
    out.dist = InputDistribution::gaussian_mixture(weights, means);
  } else {
    out.dist = InputDistribution::gaussian_mixture(cfg.input.weights, cfg.input.means);
  }
  return out;
}

inline std::uint64_t trial_seed(const ExperimentConfig& cfg, int trial) {
  return derive_seed(cfg.seed, static_cast<std::uint64_t>(trial));
}

}  // namespace moe
