#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "cqt.hpp"
#include "decomposition.hpp"
#include "error.hpp"
#include "gating_em.hpp"
#include "gating_mom.hpp"
#include "io.hpp"
#include "joint_em.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "moments.hpp"

namespace moe {

inline constexpr int kReportSchema = 1;

struct FitOutcome {
  Algorithm algorithm = Algorithm::SpectralEm;
  std::uint64_t seed = 0;
  Matrix a;  // k x d
  Matrix w;  // (k-1) x d
  std::optional<CqtCoefficients> cqt;
  Eigen::Index moments_used = 0;
  Eigen::Index moments_rejected = 0;
  double p3_cap = 0.0;
  std::optional<DecompositionResult> decomposition;
  std::optional<GatingState> gating;
  std::optional<MomResult> mom;
  std::optional<JointState> joint;
  std::optional<RegressorFit> regressor;
  std::optional<GatingFit> gating_fit;
  std::optional<ParamError> error;
  std::vector<double> error_curve;        // E(A, W_t) per iteration
  std::vector<double> gating_fit_curve;   // GatingFit(W_t) per iteration, gating-EM pipelines
  std::vector<std::string> warnings;

  int iterations() const {
    if (gating) return gating->iterations;
    if (joint) return joint->iterations;
    return 0;
  }
  bool converged() const {
    if (gating) return gating->converged;
    if (joint) return joint->converged;
    return true;
  }
  MoeModel model(double sigma, const Activation& act, double radius) const {
    MoeModel m;
    m.a = a;
    m.w = w;
    m.sigma = sigma;
    m.activation = act;
    m.radius = radius;
    return m;
  }
};

namespace detail {

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const NumericalError& e) {
    throw NumericalError(std::string(name) + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(std::string(name) + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(name) + ": " + e.what());
  }
}

}  // namespace detail

/// Runs one algorithm end to end. With `truth`, also scores the estimate.
inline FitOutcome fit_pipeline(const Dataset& data, const InputDistribution& dist, const ExperimentConfig& cfg,
                               Algorithm algo, std::uint64_t seed, const MoeModel* truth = nullptr) {
  data.validate();
  if (data.d() != cfg.d) throw DataError("dataset dimension " + std::to_string(data.d()) + " does not match config d = " + std::to_string(cfg.d));
  const Activation act = Activation::from_name(cfg.activation);
  const Eigen::Index k = cfg.k;
  const double fit_radius = cfg.fit_radius();
  FitOutcome out;
  out.algorithm = algo;
  out.seed = seed;

  if (algo == Algorithm::JointEm) {
    JointOptions jo;
    jo.radius = fit_radius;
    jo.eps = cfg.solver.em_eps;
    jo.max_iters = cfg.solver.em_max_iters;
    jo.seed = derive_seed(seed, 5);
    if (truth) {
      jo.truth_a = truth->a;
      jo.truth_w = truth->w;
    }
    out.joint = detail::stage("joint-em", [&] { return run_joint_em(data, k, cfg.sigma, act, jo); });
    out.a = out.joint->a;
    out.w = out.joint->w;
    if (out.joint->ridge_flagged) out.warnings.push_back("joint-em: singular weighted least squares, ridge added");
    for (const auto& r : out.joint->trace) out.error_curve.push_back(r.dist_to_truth);
  } else {
    CqtOptions co;
    co.quadrature_order = cfg.solver.quadrature_order;
    co.convention = cfg.solver.cqt_convention;
    out.cqt = detail::stage("cqt", [&] { return solve_cqt(act, cfg.sigma, co); });
    const InputDistribution score_dist = cfg.solver.gaussian_score ? InputDistribution::standard_gaussian(cfg.d) : dist;
    MomentOptions mo;
    out.p3_cap = cfg.solver.p3_cap_factor > 0 ? robust_p3_cap(data, *out.cqt, cfg.solver.p3_cap_factor)
                                              : std::numeric_limits<double>::infinity();
    mo.p3_cap = out.p3_cap;
    const MomentTensors mt = detail::stage("moments", [&] { return compute_moments(data, *out.cqt, score_dist, mo); });
    out.moments_used = mt.used;
    out.moments_rejected = mt.rejected;
    if (mt.rejected > 0) out.warnings.push_back("moments: " + std::to_string(mt.rejected) + " samples rejected by the P3 cap");
    PowerOptions po;
    po.restarts = cfg.solver.power_restarts;
    po.iterations = cfg.solver.power_iterations;
    po.seed = derive_seed(seed, 3);
    out.decomposition = detail::stage("decomposition", [&] { return recover_regressors(mt.t2, mt.t3, k, *out.cqt, po); });
    for (const auto& w : out.decomposition->warnings) out.warnings.push_back("decomposition: " + w);
    out.a = out.decomposition->vectors;

    std::optional<Matrix> aligned;
    if (truth) {
      out.regressor = regressor_fit(out.a, truth->a);
      aligned = Matrix(align_truth_gating(truth->w, invert(out.regressor->permutation), cfg.d).topRows(k - 1));
    }
    GatingOptions go;
    go.radius = fit_radius;
    go.eps = cfg.solver.em_eps;
    go.max_iters = cfg.solver.em_max_iters;
    go.seed = derive_seed(seed, 4);
    go.truth = aligned;
    go.keep_iterates = truth != nullptr;
    if (algo == Algorithm::SpectralEm) {
      out.gating = detail::stage("gating-em", [&] { return run_em(data, out.a, cfg.sigma, act, go); });
    } else if (algo == Algorithm::SpectralGradientEm) {
      const double step = cfg.solver.gradient_step.value_or(gating_constants().step());
      out.gating = detail::stage("gradient-em", [&] { return run_gradient_em(data, out.a, cfg.sigma, act, step, go); });
    } else {
      if (k != 2) throw ConfigError("spectral+mom: method-of-moments gating needs k = 2");
      out.mom = detail::stage("mom", [&] {
        return mom_gating(data, out.a.row(0).transpose(), out.a.row(1).transpose(), cfg.sigma, act, cfg.solver.mom_threshold);
      });
      out.w = out.mom->w.transpose();
      for (const auto& w : out.mom->warnings) out.warnings.push_back("mom: " + w);
    }
    if (out.gating) {
      out.w = out.gating->w;
      if (out.gating->hard_assignment) out.warnings.push_back("gating-em: sigma = 0, hard assignment used");
      if (!out.gating->converged) out.warnings.push_back("gating-em: not converged within max_iters");
      if (truth)
        for (const Matrix& wt : out.gating->iterates) {
          out.error_curve.push_back(param_error(out.a, wt, truth->a, truth->w).error);
          out.gating_fit_curve.push_back(gating_fit(wt, truth->w, invert(out.regressor->permutation)).fit);
        }
    }
  }

  if (truth) {
    if (!out.regressor) out.regressor = regressor_fit(out.a, truth->a);
    out.gating_fit = gating_fit(out.w, truth->w, invert(out.regressor->permutation));
    if (!out.gating_fit->defined) out.warnings.push_back("gating fit undefined: aligned true gating row is zero");
    out.error = param_error(out.a, out.w, truth->a, truth->w);
  }
  return out;
}

inline Json fit_report_json(const FitOutcome& o, const ExperimentConfig& cfg) {
  auto num = [](double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); };
  Json r = {{"schema", kReportSchema},
            {"algorithm", to_string(o.algorithm)},
            {"config", cfg.to_json()},
            {"config_hash", cfg.hash()},
            {"seed", o.seed},
            {"generator", std::string(kGeneratorName)},
            {"estimate", {{"a", matrix_to_json(o.a)}, {"w", matrix_to_json(o.w)}}},
            {"warnings", o.warnings}};
  if (o.cqt)
    r["cqt"] = {{"alpha", o.cqt->alpha}, {"beta", o.cqt->beta}, {"gamma", o.cqt->gamma}, {"c3", o.cqt->c3},
                {"c2", o.cqt->c2}, {"convention", to_string(o.cqt->convention)}};
  if (o.decomposition) {
    const auto& dr = *o.decomposition;
    r["moments"] = {{"used", o.moments_used}, {"rejected", o.moments_rejected}, {"p3_cap", num(o.p3_cap)}};
    r["decomposition"] = {{"regressors", matrix_to_json(dr.vectors)},
                          {"weights", vector_to_json(dr.weights)},
                          {"eigenvalues", vector_to_json(dr.eigenvalues)},
                          {"residual", dr.residual},
                          {"restarts", dr.restarts},
                          {"iterations", dr.iterations},
                          {"flagged", dr.flagged}};
  }
  if (o.gating)
    r["gating"] = {{"w", matrix_to_json(o.gating->w)},     {"iterations", o.gating->iterations},
                   {"converged", o.gating->converged},     {"hard_assignment", o.gating->hard_assignment},
                   {"radius", o.gating->radius},           {"trace", trace_to_json(o.gating->trace)}};
  if (o.mom)
    r["mom"] = {{"w", vector_to_json(o.mom->w)},       {"moment", vector_to_json(o.mom->moment)},
                {"alpha_hat", o.mom->alpha_hat},       {"degenerate", o.mom->degenerate_count},
                {"low_signal", o.mom->low_signal}};
  if (o.joint)
    r["joint"] = {{"iterations", o.joint->iterations},
                  {"converged", o.joint->converged},
                  {"unconstrained_norms", o.joint->unconstrained_norms},
                  {"ridge", o.joint->ridge_flagged},
                  {"trace", trace_to_json(o.joint->trace)}};
  if (o.regressor) {
    r["metrics"] = {{"regressor_fit", o.regressor->fit},
                    {"gating_fit", o.gating_fit ? num(o.gating_fit->fit) : Json(nullptr)},
                    {"param_error", o.error ? Json(o.error->error) : Json(nullptr)},
                    {"matched_permutation", o.error ? Json(o.error->permutation) : Json(o.regressor->permutation)},
                    {"regressor_permutation", o.regressor->permutation},
                    {"permutation_exact", o.regressor->exact && (!o.error || o.error->exact)}};
  }
  return r;
}

}  // namespace moe
