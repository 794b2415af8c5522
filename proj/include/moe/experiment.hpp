#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "config.hpp"
#include "error.hpp"
#include "io.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "pipeline.hpp"
#include "tabular.hpp"

namespace moe {

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"table1", "table2", "fig_k3", "fig_k4", "fig_nonorth",
                                              "varying_n", "nonlinear", "realdata"};
  return names;
}

struct SuiteCell {
  std::string label;
  ExperimentConfig config;
};

struct Suite {
  std::string name;
  ExperimentConfig base;
  std::vector<SuiteCell> cells;
  std::vector<std::string> metrics;  // reported in the wide table
  bool curves = false;
};

/// Suite defaults follow the paper's experimental settings; fields in
/// `overrides` replace them before the cells are expanded.
inline Suite make_suite(const std::string& name, const Json& overrides = Json::object()) {
  Suite s;
  s.name = name;
  ExperimentConfig& b = s.base;
  b.experiment = name;
  b.seed = 1;
  b.trials = 10;
  if (name == "table1") {
    b.k = 2, b.d = 10, b.sigma = 0.1, b.n = 2000, b.orthogonal = false;
    b.input.kind = "gmm";
    b.input.p = 0.5;
    s.metrics = {"regressor_fit", "gating_fit"};
  } else if (name == "table2") {
    b.k = 2, b.d = 10, b.sigma = 0.1, b.n = 2000;
    s.metrics = {"regressor_fit", "gating_fit"};
  } else if (name == "fig_k3" || name == "fig_k4") {
    b.k = name == "fig_k3" ? 3 : 4, b.d = 10, b.sigma = 0.5, b.n = 8000;
    b.algorithms = {Algorithm::SpectralEm, Algorithm::JointEm};
    s.metrics = {"param_error"};
    s.curves = true;
  } else if (name == "fig_nonorth") {
    b.k = 2, b.d = 10, b.sigma = 0.1, b.n = 2000, b.orthogonal = false;
    s.metrics = {"regressor_fit", "gating_fit"};
    s.curves = true;
  } else if (name == "varying_n") {
    b.k = 3, b.d = 5, b.sigma = 0.5;
    b.algorithms = {Algorithm::SpectralEm, Algorithm::JointEm};
    s.metrics = {"param_error"};
    s.curves = true;
  } else if (name == "nonlinear") {
    b.k = 3, b.d = 5, b.sigma = 0.1, b.n = 10000;
    b.algorithms = {Algorithm::SpectralEm, Algorithm::JointEm};
    s.metrics = {"param_error"};
    s.curves = true;
  } else if (name == "realdata") {
    b.k = 3, b.sigma = 0.1, b.d = 1;
    b.algorithms = {Algorithm::SpectralEm, Algorithm::JointEm};
    s.metrics = {"test_mse"};
  } else {
    throw ConfigError("unknown suite '" + name + "'");
  }
  b.merge_json(overrides);
  b.experiment = name;

  auto cell = [&](std::string label, auto&& edit) {
    ExperimentConfig c = b;
    edit(c);
    c.validate();
    s.cells.push_back({std::move(label), std::move(c)});
  };
  auto label_of = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return std::string(buf);
  };
  if (name == "table1") {
    for (double p : {0.1, 0.3, 0.5, 0.7, 0.9}) cell("p=" + label_of(p), [&](ExperimentConfig& c) { c.input.p = p; });
  } else if (name == "table2") {
    cell("orthogonal", [](ExperimentConfig& c) { c.orthogonal = true; });
    cell("non-orthogonal", [](ExperimentConfig& c) { c.orthogonal = false; });
  } else if (name == "varying_n") {
    for (Eigen::Index n : {1000, 5000, 10000}) cell("n=" + std::to_string(n), [&](ExperimentConfig& c) { c.n = n; });
  } else if (name == "nonlinear") {
    for (const char* g : {"sigmoid", "relu"}) cell(g, [&](ExperimentConfig& c) { c.activation = g; });
  } else {
    cell(name, [](ExperimentConfig&) {});
  }
  return s;
}

struct TrialRecord {
  std::string cell;
  std::string config_hash;
  Algorithm algorithm = Algorithm::SpectralEm;
  int trial = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error_kind;
  std::string message;
  std::map<std::string, double> metrics;
  std::vector<double> error_curve;
  std::vector<double> gating_fit_curve;
  int iterations = 0;
  bool converged = false;
};

struct SuiteResult {
  Suite suite;
  std::string suite_hash;
  std::vector<TrialRecord> records;
};

namespace detail {

inline std::string error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Data: return "data";
    case ErrorKind::Numerical: return "numerical";
  }
  return "unknown";
}

/// Per-expert output scales and an intercept for prediction on real data, fitted
/// by least squares on the training split with the estimated directions and
/// gating held fixed: y ~ b + sum_i p_i(x) s_i g(<a_i, x>).
struct OutputCalibration {
  double intercept = 0.0;
  Vector scales;
};

inline Matrix expert_features(const MoeModel& m, const RowMatrix& x) {
  Matrix f = log_gating(x, m.w).array().exp().matrix();
  const Matrix proj = x * m.a.transpose();
  for (Eigen::Index r = 0; r < f.rows(); ++r)
    for (Eigen::Index i = 0; i < f.cols(); ++i) f(r, i) *= m.activation(proj(r, i));
  return f;
}

inline OutputCalibration calibrate_output(const MoeModel& m, const Dataset& train) {
  Matrix design(train.n(), m.k() + 1);
  design.col(0).setOnes();
  design.rightCols(m.k()) = expert_features(m, train.x);
  const Vector coef = design.colPivHouseholderQr().solve(train.y);
  return {coef[0], coef.tail(m.k())};
}

inline double test_mse(const FitOutcome& o, const ExperimentConfig& cfg, const Dataset& train, const Dataset& test) {
  const MoeModel m = o.model(cfg.sigma, Activation::from_name(cfg.activation), cfg.fit_radius());
  const OutputCalibration cal = calibrate_output(m, train);
  const Vector pred = (expert_features(m, test.x) * cal.scales).array() + cal.intercept;
  return (pred - test.y).squaredNorm() / static_cast<double>(test.n());
}

inline std::vector<TrialRecord> run_trial(const SuiteCell& cell, int trial, bool realdata) {
  const ExperimentConfig& cfg = cell.config;
  const std::uint64_t seed = trial_seed(cfg, trial);
  const std::string hash = cfg.hash();
  std::vector<TrialRecord> out;
  auto base_record = [&](Algorithm a) {
    TrialRecord r;
    r.cell = cell.label;
    r.config_hash = hash;
    r.algorithm = a;
    r.trial = trial;
    r.seed = seed;
    return r;
  };
  auto fail = [&](TrialRecord& r, const std::string& kind, const std::string& msg) {
    r.ok = false;
    r.error_kind = kind;
    r.message = msg;
  };

  if (realdata) {
    TabularDataset tab;
    try {
      tab = ingest_csv(cfg.data_path, cfg.features, cfg.target, cfg.split, seed);
    } catch (const Error& e) {
      for (Algorithm a : cfg.algorithms) {
        TrialRecord r = base_record(a);
        fail(r, error_kind_name(e.kind()), std::string("ingest: ") + e.what());
        out.push_back(std::move(r));
      }
      return out;
    }
    ExperimentConfig fit_cfg = cfg;
    fit_cfg.d = tab.train.d();
    const InputDistribution dist = InputDistribution::standard_gaussian(fit_cfg.d);
    const double mean = tab.test.y.mean();
    const double variance = (tab.test.y.array() - mean).square().mean();
    for (Algorithm a : cfg.algorithms) {
      TrialRecord r = base_record(a);
      try {
        const FitOutcome o = fit_pipeline(tab.train, dist, fit_cfg, a, seed);
        r.metrics["test_mse"] = test_mse(o, fit_cfg, tab.train, tab.test);
        r.metrics["test_variance"] = variance;
        r.iterations = o.iterations();
        r.converged = o.converged();
        r.ok = true;
      } catch (const Error& e) {
        fail(r, error_kind_name(e.kind()), e.what());
      }
      out.push_back(std::move(r));
    }
    return out;
  }

  DrawnProblem prob;
  Dataset data;
  try {
    prob = draw_problem(cfg, seed);
    data = sample_dataset(prob.model, prob.dist, cfg.n, derive_seed(seed, 2));
  } catch (const Error& e) {
    for (Algorithm a : cfg.algorithms) {
      TrialRecord r = base_record(a);
      fail(r, error_kind_name(e.kind()), std::string("generate: ") + e.what());
      out.push_back(std::move(r));
    }
    return out;
  }
  for (Algorithm a : cfg.algorithms) {
    TrialRecord r = base_record(a);
    try {
      const FitOutcome o = fit_pipeline(data, prob.dist, cfg, a, seed, &prob.model);
      r.metrics["regressor_fit"] = o.regressor->fit;
      r.metrics["gating_fit"] = o.gating_fit->fit;
      r.metrics["param_error"] = o.error->error;
      r.error_curve = o.error_curve;
      r.gating_fit_curve = o.gating_fit_curve;
      r.iterations = o.iterations();
      r.converged = o.converged();
      r.ok = true;
    } catch (const Error& e) {
      fail(r, error_kind_name(e.kind()), e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

struct Summary {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std = std::numeric_limits<double>::quiet_NaN();
  int count = 0;
};

inline Summary summarize(const std::vector<double>& v) {
  Summary s;
  std::vector<double> finite;
  for (double x : v)
    if (std::isfinite(x)) finite.push_back(x);
  s.count = static_cast<int>(finite.size());
  if (finite.empty()) return s;
  double sum = 0.0;
  for (double x : finite) sum += x;
  s.mean = sum / s.count;
  double ss = 0.0;
  for (double x : finite) ss += (x - s.mean) * (x - s.mean);
  s.std = s.count > 1 ? std::sqrt(ss / (s.count - 1)) : 0.0;
  return s;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  return out + "\"";
}

inline std::string mean_std_cell(const Summary& s) {
  if (s.count == 0) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f +- %.3f", s.mean, s.std);
  return buf;
}

}  // namespace detail

/// Runs every cell x trial on a work pool. Results are stored per task slot,
/// so the outcome does not depend on the thread count.
inline SuiteResult run_suite(const Suite& suite, unsigned threads) {
  SuiteResult res;
  res.suite = suite;
  res.suite_hash = suite.base.hash();
  const bool realdata = suite.name == "realdata";
  if (realdata && suite.base.data_path.empty())
    throw ConfigError("realdata suite needs data.path pointing at a user-supplied CSV (and data.target)");
  std::vector<std::pair<std::size_t, int>> tasks;
  for (std::size_t c = 0; c < suite.cells.size(); ++c)
    for (int t = 0; t < suite.cells[c].config.trials; ++t) tasks.emplace_back(c, t);
  std::vector<std::vector<TrialRecord>> slots(tasks.size());
  parallel_for(tasks.size(), threads, [&](std::size_t i) {
    slots[i] = detail::run_trial(suite.cells[tasks[i].first], tasks[i].second, realdata);
  });
  for (auto& s : slots)
    for (auto& r : s) res.records.push_back(std::move(r));
  return res;
}

/// Writes <suite>.csv (wide table), <suite>_aggregate.csv, <suite>_trials.csv,
/// <suite>_failures.csv, <suite>_configs.json and, for figure suites, <suite>_curves.csv.
inline void write_suite_outputs(const SuiteResult& res, const std::string& dir) {
  ensure_directory(dir);
  const Suite& s = res.suite;
  const std::string& h = res.suite_hash;
  std::vector<Algorithm> algos = s.base.algorithms;

  auto values = [&](const std::string& cell, Algorithm a, const std::string& metric) {
    std::vector<double> v;
    std::string hash;
    for (const auto& r : res.records) {
      if (r.cell != cell || r.algorithm != a || !r.ok) continue;
      if (hash.empty()) hash = r.config_hash;
      else if (hash != r.config_hash) throw DataError("aggregate mixes config hashes within cell '" + cell + "'");
      const auto it = r.metrics.find(metric);
      if (it != r.metrics.end()) v.push_back(it->second);
    }
    return v;
  };
  auto metric_name = [&](Algorithm a, const std::string& m) {
    return algos.size() > 1 ? to_string(a) + "/" + m : m;
  };
  std::vector<std::string> wide_metrics = s.metrics;
  if (s.name == "realdata") wide_metrics.push_back("test_variance");

  {
    std::ofstream os = open_output(join_path(dir, s.name + ".csv"));
    os << "config_hash,metric";
    for (const auto& c : s.cells) os << ',' << detail::csv_escape(c.label);
    os << '\n';
    for (Algorithm a : algos)
      for (const auto& m : wide_metrics) {
        if (m == "test_variance" && a != algos.front()) continue;
        os << h << ',' << (m == "test_variance" ? m : metric_name(a, m));
        for (const auto& c : s.cells) os << ',' << detail::mean_std_cell(detail::summarize(values(c.label, a, m)));
        os << '\n';
      }
  }
  {
    std::ofstream os = open_output(join_path(dir, s.name + "_aggregate.csv"));
    os << "config_hash,metric,mean,std,trials\n";
    for (const auto& c : s.cells)
      for (Algorithm a : algos)
        for (const std::string m : {"regressor_fit", "gating_fit", "param_error", "test_mse", "test_variance"}) {
          const detail::Summary sm = detail::summarize(values(c.label, a, m));
          if (sm.count == 0) continue;
          os << c.config.hash() << ',' << to_string(a) << '/' << m << ',' << format_number(sm.mean) << ','
             << format_number(sm.std) << ',' << sm.count << '\n';
        }
  }
  {
    std::ofstream os = open_output(join_path(dir, s.name + "_trials.csv"));
    os << "config_hash,cell,algorithm,trial,seed,ok,regressor_fit,gating_fit,param_error,test_mse,iterations,converged\n";
    for (const auto& r : res.records) {
      auto metric = [&](const char* m) {
        const auto it = r.metrics.find(m);
        return it == r.metrics.end() ? std::string() : format_number(it->second);
      };
      os << r.config_hash << ',' << detail::csv_escape(r.cell) << ',' << to_string(r.algorithm) << ',' << r.trial << ','
         << r.seed << ',' << (r.ok ? 1 : 0) << ',' << metric("regressor_fit") << ',' << metric("gating_fit") << ','
         << metric("param_error") << ',' << metric("test_mse") << ',' << r.iterations << ',' << (r.converged ? 1 : 0)
         << '\n';
    }
  }
  {
    std::ofstream os = open_output(join_path(dir, s.name + "_failures.csv"));
    os << "config_hash,cell,algorithm,trial,error_kind,message\n";
    for (const auto& r : res.records)
      if (!r.ok)
        os << r.config_hash << ',' << detail::csv_escape(r.cell) << ',' << to_string(r.algorithm) << ',' << r.trial
           << ',' << r.error_kind << ',' << detail::csv_escape(r.message) << '\n';
  }
  if (s.curves) {
    std::ofstream os = open_output(join_path(dir, s.name + "_curves.csv"));
    os << "config_hash,cell,algorithm,trial,iter,param_error,gating_fit\n";
    for (const auto& r : res.records) {
      if (!r.ok) continue;
      for (std::size_t t = 0; t < r.error_curve.size(); ++t)
        os << r.config_hash << ',' << detail::csv_escape(r.cell) << ',' << to_string(r.algorithm) << ',' << r.trial
           << ',' << t << ',' << format_number(r.error_curve[t]) << ','
           << (t < r.gating_fit_curve.size() ? format_number(r.gating_fit_curve[t]) : std::string()) << '\n';
    }
  }
  Json configs = {{"suite", s.name}, {"suite_hash", h}, {"base", s.base.to_json()}, {"cells", Json::array()}};
  for (const auto& c : s.cells)
    configs["cells"].push_back({{"label", c.label}, {"config_hash", c.config.hash()}, {"config", c.config.to_json()}});
  write_json_file(join_path(dir, s.name + "_configs.json"), configs);
}

}  // namespace moe
