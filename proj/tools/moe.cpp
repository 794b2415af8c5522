#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "moe/moe.hpp"

namespace {

moe::ExperimentConfig load_config(const std::string& path) {
  return path.empty() ? moe::ExperimentConfig{} : moe::ExperimentConfig::from_json(moe::read_json_file(path));
}

int cmd_generate(const std::string& config_path, std::optional<std::uint64_t> seed, std::string out, unsigned threads) {
  moe::ExperimentConfig cfg = load_config(config_path);
  if (seed) cfg.seed = *seed;
  if (out.empty()) out = cfg.out;
  cfg.validate();
  const std::uint64_t ts = moe::trial_seed(cfg, 0);
  const moe::DrawnProblem prob = moe::draw_problem(cfg, ts);
  for (const auto& w : prob.warnings) std::cerr << "warning: " << w << '\n';
  const moe::Dataset data = moe::sample_dataset(prob.model, prob.dist, cfg.n, moe::derive_seed(ts, 2), threads);
  moe::ensure_directory(out);
  moe::write_dataset_csv(moe::join_path(out, "dataset.csv"), data);
  moe::Json model = moe::model_to_json(prob.model);
  model["input"] = moe::input_to_json(prob.dist);
  model["config_hash"] = cfg.hash();
  moe::write_json_file(moe::join_path(out, "model.json"), model);
  moe::write_json_file(moe::join_path(out, "config.json"), cfg.to_json());
  std::cout << "wrote " << data.n() << " samples (k=" << cfg.k << ", d=" << cfg.d << ") to " << out << '\n';
  return 0;
}

int cmd_fit(const std::string& config_path, const std::string& data_path, const std::string& model_path,
            const std::string& algo, std::optional<std::uint64_t> seed, std::string out) {
  moe::ExperimentConfig cfg = load_config(config_path);
  if (seed) cfg.seed = *seed;
  if (!algo.empty()) cfg.algorithms = {moe::algorithm_from_name(algo)};
  if (out.empty()) out = cfg.out;
  cfg.validate();
  const moe::Dataset data = moe::read_dataset_csv(data_path);
  std::optional<moe::MoeModel> truth;
  std::optional<moe::InputDistribution> dist;
  if (!model_path.empty()) {
    const moe::Json mj = moe::read_json_file(model_path);
    truth = moe::model_from_json(mj);
    if (mj.contains("input")) dist = moe::input_from_json(mj["input"], truth->d());
    if (truth->k() != cfg.k || truth->d() != cfg.d) throw moe::ConfigError("model file disagrees with config on k or d");
  }
  if (!dist) {
    if (cfg.input.kind == "gaussian") dist = moe::InputDistribution::standard_gaussian(cfg.d);
    else if (cfg.input.weights.size() > 0) dist = moe::InputDistribution::gaussian_mixture(cfg.input.weights, cfg.input.means);
    else throw moe::ConfigError("mixture input with random means: pass --model with the generated model.json");
  }
  moe::ensure_directory(out);
  for (moe::Algorithm a : cfg.algorithms) {
    const moe::FitOutcome o = moe::fit_pipeline(data, *dist, cfg, a, moe::trial_seed(cfg, 0), truth ? &*truth : nullptr);
    const std::string tag = moe::to_string(a);
    moe::write_json_file(moe::join_path(out, "fit_" + tag + ".json"), moe::fit_report_json(o, cfg));
    if (o.gating) moe::write_trace_csv(moe::join_path(out, "trace_" + tag + ".csv"), o.gating->trace, false);
    if (o.joint) moe::write_trace_csv(moe::join_path(out, "trace_" + tag + ".csv"), o.joint->trace, true);
    std::cout << tag;
    if (o.regressor)
      std::cout << ": regressor_fit=" << o.regressor->fit << " gating_fit=" << o.gating_fit->fit
                << " param_error=" << o.error->error;
    std::cout << " iterations=" << o.iterations() << '\n';
    for (const auto& w : o.warnings) std::cerr << "warning: " << w << '\n';
  }
  return 0;
}

int cmd_experiment(const std::string& suite_name, const std::string& config_path, std::optional<std::uint64_t> seed,
                   std::optional<int> trials, const std::string& algo, std::string out, unsigned threads) {
  moe::Json overrides = config_path.empty() ? moe::Json::object() : moe::read_json_file(config_path);
  if (seed) overrides["seed"] = *seed;
  if (trials) overrides["trials"] = *trials;
  if (!algo.empty()) overrides["algorithms"] = {algo};
  const moe::Suite suite = moe::make_suite(suite_name, overrides);
  if (out.empty()) out = moe::join_path(config_path.empty() || !overrides.contains("out") ? "results" : suite.base.out, suite_name);
  const moe::SuiteResult res = moe::run_suite(suite, threads);
  moe::write_suite_outputs(res, out);
  std::ifstream table(moe::join_path(out, suite_name + ".csv"));
  std::cout << table.rdbuf();
  std::size_t failures = 0;
  for (const auto& r : res.records) failures += r.ok ? 0 : 1;
  if (failures > 0) std::cerr << failures << " trial runs failed; see " << suite_name << "_failures.csv\n";
  std::cout << "outputs in " << out << '\n';
  return 0;
}

int cmd_ingest(const std::string& config_path, std::string csv, std::string target, std::string features,
               std::optional<double> split, std::optional<std::uint64_t> seed, std::string out) {
  moe::ExperimentConfig cfg = load_config(config_path);
  if (csv.empty()) csv = cfg.data_path;
  if (target.empty()) target = cfg.target;
  std::vector<std::string> cols = cfg.features;
  if (!features.empty()) {
    cols.clear();
    for (auto& f : moe::split_csv_line(features)) cols.push_back(f);
  }
  if (csv.empty() || target.empty()) throw moe::ConfigError("ingest needs --csv and --target (or data.path and data.target)");
  if (out.empty()) out = cfg.out;
  const moe::TabularDataset tab =
      moe::ingest_csv(csv, cols, target, split.value_or(cfg.split), seed.value_or(cfg.seed));
  moe::ensure_directory(out);
  moe::write_dataset_csv(moe::join_path(out, "train.csv"), tab.train);
  moe::write_dataset_csv(moe::join_path(out, "test.csv"), tab.test);
  moe::write_json_file(moe::join_path(out, "preprocessing.json"), moe::tabular_to_json(tab));
  for (const auto& w : tab.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "train " << tab.train.n() << " rows, test " << tab.test.n() << " rows, " << tab.train.d()
            << " features -> " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixture-of-experts parameter recovery: spectral regressors, EM / MoM gating"};
  app.require_subcommand(1);
  std::string config_path, out, algo;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads_opt;
  app.add_option("--threads", threads_opt, "Worker threads (default: MOE_THREADS or hardware concurrency)");

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--seed", seed, "Master seed");
    sub->add_option("--out", out, "Output directory");
    sub->add_option("--threads", threads_opt, "Worker threads");
  };

  CLI::App* gen = app.add_subcommand("generate", "Draw a model from the config and sample a dataset");
  common(gen);

  std::string data_path, model_path;
  CLI::App* fit = app.add_subcommand("fit", "Fit a dataset and write a FitReport");
  common(fit);
  fit->add_option("--data", data_path, "Dataset CSV (x0..x{d-1},y[,z])")->required();
  fit->add_option("--model", model_path, "Ground-truth model JSON for scoring");
  fit->add_option("--algo", algo, "spectral+em | spectral+gradient-em | spectral+mom | joint-em");

  std::string suite;
  std::optional<int> trials;
  CLI::App* exp = app.add_subcommand("experiment", "Run an experiment suite");
  common(exp);
  exp->add_option("suite", suite, "table1 | table2 | fig_k3 | fig_k4 | fig_nonorth | varying_n | nonlinear | realdata")
      ->required()
      ->check(CLI::IsMember(moe::suite_names()));
  exp->add_option("--trials", trials, "Trials per cell");
  exp->add_option("--algo", algo, "Restrict to one algorithm");

  std::string csv, target, features;
  std::optional<double> split;
  CLI::App* ing = app.add_subcommand("ingest", "Split, whiten and scale a tabular CSV");
  common(ing);
  ing->add_option("--csv", csv, "Input CSV with a header row");
  ing->add_option("--target", target, "Target column name");
  ing->add_option("--features", features, "Comma-separated feature columns (default: all but target)");
  ing->add_option("--split", split, "Training fraction (default 0.75)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  const unsigned threads = threads_opt.value_or(moe::default_threads());
  try {
    if (*gen) return cmd_generate(config_path, seed, out, threads);
    if (*fit) return cmd_fit(config_path, data_path, model_path, algo, seed, out);
    if (*exp) return cmd_experiment(suite, config_path, seed, trials, algo, out, threads);
    if (*ing) return cmd_ingest(config_path, csv, target, features, split, seed, out);
  } catch (const moe::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
