// Command-line front end: simulate datasets, run single estimates, replicate
// the published tables, check calibration, and evaluate the closed-form
// variance predictions.  Everything here is a thin shell over the core
// library; each subcommand parses flags, calls one entry point, and prints
// JSON (CSV for the table reports).

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "atebench/dataset.hpp"
#include "atebench/errors.hpp"
#include "atebench/estimators.hpp"
#include "atebench/harness.hpp"
#include "atebench/sim.hpp"
#include "atebench/theory.hpp"

namespace {

using nlohmann::json;

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

void write_file(const std::string& text, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw atebench::config_error("cannot open '" + path + "' for writing");
  }
  out << text;
  if (!out) throw atebench::config_error("failed writing '" + path + "'");
}

void emit(const std::string& text, const std::string& out_path) {
  std::cout << text << '\n';
  if (!out_path.empty()) write_file(text + "\n", out_path);
}

struct SimulateArgs {
  std::string config_path;
  int rep = 0;
  std::string out;
};

int run_simulate(const SimulateArgs& a) {
  const auto config = atebench::SimulationConfig::from_json_file(a.config_path);
  const atebench::Dataset data = atebench::simulate(config, a.rep);
  atebench::save_dataset(data, a.out);
  json j;
  j["out"] = a.out;
  j["rep"] = a.rep;
  j["n"] = data.n();
  j["d"] = data.d();
  j["true_ate"] = atebench::true_ate(config);
  std::cout << j.dump(2) << '\n';
  return 0;
}

struct EstimateArgs {
  std::string data_path;
  std::string nuisance = "mle";
  std::string estimator = "aipw";
  int folds = 5;
  std::uint64_t seed = 0;
  std::string link = "corrected";
  int series_order = 1;
  bool hajek = false;
  double clip = 0.0;
  std::string out;
};

int run_estimate(const EstimateArgs& a) {
  atebench::EstimateFlags flags;
  if (a.link == "corrected") {
    flags.link = atebench::LinkMode::corrected;
  } else if (a.link == "raw") {
    flags.link = atebench::LinkMode::raw;
  } else {
    throw atebench::config_error("link must be 'corrected' or 'raw'");
  }
  flags.series_order = a.series_order;
  flags.normalization = a.hajek ? atebench::IpwNormalization::hajek
                                : atebench::IpwNormalization::horvitz_thompson;
  flags.clip = a.clip;
  const atebench::EstimateResult result = atebench::estimate_from_file(
      a.data_path, atebench::nuisance_from_name(a.nuisance),
      atebench::estimator_from_name(a.estimator), a.folds, a.seed, flags);
  emit(result.to_json(), a.out);
  return 0;
}

struct ReplicateArgs {
  int table = 0;
  int reps = 1000;
  std::string out;
  int parallelism = 1;
  bool desk = false;
};

int run_replicate(const ReplicateArgs& a) {
  atebench::MonteCarloReport report;
  if (a.desk) {
    atebench::SimulationConfig config = atebench::desk_config(a.table);
    config.n_reps = a.reps;
    report = atebench::run_monte_carlo(config, atebench::table_plan(a.table),
                                       a.parallelism);
    atebench::write_report_csv(report, a.out);
  } else {
    report = atebench::replicate_table(a.table, a.reps, a.out, a.parallelism);
  }
  std::cout << report.to_json() << '\n';
  return 0;
}

struct CalibrateArgs {
  std::string config_path;
  std::string method = "mle";
  int bins = 10;
  int n_eval = 100000;
  std::string out;
};

int run_calibrate(const CalibrateArgs& a) {
  const auto config = atebench::SimulationConfig::from_json_file(a.config_path);
  const atebench::CalibrationRun run = atebench::calibrate_simulated(
      config, atebench::nuisance_from_name(a.method), a.bins, a.n_eval);
  if (!a.out.empty()) write_file(run.table.to_csv(), a.out);
  json j;
  j["method"] = a.method;
  j["bins"] = a.bins;
  j["n_eval"] = a.n_eval;
  j["slope"] = run.slope;
  if (!a.out.empty()) j["out"] = a.out;
  std::cout << j.dump(2) << '\n';
  return 0;
}

struct TheoryArgs {
  std::string op;
  std::string config_path;
  int n = 0;
  int d = 0;
  int n_fit = 0;
  int n2 = 0;
  int n11 = 0;
  int n10 = 0;
  int arm = 1;
  double sigma2 = 1.0;
  double gamma2 = 5.0;
  double kappa = 0.0;
  double beta_diff_norm2 = 0.0;
  double p = 0.5;
  double p11 = 0.25;
  double p10 = 0.25;
  double mean_x_norm2 = 0.0;
  int n_mc = 200000;
  int reps = 2000;
  std::uint64_t seed = 1;
  std::vector<int> n_grid;
  std::string out;
};

atebench::SimulationConfig linear_config(const TheoryArgs& a) {
  if (a.config_path.empty()) {
    throw atebench::config_error("op '" + a.op + "' needs --config");
  }
  const auto config =
      atebench::SimulationConfig::from_json_file(a.config_path);
  if (config.family != atebench::Family::linear) {
    throw atebench::config_error(
        "op '" + a.op + "' predicts variances for the linear outcome family");
  }
  return config;
}

atebench::SimulationConfig any_config(const TheoryArgs& a) {
  if (a.config_path.empty()) {
    throw atebench::config_error("op '" + a.op + "' needs --config");
  }
  return atebench::SimulationConfig::from_json_file(a.config_path);
}

int run_theory(const TheoryArgs& a) {
  json j;
  j["op"] = a.op;
  if (a.op == "exact-beta-variance") {
    if (a.n_fit <= 0 || a.d <= 0) {
      throw atebench::config_error(
          "exact-beta-variance needs --n-fit and --d");
    }
    const Eigen::MatrixXd v = atebench::exact_beta_variance(
        Eigen::MatrixXd::Identity(a.d, a.d), a.n_fit, a.d, a.sigma2);
    j["n_fit"] = a.n_fit;
    j["d"] = a.d;
    j["sigma2"] = a.sigma2;
    j["coordinate_variance"] = v(0, 0);
  } else if (a.op == "gcomp-variance") {
    const auto config = linear_config(a);
    if (a.n11 <= 0 || a.n10 <= 0 || a.n2 <= 0) {
      throw atebench::config_error(
          "gcomp-variance needs --n11, --n10 and --n2");
    }
    const atebench::TrueParams tp = atebench::true_params(config);
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(config.d, config.d);
    const Eigen::MatrixXd var_beta_diff =
        atebench::exact_beta_variance(id, a.n11, config.d, config.sigma2) +
        atebench::exact_beta_variance(id, a.n10, config.d, config.sigma2);
    const atebench::VarianceReport report = atebench::gcomp_variance(
        tp.beta1, tp.beta0, id, var_beta_diff,
        Eigen::VectorXd::Zero(config.d), a.n2);
    j["report"] = json::parse(report.to_json());
  } else if (a.op == "gcomp-asymptotic-variance") {
    j["value"] = atebench::gcomp_asymptotic_variance(
        a.kappa, a.sigma2, a.beta_diff_norm2, a.p, a.p11, a.p10,
        a.mean_x_norm2);
  } else if (a.op == "aipw-remainder") {
    const auto config = linear_config(a);
    if (a.n11 <= 0 || a.n10 <= 0) {
      throw atebench::config_error("aipw-remainder needs --n11 and --n10");
    }
    const atebench::TrueParams tp = atebench::true_params(config);
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(config.d, config.d);
    const atebench::SigmaZEstimate z1 =
        atebench::estimate_sigma_z(tp.eta, 1, a.n_mc, a.seed);
    const atebench::SigmaZEstimate z0 =
        atebench::estimate_sigma_z(tp.eta, 0, a.n_mc, a.seed + 1);
    j["value"] = atebench::aipw_remainder_variance(
        atebench::exact_beta_variance(id, a.n11, config.d, config.sigma2),
        atebench::exact_beta_variance(id, a.n10, config.d, config.sigma2),
        z1.value, z0.value);
    j["sigma_z_max_se"] =
        std::max(z1.std_err.maxCoeff(), z0.std_err.maxCoeff());
  } else if (a.op == "efficiency-bound") {
    const auto config = linear_config(a);
    const atebench::TrueParams tp = atebench::true_params(config);
    const atebench::EfficiencyBound b = atebench::efficiency_bound(
        tp.beta1, tp.beta0, Eigen::MatrixXd::Identity(config.d, config.d),
        tp.eta, config.sigma2, a.n_mc, a.seed);
    j["signal"] = b.signal;
    j["noise"] = b.noise;
    j["total"] = b.total;
    j["mc_se"] = b.mc_se;
  } else if (a.op == "sigma-z") {
    const auto config = any_config(a);
    const atebench::TrueParams tp = atebench::true_params(config);
    const atebench::SigmaZEstimate z =
        atebench::estimate_sigma_z(tp.eta, a.arm, a.n_mc, a.seed);
    j["arm"] = a.arm;
    j["value"] = matrix_json(z.value);
    j["std_err"] = matrix_json(z.std_err);
  } else if (a.op == "wishart-symmetry") {
    if (a.n <= 0 || a.d <= 0) {
      throw atebench::config_error("wishart-symmetry needs --n and --d");
    }
    const Eigen::VectorXd eta =
        Eigen::VectorXd::Constant(a.d, std::sqrt(a.gamma2 / a.d));
    const atebench::WishartComparison wc =
        atebench::wishart_symmetry_check(a.n, a.d, eta, a.n_mc, a.seed);
    j["n"] = a.n;
    j["d"] = a.d;
    j["gamma2"] = a.gamma2;
    j["lhs"] = matrix_json(wc.lhs);
    j["rhs"] = matrix_json(wc.rhs);
    j["difference"] = matrix_json(wc.difference);
    j["combined_se"] = matrix_json(wc.combined_se);
    j["max_abs_z"] = wc.max_abs_z;
  } else if (a.op == "prediction-variance-floor") {
    if (a.n_grid.empty()) {
      throw atebench::config_error(
          "prediction-variance-floor needs --n-grid");
    }
    const auto rows = atebench::prediction_variance_floor(
        a.kappa, a.n_grid, a.reps, a.seed, a.sigma2, a.gamma2);
    json rows_json = json::array();
    for (const auto& row : rows) {
      rows_json.push_back({{"n", row.n},
                           {"d", row.d},
                           {"variance", row.variance},
                           {"std_err", row.std_err}});
    }
    j["kappa"] = a.kappa;
    j["rows"] = rows_json;
  } else {
    throw atebench::config_error(
        "unknown op '" + a.op +
        "'; valid ops: exact-beta-variance, gcomp-variance, "
        "gcomp-asymptotic-variance, aipw-remainder, efficiency-bound, "
        "sigma-z, wishart-symmetry, prediction-variance-floor");
  }
  emit(j.dump(2), a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Cross-fit treatment-effect estimators and their high-dimensional "
      "corrections"};
  app.require_subcommand(1);

  SimulateArgs sim_args;
  CLI::App* sim = app.add_subcommand(
      "simulate", "Draw one replication of a simulation config to CSV");
  sim->add_option("--config", sim_args.config_path, "Simulation config JSON")
      ->required();
  sim->add_option("--rep", sim_args.rep, "Replication index (default 0)");
  sim->add_option("--out", sim_args.out, "Output dataset CSV")->required();

  EstimateArgs est_args;
  CLI::App* est = app.add_subcommand(
      "estimate", "Cross-fit one estimator on a dataset file");
  est->add_option("--data", est_args.data_path, "Dataset CSV")->required();
  est->add_option("--nuisance", est_args.nuisance,
                  "mle|platt|sloe|propensity-oracle|oracle");
  est->add_option("--estimator", est_args.estimator,
                  "gcomp|ipw|ipw-corrected|aipw|aipw-oracle|tmle-gaussian|"
                  "tmle-binomial");
  est->add_option("--folds", est_args.folds, "Cross-fitting folds");
  est->add_option("--seed", est_args.seed, "Fold-assignment seed");
  est->add_option("--link", est_args.link,
                  "Outcome link for corrected fits: corrected|raw");
  est->add_option("--series-order", est_args.series_order,
                  "Series order of the corrected link (0-4)");
  est->add_flag("--hajek", est_args.hajek,
                "Self-normalize IPW weights per arm");
  est->add_option("--clip", est_args.clip,
                  "Clamp propensities to [clip, 1-clip]; 0 disables");
  est->add_option("--out", est_args.out, "Also write the JSON result here");

  ReplicateArgs rep_args;
  CLI::App* rep = app.add_subcommand(
      "replicate", "Monte Carlo replication of a published table");
  rep->add_option("--table", rep_args.table, "Table id: 1, 2 or 3")
      ->required();
  rep->add_option("--reps", rep_args.reps, "Replications (default 1000)");
  rep->add_option("--out", rep_args.out, "Output report CSV")->required();
  rep->add_option("--parallelism", rep_args.parallelism, "Worker threads");
  rep->add_flag("--desk", rep_args.desk,
                "Use the reduced-size preset at the same aspect ratio");

  CalibrateArgs cal_args;
  CLI::App* cal = app.add_subcommand(
      "calibrate", "Reliability table of a fitted assignment model");
  cal->add_option("--config", cal_args.config_path, "Simulation config JSON")
      ->required();
  cal->add_option("--method", cal_args.method, "mle|platt|sloe");
  cal->add_option("--bins", cal_args.bins, "Equal-count bins (default 10)");
  cal->add_option("--eval", cal_args.n_eval,
                  "Fresh evaluation rows (default 100000)");
  cal->add_option("--out", cal_args.out, "Output reliability CSV");

  TheoryArgs th_args;
  CLI::App* th = app.add_subcommand(
      "theory", "Closed-form and Monte Carlo variance predictions");
  th->add_option("--op", th_args.op, "Operation name")->required();
  th->add_option("--config", th_args.config_path, "Simulation config JSON");
  th->add_option("--n", th_args.n, "Sample size");
  th->add_option("--d", th_args.d, "Covariate dimension");
  th->add_option("--n-fit", th_args.n_fit, "Fitting rows");
  th->add_option("--n2", th_args.n2, "Evaluation rows");
  th->add_option("--n11", th_args.n11, "Treated fitting rows");
  th->add_option("--n10", th_args.n10, "Control fitting rows");
  th->add_option("--arm", th_args.arm, "Arm: 1 treated, 0 control");
  th->add_option("--sigma2", th_args.sigma2, "Outcome noise variance");
  th->add_option("--gamma2", th_args.gamma2, "Propensity signal strength");
  th->add_option("--kappa", th_args.kappa, "Aspect ratio d/n");
  th->add_option("--beta-diff-norm2", th_args.beta_diff_norm2,
                 "Squared norm of the outcome coefficient difference");
  th->add_option("--p", th_args.p, "Evaluation fraction");
  th->add_option("--p11", th_args.p11, "Treated fitting fraction");
  th->add_option("--p10", th_args.p10, "Control fitting fraction");
  th->add_option("--mean-x-norm2", th_args.mean_x_norm2,
                 "Squared norm of the covariate mean");
  th->add_option("--n-mc", th_args.n_mc, "Monte Carlo draws");
  th->add_option("--reps", th_args.reps, "Replications");
  th->add_option("--seed", th_args.seed, "Monte Carlo seed");
  th->add_option("--n-grid", th_args.n_grid, "Comma-separated sample sizes")
      ->delimiter(',');
  th->add_option("--out", th_args.out, "Also write the JSON result here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*sim) return run_simulate(sim_args);
    if (*est) return run_estimate(est_args);
    if (*rep) return run_replicate(rep_args);
    if (*cal) return run_calibrate(cal_args);
    if (*th) return run_theory(th_args);
  } catch (const atebench::config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const atebench::numerical_error& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
