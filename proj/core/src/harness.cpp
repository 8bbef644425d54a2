#include "atebench/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>

#include "json.hpp"

#include "atebench/calibrate.hpp"
#include "atebench/errors.hpp"
#include "atebench/parallel.hpp"
#include "atebench/rng.hpp"
#include "atebench/sim.hpp"
#include "atebench/sloe.hpp"

namespace atebench {

namespace {

// Decorrelates the per-replication fold-assignment seeds from the
// data-generation substreams, which hang off config.seed directly.
constexpr std::uint64_t kFoldSalt = 0xa0761d6478bd642fULL;

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

bool pair_ok(NuisanceMethod method, Estimator estimator, Family family) {
  const bool oracle_method = method == NuisanceMethod::full_oracle;
  const bool oracle_estimator = estimator == Estimator::aipw_oracle;
  if (oracle_method != oracle_estimator) return false;
  if (estimator == Estimator::ipw_corrected &&
      method != NuisanceMethod::sloe) {
    return false;
  }
  if (estimator == Estimator::tmle_binomial && family != Family::logistic) {
    return false;
  }
  return true;
}

void append_line(std::string& out, std::initializer_list<std::string> cells) {
  bool first = true;
  for (const std::string& cell : cells) {
    if (!first) out += ',';
    out += cell;
    first = false;
  }
  out += '\n';
}

void write_text(const std::string& text, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw config_error("failed writing '" + path + "'");
}

}  // namespace

void check_pair(NuisanceMethod method, Estimator estimator, Family family) {
  const bool oracle_method = method == NuisanceMethod::full_oracle;
  const bool oracle_estimator = estimator == Estimator::aipw_oracle;
  if (oracle_method != oracle_estimator) {
    throw config_error(
        "the oracle estimator and the oracle nuisance method only pair with "
        "each other");
  }
  if (estimator == Estimator::ipw_corrected &&
      method != NuisanceMethod::sloe) {
    throw config_error(
        "corrected IPW needs sloe propensity fits to supply the noise scale");
  }
  if (estimator == Estimator::tmle_binomial && family != Family::logistic) {
    throw config_error(
        "the binomial update needs outcome models on the probability scale");
  }
}

McPlan cross_plan(const std::vector<NuisanceMethod>& methods,
                  const std::vector<Estimator>& estimators, Family family) {
  McPlan plan;
  for (NuisanceMethod m : methods) {
    for (Estimator e : estimators) {
      if (pair_ok(m, e, family)) plan.emplace_back(m, e);
    }
  }
  if (plan.empty()) {
    throw config_error(
        "no evaluable nuisance-method/estimator combinations were requested");
  }
  return plan;
}

MonteCarloReport run_monte_carlo(const SimulationConfig& config,
                                 const McPlan& plan, int parallelism) {
  config.validate();
  if (plan.empty()) throw config_error("the replication plan is empty");
  for (const auto& pair : plan) {
    check_pair(pair.first, pair.second, config.family);
  }
  if (parallelism < 1) throw config_error("parallelism must be positive");
  const int reps = config.n_reps;

  // Methods in first-appearance order; the fitted ones share one raw
  // cross-fit base per replication.
  std::vector<NuisanceMethod> method_order;
  for (const auto& pair : plan) {
    if (std::find(method_order.begin(), method_order.end(), pair.first) ==
        method_order.end()) {
      method_order.push_back(pair.first);
    }
  }
  std::vector<NuisanceMethod> fit_methods;
  for (NuisanceMethod m : method_order) {
    if (m != NuisanceMethod::full_oracle) fit_methods.push_back(m);
  }

  std::vector<std::vector<std::optional<double>>> values(
      reps, std::vector<std::optional<double>>(plan.size()));

  parallel_for(reps, parallelism, [&](int r) {
    const Dataset data = simulate(config, r);
    const std::uint64_t fold_seed =
        mix64(config.seed ^ mix64(static_cast<std::uint64_t>(r) + kFoldSalt));

    std::vector<FoldBase> base;
    bool base_ok = true;
    if (!fit_methods.empty()) {
      try {
        base = crossfit_base(data, config.family, config.folds, fold_seed,
                             fit_methods);
      } catch (const numerical_error&) {
        base_ok = false;
      }
    }

    for (NuisanceMethod m : method_order) {
      if (m != NuisanceMethod::full_oracle && !base_ok) continue;
      CrossfitOptions options;
      options.family = config.family;
      options.folds = config.folds;
      options.method = m;
      options.seed = fold_seed;
      NuisanceBundle bundle;
      try {
        bundle = nuisance_from_base(data, base, options);
      } catch (const numerical_error&) {
        continue;
      }
      for (std::size_t k = 0; k < plan.size(); ++k) {
        if (plan[k].first != m) continue;
        try {
          values[r][k] = run_estimator(data, bundle, plan[k].second).estimate;
        } catch (const numerical_error&) {
        }
      }
    }
  });

  MonteCarloReport report;
  report.config = config;
  report.truth = true_ate(config);
  report.kappa_nominal = static_cast<double>(config.d) / config.n;
  report.kappa_effective =
      report.kappa_nominal * config.folds / (config.folds - 1.0);

  std::string dead;
  for (std::size_t k = 0; k < plan.size(); ++k) {
    MonteCarloRow row;
    row.nuisance_method = nuisance_name(plan[k].first);
    row.estimator = estimator_name(plan[k].second);
    double sum = 0.0;
    int used = 0;
    for (int r = 0; r < reps; ++r) {
      if (values[r][k]) {
        sum += *values[r][k];
        ++used;
      }
    }
    row.n_reps_used = used;
    row.n_reps_failed = reps - used;
    if (used == 0) {
      if (!dead.empty()) dead += ", ";
      dead += row.nuisance_method + "/" + row.estimator;
      row.bias = std::numeric_limits<double>::quiet_NaN();
      row.std_err = std::numeric_limits<double>::quiet_NaN();
      row.mc_se_of_bias = std::numeric_limits<double>::quiet_NaN();
      report.rows.push_back(row);
      continue;
    }
    const double mean = sum / used;
    row.bias = mean - report.truth;
    double ss = 0.0;
    for (int r = 0; r < reps; ++r) {
      if (values[r][k]) {
        const double dev = *values[r][k] - mean;
        ss += dev * dev;
      }
    }
    if (used > 1) {
      row.std_err = std::sqrt(ss / (used - 1));
      row.mc_se_of_bias = row.std_err / std::sqrt(static_cast<double>(used));
    } else {
      row.std_err = std::numeric_limits<double>::quiet_NaN();
      row.mc_se_of_bias = std::numeric_limits<double>::quiet_NaN();
    }
    report.rows.push_back(row);
  }
  if (!dead.empty()) {
    throw numerical_error("every replication failed for " + dead);
  }
  return report;
}

MonteCarloReport run_monte_carlo(const SimulationConfig& config,
                                 const std::vector<NuisanceMethod>& methods,
                                 const std::vector<Estimator>& estimators,
                                 int parallelism) {
  return run_monte_carlo(
      config, cross_plan(methods, estimators, config.family), parallelism);
}

SimulationConfig table_config(int table_id) {
  SimulationConfig c;
  c.gamma2 = 5.0;
  c.sigma2 = 1.0;
  c.r2_treated = 0.9;
  c.r2_control = 0.8;
  c.folds = 5;
  c.n_reps = 1000;
  switch (table_id) {
    case 1:
      c.n = 4000;
      c.d = 8;
      c.family = Family::linear;
      c.tau = 1.0;
      c.seed = 101;
      break;
    case 2:
      c.n = 4000;
      c.d = 320;
      c.family = Family::linear;
      c.tau = 1.0;
      c.seed = 202;
      break;
    case 3:
      c.n = 8000;
      c.d = 640;
      c.family = Family::logistic;
      c.tau = 1.0;
      c.seed = 303;
      break;
    default:
      throw config_error("table id must be 1, 2 or 3");
  }
  return c;
}

SimulationConfig desk_config(int table_id) {
  SimulationConfig c = table_config(table_id);
  c.n_reps = 200;
  switch (table_id) {
    case 1:
      c.n = 1000;
      c.d = 8;
      c.seed = 111;
      break;
    case 2:
      c.n = 1000;
      c.d = 80;
      c.seed = 222;
      break;
    default:
      c.n = 2000;
      c.d = 160;
      c.seed = 333;
      break;
  }
  return c;
}

McPlan table_plan(int table_id) {
  const std::vector<Estimator> linear_row = {Estimator::gcomp, Estimator::ipw,
                                             Estimator::aipw,
                                             Estimator::tmle_gaussian};
  const std::vector<Estimator> logistic_row = {
      Estimator::gcomp, Estimator::ipw, Estimator::aipw,
      Estimator::tmle_gaussian, Estimator::tmle_binomial};
  // Rows that rescale the propensity logits swap plain inverse weighting for
  // the corrected form: the rescaled logits still carry additive noise, and
  // raw inverse propensities inherit its Jensen gap.
  McPlan plan;
  const auto add = [&plan](NuisanceMethod m,
                           const std::vector<Estimator>& row) {
    for (Estimator e : row) plan.emplace_back(m, e);
  };
  switch (table_id) {
    case 1:
      add(NuisanceMethod::mle, linear_row);
      add(NuisanceMethod::platt, linear_row);
      add(NuisanceMethod::propensity_oracle, linear_row);
      break;
    case 2: {
      add(NuisanceMethod::mle, linear_row);
      add(NuisanceMethod::platt, linear_row);
      std::vector<Estimator> sloe_row = linear_row;
      sloe_row[1] = Estimator::ipw_corrected;
      add(NuisanceMethod::sloe, sloe_row);
      add(NuisanceMethod::propensity_oracle, linear_row);
      break;
    }
    case 3: {
      add(NuisanceMethod::mle, logistic_row);
      add(NuisanceMethod::platt, logistic_row);
      std::vector<Estimator> sloe_row = logistic_row;
      sloe_row[1] = Estimator::ipw_corrected;
      add(NuisanceMethod::sloe, sloe_row);
      add(NuisanceMethod::propensity_oracle, logistic_row);
      break;
    }
    default:
      throw config_error("table id must be 1, 2 or 3");
  }
  plan.emplace_back(NuisanceMethod::full_oracle, Estimator::aipw_oracle);
  return plan;
}

MonteCarloReport replicate_table(int table_id, int reps,
                                 const std::string& out_path,
                                 int parallelism) {
  if (reps < 1) throw config_error("the replication count must be positive");
  SimulationConfig config = table_config(table_id);
  config.n_reps = reps;
  MonteCarloReport report =
      run_monte_carlo(config, table_plan(table_id), parallelism);
  write_report_csv(report, out_path);
  return report;
}

std::string MonteCarloReport::to_csv() const {
  std::string out;
  append_line(out, {"nuisance", "estimator", "bias", "std_err", "reps_used",
                    "reps_failed", "mc_se"});
  for (const MonteCarloRow& row : rows) {
    append_line(out,
                {row.nuisance_method, row.estimator, fmt(row.bias),
                 fmt(row.std_err), std::to_string(row.n_reps_used),
                 std::to_string(row.n_reps_failed), fmt(row.mc_se_of_bias)});
  }
  return out;
}

std::string MonteCarloReport::to_json() const {
  nlohmann::json j;
  j["config"] = nlohmann::json::parse(config.to_json());
  j["truth"] = truth;
  j["kappa_nominal"] = kappa_nominal;
  j["kappa_effective"] = kappa_effective;
  nlohmann::json rows_json = nlohmann::json::array();
  for (const MonteCarloRow& row : rows) {
    rows_json.push_back({{"nuisance_method", row.nuisance_method},
                         {"estimator", row.estimator},
                         {"bias", row.bias},
                         {"std_err", row.std_err},
                         {"n_reps_used", row.n_reps_used},
                         {"n_reps_failed", row.n_reps_failed},
                         {"mc_se_of_bias", row.mc_se_of_bias}});
  }
  j["rows"] = rows_json;
  return j.dump(2);
}

void write_report_csv(const MonteCarloReport& report, const std::string& path) {
  write_text(report.to_csv(), path);
}

CalibrationTable calibration_report(const GlmFit& fit,
                                    const Eigen::MatrixXd& eval_x,
                                    const Eigen::VectorXd& eval_y,
                                    int n_bins) {
  if (fit.family != GlmFamily::binomial) {
    throw config_error("calibration needs probability predictions");
  }
  const int n = static_cast<int>(eval_x.rows());
  if (eval_y.size() != n) {
    throw config_error("evaluation rows and outcomes disagree in length");
  }
  for (int i = 0; i < n; ++i) {
    if (eval_y[i] != 0.0 && eval_y[i] != 1.0) {
      throw config_error("evaluation outcomes must be 0 or 1");
    }
  }
  if (n_bins < 2) throw config_error("calibration needs at least two bins");
  if (n_bins > n) {
    throw config_error(
        "more bins than evaluation rows would leave some bins empty");
  }

  const Eigen::VectorXd p = predict(fit, eval_x);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&p](int a, int b) {
    if (p[a] != p[b]) return p[a] < p[b];
    return a < b;
  });

  CalibrationTable table;
  const int base = n / n_bins;
  const int extra = n % n_bins;
  int at = 0;
  for (int b = 0; b < n_bins; ++b) {
    const int size = base + (b < extra ? 1 : 0);
    CalibrationBin bin;
    bin.count = size;
    for (int k = 0; k < size; ++k) {
      const int i = order[at + k];
      bin.mean_predicted += p[i];
      bin.mean_observed += eval_y[i];
    }
    bin.mean_predicted /= size;
    bin.mean_observed /= size;
    table.bins.push_back(bin);
    at += size;
  }
  return table;
}

std::string CalibrationTable::to_csv() const {
  std::string out;
  append_line(out, {"mean_predicted", "mean_observed", "count"});
  for (const CalibrationBin& bin : bins) {
    append_line(out, {fmt(bin.mean_predicted), fmt(bin.mean_observed),
                      std::to_string(bin.count)});
  }
  return out;
}

double recalibration_slope(const GlmFit& fit, const Eigen::MatrixXd& eval_x,
                           const Eigen::VectorXd& eval_y) {
  if (fit.family != GlmFamily::binomial) {
    throw config_error("recalibration needs probability predictions");
  }
  Eigen::MatrixXd score(eval_x.rows(), 1);
  score.col(0) = linear_predictors(fit, eval_x);
  const GlmFit recalibrated = fit_logistic_mle(score, eval_y);
  return recalibrated.coefficients[0];
}

CalibrationRun calibrate_simulated(const SimulationConfig& config,
                                   NuisanceMethod method, int n_bins,
                                   int n_eval) {
  config.validate();
  if (method == NuisanceMethod::propensity_oracle ||
      method == NuisanceMethod::full_oracle) {
    throw config_error(
        "oracle methods have no fitted predictions to calibrate");
  }
  if (n_eval < n_bins) {
    throw config_error("the fresh evaluation sample must cover the bins");
  }

  const Dataset data = simulate(config, 0);
  GlmFit fit = fit_logistic_mle(data.x, data.w);
  switch (method) {
    case NuisanceMethod::mle:
      break;
    case NuisanceMethod::platt:
      fit = platt_rescale_loo(fit, data.x, data.w);
      break;
    case NuisanceMethod::sloe:
      fit = sloe_correct(fit, data.x, data.w);
      break;
    default:
      break;
  }

  SimulationConfig eval_config = config;
  eval_config.n = n_eval;
  const Dataset fresh = simulate(eval_config, 1);

  CalibrationRun run;
  run.table = calibration_report(fit, fresh.x, fresh.w, n_bins);
  run.slope = recalibration_slope(fit, fresh.x, fresh.w);
  return run;
}

CoefficientReport coefficient_report(const GlmFit& fit,
                                     const TrueParams& truth) {
  if (fit.coefficients.size() != truth.eta.size()) {
    throw config_error(
        "the fit and the true parameters have mismatched dimensions");
  }
  CoefficientReport report;
  report.true_coef = truth.eta;
  report.estimated_coef = fit.effective_coefficients();
  const double denom = truth.eta.squaredNorm();
  if (denom > 0.0) {
    report.slope = report.estimated_coef.dot(truth.eta) / denom;
    report.slope_defined = true;
  }
  return report;
}

CoefficientReport coefficient_report(const GlmFit& fit,
                                     const TrueParams& truth,
                                     const std::string& out_path) {
  CoefficientReport report = coefficient_report(fit, truth);
  write_text(report.to_csv(), out_path);
  return report;
}

std::string CoefficientReport::to_csv() const {
  std::string out;
  append_line(out, {"index", "true_coef", "estimated_coef"});
  for (Eigen::Index i = 0; i < true_coef.size(); ++i) {
    append_line(out, {std::to_string(i), fmt(true_coef[i]),
                      fmt(estimated_coef[i])});
  }
  return out;
}

EstimateResult estimate_from_file(const std::string& path,
                                  NuisanceMethod method, Estimator estimator,
                                  int folds, std::uint64_t seed,
                                  const EstimateFlags& flags) {
  if (method == NuisanceMethod::propensity_oracle ||
      method == NuisanceMethod::full_oracle ||
      estimator == Estimator::aipw_oracle) {
    throw config_error(
        "oracle methods need simulated data with attached true parameters; "
        "ingested files carry none");
  }
  const Dataset data = load_dataset(path);
  const Family family = infer_family(data);
  check_pair(method, estimator, family);

  CrossfitOptions options;
  options.family = family;
  options.folds = folds;
  options.method = method;
  options.seed = seed;
  options.link = flags.link;
  options.series_order = flags.series_order;
  options.sloe = flags.sloe;
  options.clip = flags.clip;
  const NuisanceBundle bundle = crossfit(data, options);
  if (estimator == Estimator::ipw) {
    return ipw(data, bundle, flags.normalization, false);
  }
  return run_estimator(data, bundle, estimator);
}

}  // namespace atebench
