#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "atebench/dataset.hpp"
#include "atebench/estimators.hpp"
#include "atebench/glm.hpp"

namespace atebench {

struct MonteCarloRow {
  std::string nuisance_method;
  std::string estimator;
  double bias = 0.0;
  double std_err = 0.0;
  int n_reps_used = 0;
  int n_reps_failed = 0;
  double mc_se_of_bias = 0.0;
};

struct MonteCarloReport {
  std::vector<MonteCarloRow> rows;
  SimulationConfig config;
  double truth = 0.0;           // true ATE under the config
  double kappa_nominal = 0.0;   // d / n
  double kappa_effective = 0.0; // d / per-fold training size

  std::string to_csv() const;  // header nuisance,estimator,bias,std_err,...
  std::string to_json() const;
};

using McPlan = std::vector<std::pair<NuisanceMethod, Estimator>>;

// Throws when the pair cannot be evaluated: the oracle estimator needs the
// oracle method and vice versa, corrected IPW needs sloe propensities, and
// the binomial update needs logistic outcomes.
void check_pair(NuisanceMethod method, Estimator estimator, Family family);

// Cross product of the request lists, filtered to evaluable pairs, in the
// given order (methods outer).  Throws when nothing survives.
McPlan cross_plan(const std::vector<NuisanceMethod>& methods,
                  const std::vector<Estimator>& estimators, Family family);

// Simulates config.n_reps datasets and evaluates every planned
// (method, estimator) pair on each.  Replications whose fits fail are
// excluded from the moments and counted per row; a row with no surviving
// replication raises an error.  Raw per-fold fits are shared across the
// methods within a replication, and results do not depend on parallelism.
MonteCarloReport run_monte_carlo(const SimulationConfig& config,
                                 const McPlan& plan, int parallelism = 1);

MonteCarloReport run_monte_carlo(const SimulationConfig& config,
                                 const std::vector<NuisanceMethod>& methods,
                                 const std::vector<Estimator>& estimators,
                                 int parallelism = 1);

// Simulation settings behind each published table.
SimulationConfig table_config(int table_id);

// The same aspect ratios at a fraction of the size, for quick local runs.
SimulationConfig desk_config(int table_id);

// The row layout of each published table.
McPlan table_plan(int table_id);

// Runs the full-size preset for a table with the requested replication
// count and writes the CSV beside returning the report.
MonteCarloReport replicate_table(int table_id, int reps,
                                 const std::string& out_path,
                                 int parallelism = 1);

void write_report_csv(const MonteCarloReport& report, const std::string& path);

struct CalibrationBin {
  double mean_predicted = 0.0;
  double mean_observed = 0.0;
  int count = 0;
};

struct CalibrationTable {
  std::vector<CalibrationBin> bins;

  std::string to_csv() const;  // header mean_predicted,mean_observed,count
};

// Equal-count reliability table: evaluation rows are sorted by predicted
// probability and split into n_bins groups of near-equal size.  The
// evaluation data must be independent of whatever the fit was trained on.
CalibrationTable calibration_report(const GlmFit& fit,
                                    const Eigen::MatrixXd& eval_x,
                                    const Eigen::VectorXd& eval_y, int n_bins);

// Slope of the two-parameter logistic recalibration of eval_y on the fit's
// linear predictor: 1 for calibrated predictions, below 1 for over-confident
// ones, above 1 for under-confident ones.
double recalibration_slope(const GlmFit& fit, const Eigen::MatrixXd& eval_x,
                           const Eigen::VectorXd& eval_y);

struct CalibrationRun {
  CalibrationTable table;
  double slope = 0.0;
};

// Simulation-backed calibration check of the treatment-assignment model: fit
// the model on one simulated draw by the given method, then score a fresh
// draw of n_eval rows.  Oracle methods have nothing to calibrate and are
// rejected.
CalibrationRun calibrate_simulated(const SimulationConfig& config,
                                   NuisanceMethod method, int n_bins,
                                   int n_eval);

struct CoefficientReport {
  Eigen::VectorXd true_coef;
  Eigen::VectorXd estimated_coef;
  double slope = 0.0;  // no-intercept regression of estimated on true
  bool slope_defined = false;

  std::string to_csv() const;  // header index,true_coef,estimated_coef
};

// Per-coordinate comparison of a fitted assignment model's effective
// coefficients against the true ones.  The slope is undefined when the true
// coefficients are all zero.
CoefficientReport coefficient_report(const GlmFit& fit,
                                     const TrueParams& truth);

CoefficientReport coefficient_report(const GlmFit& fit,
                                     const TrueParams& truth,
                                     const std::string& out_path);

struct EstimateFlags {
  LinkMode link = LinkMode::corrected;
  int series_order = 1;
  IpwNormalization normalization = IpwNormalization::horvitz_thompson;
  double clip = 0.0;
  SloeOptions sloe;
};

// End-to-end pipeline on a dataset file: load, infer the family from the
// outcomes, cross-fit, estimate.  Oracle methods need simulated truth and
// are rejected here.
EstimateResult estimate_from_file(const std::string& path,
                                  NuisanceMethod method, Estimator estimator,
                                  int folds, std::uint64_t seed,
                                  const EstimateFlags& flags = {});

}  // namespace atebench
