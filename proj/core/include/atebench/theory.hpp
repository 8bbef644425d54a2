#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "atebench/rng.hpp"

namespace atebench {

// Named variance contributions that sum to the total.
struct VarianceReport {
  std::map<std::string, double> components;
  double total = 0.0;

  std::string to_json() const;
};

// Exact covariance of OLS coefficients with a Gaussian design: the inverse
// Wishart moment sigma2 * Sigma^{-1} / (n_fit - d - 1).  Requires
// n_fit > d + 1, below which the moment does not exist.
Eigen::MatrixXd exact_beta_variance(const Eigen::MatrixXd& sigma, int n_fit,
                                    int d, double sigma2);

// Conditional variance of the split-sample G-computation estimate, given the
// fitting half, decomposed into three parts: the signal term from averaging
// (beta1 - beta0)'x over n2 fresh rows, the overfit term from the coefficient
// noise those rows are scored with, and the mean-shift term the coefficient
// noise contributes through a nonzero covariate mean.
VarianceReport gcomp_variance(const Eigen::VectorXd& beta1,
                              const Eigen::VectorXd& beta0,
                              const Eigen::MatrixXd& sigma,
                              const Eigen::MatrixXd& var_beta_diff,
                              const Eigen::VectorXd& mean_x, int n2);

// Limit of n * var(gcomp) as d/n -> kappa with n2/n -> p and the two
// fitting-arm fractions p11, p10.  The third term is kappa's price for
// overfitting: sigma2 * kappa / (p * (1 - kappa)), which stays bounded away
// from zero for kappa > 0.
double gcomp_asymptotic_variance(double kappa, double sigma2,
                                 double beta_diff_norm2, double p, double p11,
                                 double p10, double mean_x_norm2);

// The extra variance AIPW pays for estimated outcome coefficients:
// trace(var_beta1 * sigma_z1) + trace(var_beta0 * sigma_z0).
double aipw_remainder_variance(const Eigen::MatrixXd& var_beta1,
                               const Eigen::MatrixXd& var_beta0,
                               const Eigen::MatrixXd& sigma_z1,
                               const Eigen::MatrixXd& sigma_z0);

struct SigmaZEstimate {
  Eigen::MatrixXd value;
  Eigen::MatrixXd std_err;
};

// Monte Carlo estimate of var(Z^arm) for standard Gaussian covariates under
// the propensity sigmoid(eta'x): E[((1-pi)/pi) XX'] for the treated arm and
// E[(pi/(1-pi)) XX'] for the control arm.  The treatment indicator is
// integrated out analytically, so only X is sampled.
SigmaZEstimate estimate_sigma_z(const Eigen::VectorXd& eta, int arm, int n_mc,
                                std::uint64_t seed);

struct EfficiencyBound {
  double signal = 0.0;  // var((beta1 - beta0)'X), computed analytically
  double noise = 0.0;   // E[sigma2/e(X) + sigma2/(1 - e(X))], Monte Carlo
  double total = 0.0;
  double mc_se = 0.0;
};

// Semiparametric efficiency bound for the ATE under the homoskedastic linear
// outcome model with propensity sigmoid(eta'x).  The noise term depends on X
// only through eta'X ~ N(0, eta' Sigma eta), so the Monte Carlo runs over
// that scalar.
EfficiencyBound efficiency_bound(const Eigen::VectorXd& beta1,
                                 const Eigen::VectorXd& beta0,
                                 const Eigen::MatrixXd& sigma,
                                 const Eigen::VectorXd& eta, double sigma2,
                                 int n_mc, std::uint64_t seed = 0);

struct WishartComparison {
  Eigen::MatrixXd lhs;         // E[prod_i sigmoid(eta'x_i) * (X'X)^{-1}]
  Eigen::MatrixXd rhs;         // E[2^{-n} * (X'X)^{-1}]
  Eigen::MatrixXd difference;  // lhs - rhs
  Eigen::MatrixXd lhs_se;
  Eigen::MatrixXd rhs_se;
  Eigen::MatrixXd combined_se;  // MC standard error of the paired difference
  double max_abs_z = 0.0;       // max entrywise |difference| / combined_se
};

// Checks the sign-symmetry identity behind the exact OLS variance: weighting
// an inverse Wishart by the product of sigmoid propensities equals weighting
// it by 2^{-n}.  Both sides are estimated from the same draws, so the
// difference has much smaller error than either side.  Capped to n <= 30,
// d <= 5 and requires n >= d + 2.
WishartComparison wishart_symmetry_check(int n, int d,
                                         const Eigen::VectorXd& eta, int n_mc,
                                         std::uint64_t seed);

// Draws n covariate rows from X | W = 1 under the propensity sigmoid(eta'x)
// by rejection.
Eigen::MatrixXd sample_treated_covariates(int n, const Eigen::VectorXd& eta,
                                          Rng& rng);

struct PredictionVarianceRow {
  int n = 0;
  int d = 0;
  double variance = 0.0;
  double std_err = 0.0;
};

// For each n in the grid, fits no-intercept OLS on d = round(kappa * n)
// treated-conditional covariates with pure-noise outcomes, reps times, and
// reports the variance of the prediction at x = (1, ..., 1).  At fixed kappa
// the variance refuses to shrink with n; requires kappa * n >= 8 throughout.
std::vector<PredictionVarianceRow> prediction_variance_floor(
    double kappa, const std::vector<int>& n_grid, int reps, std::uint64_t seed,
    double sigma2 = 1.0, double gamma2 = 5.0);

}  // namespace atebench
