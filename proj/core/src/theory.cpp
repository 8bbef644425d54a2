#include "atebench/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "json.hpp"

#include "atebench/errors.hpp"
#include "atebench/link.hpp"

namespace atebench {

namespace {

void check_square(const Eigen::MatrixXd& m, const char* name, int d) {
  if (m.rows() != d || m.cols() != d) {
    throw config_error(std::string(name) + " must be " + std::to_string(d) +
                       "x" + std::to_string(d));
  }
}

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, const char* name) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw config_error(std::string(name) +
                       " must be symmetric positive definite");
  }
  return llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
}

}  // namespace

std::string VarianceReport::to_json() const {
  nlohmann::json j;
  j["components"] = components;
  j["total"] = total;
  return j.dump();
}

Eigen::MatrixXd exact_beta_variance(const Eigen::MatrixXd& sigma, int n_fit,
                                    int d, double sigma2) {
  if (d < 1) throw config_error("dimension must be positive");
  check_square(sigma, "the covariate covariance", d);
  if (!(sigma2 > 0.0)) throw config_error("the noise variance must be positive");
  if (n_fit <= d + 1) {
    throw config_error(
        "the coefficient covariance needs n_fit > d + 1; the inverse Wishart "
        "moment does not exist below that");
  }
  return spd_inverse(sigma, "the covariate covariance") *
         (sigma2 / static_cast<double>(n_fit - d - 1));
}

VarianceReport gcomp_variance(const Eigen::VectorXd& beta1,
                              const Eigen::VectorXd& beta0,
                              const Eigen::MatrixXd& sigma,
                              const Eigen::MatrixXd& var_beta_diff,
                              const Eigen::VectorXd& mean_x, int n2) {
  const int d = static_cast<int>(beta1.size());
  if (beta0.size() != d || mean_x.size() != d) {
    throw config_error("coefficient and mean vectors must share a dimension");
  }
  check_square(sigma, "the covariate covariance", d);
  check_square(var_beta_diff, "the coefficient-difference covariance", d);
  if (n2 < 1) throw config_error("the estimation-set size must be positive");

  const Eigen::VectorXd diff = beta1 - beta0;
  VarianceReport report;
  report.components["signal"] = diff.dot(sigma * diff) / n2;
  report.components["overfit"] = (var_beta_diff * sigma).trace() / n2;
  report.components["mean_shift"] = mean_x.dot(var_beta_diff * mean_x);
  for (const auto& kv : report.components) report.total += kv.second;
  return report;
}

double gcomp_asymptotic_variance(double kappa, double sigma2,
                                 double beta_diff_norm2, double p, double p11,
                                 double p10, double mean_x_norm2) {
  if (!(kappa > 0.0 && kappa < 1.0)) {
    throw config_error("kappa must lie in (0, 1)");
  }
  if (!(sigma2 > 0.0)) throw config_error("the noise variance must be positive");
  if (beta_diff_norm2 < 0.0 || mean_x_norm2 < 0.0) {
    throw config_error("squared norms must be nonnegative");
  }
  for (double q : {p, p11, p10}) {
    if (!(q > 0.0 && q < 1.0)) {
      throw config_error("sample fractions must lie in (0, 1)");
    }
  }
  return beta_diff_norm2 / p +
         sigma2 / (1.0 - kappa) * mean_x_norm2 * (1.0 / p11 + 1.0 / p10) +
         sigma2 * kappa / (p * (1.0 - kappa));
}

double aipw_remainder_variance(const Eigen::MatrixXd& var_beta1,
                               const Eigen::MatrixXd& var_beta0,
                               const Eigen::MatrixXd& sigma_z1,
                               const Eigen::MatrixXd& sigma_z0) {
  const int d = static_cast<int>(var_beta1.rows());
  check_square(var_beta1, "the arm-1 coefficient covariance", d);
  check_square(var_beta0, "the arm-0 coefficient covariance", d);
  check_square(sigma_z1, "the arm-1 moment matrix", d);
  check_square(sigma_z0, "the arm-0 moment matrix", d);
  return (var_beta1 * sigma_z1).trace() + (var_beta0 * sigma_z0).trace();
}

SigmaZEstimate estimate_sigma_z(const Eigen::VectorXd& eta, int arm, int n_mc,
                                std::uint64_t seed) {
  if (arm != 0 && arm != 1) throw config_error("arm must be 0 or 1");
  if (n_mc < 10000) {
    throw config_error("the moment estimate needs at least 10^4 draws");
  }
  const int d = static_cast<int>(eta.size());
  if (d < 1) throw config_error("eta must be nonempty");

  // (1 - pi)/pi = exp(-eta'x) for the treated arm, pi/(1 - pi) = exp(eta'x)
  // for the control arm.
  const double sign = arm == 1 ? -1.0 : 1.0;
  constexpr int kChunk = 8192;

  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd sumsq = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd x(d), x2(d);
  int done = 0;
  for (std::uint64_t chunk = 0; done < n_mc; ++chunk) {
    Rng rng = Rng::substream(seed, chunk);
    const int take = std::min(kChunk, n_mc - done);
    for (int i = 0; i < take; ++i) {
      for (int j = 0; j < d; ++j) x[j] = rng.normal();
      const double weight = std::exp(sign * eta.dot(x));
      x2 = x.cwiseProduct(x);
      sum.selfadjointView<Eigen::Lower>().rankUpdate(x, weight);
      sumsq.selfadjointView<Eigen::Lower>().rankUpdate(x2, weight * weight);
    }
    done += take;
  }
  sum.triangularView<Eigen::StrictlyUpper>() =
      sum.triangularView<Eigen::StrictlyLower>().transpose();
  sumsq.triangularView<Eigen::StrictlyUpper>() =
      sumsq.triangularView<Eigen::StrictlyLower>().transpose();

  SigmaZEstimate out;
  out.value = sum / n_mc;
  const Eigen::MatrixXd var =
      (sumsq / n_mc - out.value.cwiseProduct(out.value)) / (n_mc - 1);
  out.std_err = var.cwiseMax(0.0).cwiseSqrt();
  return out;
}

EfficiencyBound efficiency_bound(const Eigen::VectorXd& beta1,
                                 const Eigen::VectorXd& beta0,
                                 const Eigen::MatrixXd& sigma,
                                 const Eigen::VectorXd& eta, double sigma2,
                                 int n_mc, std::uint64_t seed) {
  const int d = static_cast<int>(beta1.size());
  if (beta0.size() != d || eta.size() != d) {
    throw config_error("coefficient vectors must share a dimension");
  }
  check_square(sigma, "the covariate covariance", d);
  if (!(sigma2 > 0.0)) throw config_error("the noise variance must be positive");
  if (n_mc < 10000) {
    throw config_error("the bound estimate needs at least 10^4 draws");
  }

  EfficiencyBound out;
  const Eigen::VectorXd diff = beta1 - beta0;
  out.signal = diff.dot(sigma * diff);

  const double eta_var = eta.dot(sigma * eta);
  if (eta_var < 0.0) {
    throw config_error("the covariate covariance must be positive semidefinite");
  }
  const double eta_sd = std::sqrt(eta_var);
  Rng rng(seed);
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < n_mc; ++i) {
    const double z = eta_sd * rng.normal();
    const double v = 2.0 + std::exp(z) + std::exp(-z);
    acc += v;
    acc2 += v * v;
  }
  const double mean = acc / n_mc;
  const double var = (acc2 / n_mc - mean * mean) / (n_mc - 1);
  out.noise = sigma2 * mean;
  out.mc_se = sigma2 * std::sqrt(std::max(0.0, var));
  out.total = out.signal + out.noise;
  return out;
}

WishartComparison wishart_symmetry_check(int n, int d,
                                         const Eigen::VectorXd& eta, int n_mc,
                                         std::uint64_t seed) {
  if (n > 30 || d > 5) {
    throw config_error(
        "the symmetry check is capped at n <= 30, d <= 5; the 2^-n weighting "
        "is unstable beyond that");
  }
  if (d < 1 || n < d + 2) {
    throw config_error("the inverse moment needs n >= d + 2");
  }
  if (eta.size() != d) throw config_error("eta must have length d");
  if (n_mc < 2) throw config_error("the check needs at least two draws");

  const double half_weight = std::pow(0.5, n);
  Eigen::MatrixXd lhs_sum = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd lhs_sq = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd rhs_sum = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd rhs_sq = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd diff_sum = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd diff_sq = Eigen::MatrixXd::Zero(d, d);

  Rng rng(seed);
  Eigen::MatrixXd x(n, d);
  for (int it = 0; it < n_mc; ++it) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) x(i, j) = rng.normal();
    }
    double prob = 1.0;
    for (int i = 0; i < n; ++i) prob *= sigmoid(eta.dot(x.row(i)));
    const Eigen::MatrixXd gram = x.transpose() * x;
    const Eigen::MatrixXd inv =
        gram.llt().solve(Eigen::MatrixXd::Identity(d, d));
    const Eigen::MatrixXd lhs_draw = prob * inv;
    const Eigen::MatrixXd rhs_draw = half_weight * inv;
    const Eigen::MatrixXd diff_draw = lhs_draw - rhs_draw;
    lhs_sum += lhs_draw;
    lhs_sq += lhs_draw.cwiseProduct(lhs_draw);
    rhs_sum += rhs_draw;
    rhs_sq += rhs_draw.cwiseProduct(rhs_draw);
    diff_sum += diff_draw;
    diff_sq += diff_draw.cwiseProduct(diff_draw);
  }

  const auto finalize = [n_mc](const Eigen::MatrixXd& sum,
                               const Eigen::MatrixXd& sq,
                               Eigen::MatrixXd& mean, Eigen::MatrixXd& se) {
    mean = sum / n_mc;
    const Eigen::MatrixXd var =
        (sq / n_mc - mean.cwiseProduct(mean)) / (n_mc - 1);
    se = var.cwiseMax(0.0).cwiseSqrt();
  };

  WishartComparison out;
  Eigen::MatrixXd diff_mean, diff_se;
  finalize(lhs_sum, lhs_sq, out.lhs, out.lhs_se);
  finalize(rhs_sum, rhs_sq, out.rhs, out.rhs_se);
  finalize(diff_sum, diff_sq, diff_mean, diff_se);
  out.difference = diff_mean;
  out.combined_se = diff_se;
  out.max_abs_z = 0.0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      const double se = out.combined_se(i, j);
      const double z = se > 0.0 ? std::abs(out.difference(i, j)) / se
                                : std::abs(out.difference(i, j)) > 0.0
                                      ? std::numeric_limits<double>::infinity()
                                      : 0.0;
      out.max_abs_z = std::max(out.max_abs_z, z);
    }
  }
  return out;
}

Eigen::MatrixXd sample_treated_covariates(int n, const Eigen::VectorXd& eta,
                                          Rng& rng) {
  const int d = static_cast<int>(eta.size());
  if (n < 1 || d < 1) throw config_error("need at least one row and column");
  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd row(d);
  for (int i = 0; i < n; ++i) {
    for (;;) {
      for (int j = 0; j < d; ++j) row[j] = rng.normal();
      if (rng.uniform() < sigmoid(eta.dot(row))) break;
    }
    x.row(i) = row;
  }
  return x;
}

std::vector<PredictionVarianceRow> prediction_variance_floor(
    double kappa, const std::vector<int>& n_grid, int reps, std::uint64_t seed,
    double sigma2, double gamma2) {
  if (!(kappa > 0.0 && kappa < 1.0)) {
    throw config_error("kappa must lie in (0, 1)");
  }
  if (reps < 2) throw config_error("the floor check needs at least two fits");
  if (!(sigma2 > 0.0) || !(gamma2 > 0.0)) {
    throw config_error("variances must be positive");
  }
  for (int n : n_grid) {
    if (kappa * n < 8.0) {
      throw config_error("every grid point must satisfy kappa * n >= 8");
    }
  }

  const double noise_sd = std::sqrt(sigma2);
  std::vector<PredictionVarianceRow> table;
  for (std::size_t g = 0; g < n_grid.size(); ++g) {
    const int n = n_grid[g];
    const int d = static_cast<int>(std::lround(kappa * n));
    if (n <= d + 1) {
      throw config_error("kappa too close to 1 for the grid point");
    }
    const Eigen::VectorXd eta =
        Eigen::VectorXd::Constant(d, std::sqrt(gamma2 / d));

    double acc = 0.0, acc2 = 0.0;
    for (int rep = 0; rep < reps; ++rep) {
      Rng rng = Rng::substream(
          seed, (static_cast<std::uint64_t>(g) << 32) +
                    static_cast<std::uint64_t>(rep));
      const Eigen::MatrixXd x = sample_treated_covariates(n, eta, rng);
      Eigen::VectorXd y(n);
      for (int i = 0; i < n; ++i) y[i] = noise_sd * rng.normal();
      Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
      gram.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
      const Eigen::VectorXd beta =
          Eigen::LLT<Eigen::MatrixXd, Eigen::Lower>(gram).solve(
              x.transpose() * y);
      const double value = beta.sum();
      acc += value;
      acc2 += value * value;
    }
    const double mean = acc / reps;
    const double variance = (acc2 / reps - mean * mean) * reps / (reps - 1.0);
    PredictionVarianceRow row;
    row.n = n;
    row.d = d;
    row.variance = variance;
    row.std_err = variance * std::sqrt(2.0 / (reps - 1.0));
    table.push_back(row);
  }
  return table;
}

}  // namespace atebench
