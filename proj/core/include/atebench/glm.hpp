#pragma once

#include <Eigen/Dense>
#include <string>
#include <variant>

namespace atebench {

enum class GlmFamily { gaussian, binomial };

// Post-hoc recalibration: a single scalar multiplying the whole linear
// predictor, coefficients and intercept alike.
struct PlattCorrection {
  double t = 1.0;
};

// Coefficient-inflation correction.  alpha divides the coefficients (and the
// intercept unless rescale_intercept is off); sigma_star is the root-n
// per-coordinate noise scale of the uncorrected fit; nu2 is the corrupted
// signal strength estimated from leave-one-out predictors and gamma2 the
// signal strength recovered from it.
struct SloeCorrection {
  double alpha = 1.0;
  double sigma_star = 0.0;
  double lambda = 0.0;
  double nu2 = 0.0;
  double gamma2 = 0.0;
  bool rescale_intercept = true;
};

struct GlmFit {
  GlmFamily family = GlmFamily::gaussian;
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
  bool has_intercept = true;
  int n_fit = 0;
  std::variant<std::monostate, PlattCorrection, SloeCorrection> correction;

  bool has_correction() const {
    return !std::holds_alternative<std::monostate>(correction);
  }
  Eigen::VectorXd effective_coefficients() const;
  double effective_intercept() const;

  std::string to_json() const;
};

struct OlsOptions {
  bool intercept = true;
};

// Least squares by column-pivoted QR.  A rank-deficient design raises a
// numerical error naming the first dependent column.
GlmFit fit_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
               const OlsOptions& options = {});

struct LogisticOptions {
  bool intercept = true;
  // Max-norm bound on the gradient of the mean log-likelihood, so the
  // criterion does not tighten with the sample size: the score vector may
  // reach grad_tol * n.
  double grad_tol = 1e-8;
  int max_iter = 100;
  // Nonexistence of the MLE is declared when the iterate norm exceeds
  // separation_norm while the Newton decrement still exceeds
  // separation_decrement.
  double separation_norm = 1e3;
  double separation_decrement = 1e-4;
};

// Unpenalized logistic MLE by damped Newton (IRLS).  y must be 0/1.
GlmFit fit_logistic_mle(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        const LogisticOptions& options = {});

// Linear predictor and mean response under the fit's effective (corrected)
// coefficients.
double linear_predictor(const GlmFit& fit, const Eigen::VectorXd& x);
Eigen::VectorXd linear_predictors(const GlmFit& fit, const Eigen::MatrixXd& x);
double predict(const GlmFit& fit, const Eigen::VectorXd& x);
Eigen::VectorXd predict(const GlmFit& fit, const Eigen::MatrixXd& x);

// Mean response through the series-corrected link (binomial fits only;
// gaussian fits are unaffected).  sigma_x2 is the estimation-noise variance
// of the debiased linear predictor at this point.
double predict_corrected(const GlmFit& fit, const Eigen::VectorXd& x,
                         double sigma_x2, int order_k);

}  // namespace atebench
