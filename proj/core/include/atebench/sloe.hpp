#pragma once

#include <Eigen/Dense>

#include "atebench/calibrate.hpp"
#include "atebench/glm.hpp"

namespace atebench {

// Solution of the three-equation fixed point characterizing unpenalized
// logistic regression when the dimension d grows in proportion to the sample
// size n.  alpha is the coefficient inflation, sigma_star the root-n
// per-coordinate noise scale, and lambda the scalar stepping the proximal
// operator inside the system.
struct SloeParameters {
  double alpha = 1.0;
  double sigma_star = 0.0;
  double lambda = 0.0;
};

struct SystemOptions {
  // Gauss-Hermite nodes per axis of the tensorized bivariate quadrature.
  int nodes = 64;
  // Target residual max-norm for the damped Newton iteration.
  double tol = 1e-10;
  int max_iter = 100;
  // A solve whose final residual max-norm exceeds this raises a numerical
  // error: past the existence frontier the system has no solution.
  double residual_tol = 1e-6;
};

// Solves the Sur-Candes system at aspect ratio kappa = d/n in (0, 1) and
// signal strength gamma2 = Var(eta'X) > 0.  Damped Newton with a
// forward-difference Jacobian; if the direct solve stalls, retries by
// continuation in kappa from an easier aspect ratio.
SloeParameters solve_sur_candes_system(double kappa, double gamma2,
                                       const SystemOptions& options = {});

// The second moment nu^2 = alpha^2 gamma2 + kappa sigma_star^2 the system
// predicts for the leave-one-out linear predictors.  Strictly increasing in
// gamma2, which is what makes gamma2 recoverable from data.
double corrupted_signal_strength(double kappa, double gamma2,
                                 const SystemOptions& options = {});

struct SloeOptions {
  bool rescale_intercept = true;
  SystemOptions system;
};

// SLOE correction of a converged binomial fit on its own training data.
// Estimates the corrupted signal strength as the centered second moment of
// the approximate leave-one-out predictors, inverts the system for gamma2,
// and attaches the solved constants to the fit so that effective
// coefficients are the raw ones divided by alpha.
GlmFit sloe_correct(const GlmFit& fit, const Eigen::MatrixXd& x,
                    const Eigen::VectorXd& y, const SloeOptions& options = {});

// Internal variant reusing precomputed leave-one-out predictors.
GlmFit sloe_correct(const GlmFit& fit, const LooPredictors& loo,
                    const SloeOptions& options = {});

// Estimation-noise variance of the corrected linear predictor at each query
// point, (sigma_star^2 / alpha^2) * |x|^2 / n_fit, for isotropic covariates.
// The fit must carry a SLOE correction.
Eigen::VectorXd sigma_x2_estimate(const GlmFit& fit, const Eigen::MatrixXd& x);

// Inverse propensity weights debiased for plug-in noise.  The debiased
// linear predictor L carries additive estimation noise with per-point
// variance s2, so 1/sigmoid(L) overshoots the true inverse propensity by a
// lognormal Jensen gap.  The returned weights
//
//   treated:  1 + exp(-L - s2/2)
//   control:  1 + exp(+L - s2/2)
//
// cancel it exactly: averaged over N(0, s2) noise in L they equal the true
// 1/sigmoid and 1/(1 - sigmoid).  The fit must carry a SLOE correction.
Eigen::VectorXd inverse_propensity_corrected(const GlmFit& fit,
                                             const Eigen::MatrixXd& x);
Eigen::VectorXd inverse_propensity_corrected_control(const GlmFit& fit,
                                                     const Eigen::MatrixXd& x);

}  // namespace atebench
