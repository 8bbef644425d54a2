#pragma once

#include <Eigen/Dense>

#include "atebench/glm.hpp"

namespace atebench {

// Approximate leave-one-out linear predictors of a converged binomial fit on
// its own training data: one Newton step from the full-data optimum with the
// row's contribution removed, collapsed through Sherman-Morrison to
//
//   s_loo[i] = s[i] - q_i (y_i - p_i) / (1 - h_i),
//
// where q_i = x_i' H^{-1} x_i, H is the weighted information at the optimum
// and h_i = w_i q_i its leverage.  Raises a numerical error when any
// downdated leverage reaches 1.  Uses the fit's raw (uncorrected)
// coefficients.
struct LooPredictors {
  Eigen::VectorXd s_full;
  Eigen::VectorXd s_loo;
  Eigen::VectorXd leverage;
};
LooPredictors loo_linear_predictors(const GlmFit& fit, const Eigen::MatrixXd& x,
                                    const Eigen::VectorXd& y);

// Maximum-likelihood scaling of a fixed score vector: the t maximizing the
// binomial log likelihood of sigmoid(t * s).  Safeguarded 1-D Newton,
// tolerance 1e-10.
double platt_scale(const Eigen::VectorXd& s, const Eigen::VectorXd& y);

// Rescale a binomial fit's whole linear predictor by the scalar fit on a
// held-out validation sample.  Adds no new intercept.
GlmFit platt_rescale(const GlmFit& fit, const Eigen::MatrixXd& x_val,
                     const Eigen::VectorXd& y_val);

// Same, but the scalar is fit on the training data through the approximate
// leave-one-out predictors, so no data needs to be held out.
GlmFit platt_rescale_loo(const GlmFit& fit, const Eigen::MatrixXd& x_train,
                         const Eigen::VectorXd& y_train);

// Internal variant reusing precomputed leave-one-out predictors.
GlmFit platt_rescale_loo(const GlmFit& fit, const LooPredictors& loo,
                         const Eigen::VectorXd& y_train);

}  // namespace atebench
