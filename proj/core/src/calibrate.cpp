#include "atebench/calibrate.hpp"

#include <cmath>

#include "atebench/errors.hpp"
#include "atebench/link.hpp"

namespace atebench {

LooPredictors loo_linear_predictors(const GlmFit& fit, const Eigen::MatrixXd& x,
                                    const Eigen::VectorXd& y) {
  if (fit.family != GlmFamily::binomial) {
    throw config_error("leave-one-out predictors are defined for binomial fits");
  }
  if (x.rows() != y.size()) {
    throw config_error("x and y have mismatched row counts");
  }
  const int n = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());
  if (static_cast<int>(fit.coefficients.size()) != d) {
    throw config_error("fit and data dimensions disagree");
  }
  const int p = d + (fit.has_intercept ? 1 : 0);

  Eigen::MatrixXd design(n, p);
  design.leftCols(d) = x;
  if (fit.has_intercept) design.col(d).setOnes();

  Eigen::VectorXd beta(p);
  beta.head(d) = fit.coefficients;
  if (fit.has_intercept) beta[d] = fit.intercept;

  LooPredictors out;
  out.s_full = design * beta;
  Eigen::VectorXd prob(n), weight(n);
  for (int i = 0; i < n; ++i) {
    prob[i] = sigmoid(out.s_full[i]);
    weight[i] = prob[i] * (1.0 - prob[i]);
  }

  Eigen::MatrixXd weighted = weight.cwiseSqrt().asDiagonal() * design;
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
  info.selfadjointView<Eigen::Lower>().rankUpdate(weighted.transpose());
  Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(info);
  if (llt.info() != Eigen::Success) {
    throw numerical_error("weighted information matrix is numerically singular");
  }
  // q_i = || L^{-1} x_i ||^2 column by column.
  const Eigen::MatrixXd half = llt.matrixL().solve(design.transpose());
  const Eigen::VectorXd q = half.colwise().squaredNorm();

  out.leverage = weight.cwiseProduct(q);
  out.s_loo.resize(n);
  for (int i = 0; i < n; ++i) {
    const double denom = 1.0 - out.leverage[i];
    if (denom <= 1e-10) {
      throw numerical_error("leave-one-out downdate has leverage at or above 1");
    }
    out.s_loo[i] = out.s_full[i] - q[i] * (y[i] - prob[i]) / denom;
  }
  return out;
}

double platt_scale(const Eigen::VectorXd& s, const Eigen::VectorXd& y) {
  if (s.size() != y.size() || s.size() == 0) {
    throw config_error("scores and outcomes have mismatched sizes");
  }
  const int n = static_cast<int>(s.size());
  bool any0 = false, any1 = false;
  for (int i = 0; i < n; ++i) {
    if (y[i] == 0.0) any0 = true;
    else if (y[i] == 1.0) any1 = true;
    else throw config_error("outcomes must be 0 or 1");
  }
  if (!any0 || !any1) {
    throw numerical_error("cannot rescale against constant outcomes");
  }

  // Log likelihood of sigmoid(t s) is concave in t, so its derivative g is
  // decreasing; bracket a sign change and run Newton with bisection fallback.
  const auto grad = [&](double t) {
    double g = 0.0;
    for (int i = 0; i < n; ++i) g += s[i] * (y[i] - sigmoid(t * s[i]));
    return g;
  };
  const auto curv = [&](double t) {
    double h = 0.0;
    for (int i = 0; i < n; ++i) {
      const double p = sigmoid(t * s[i]);
      h += s[i] * s[i] * p * (1.0 - p);
    }
    return h;
  };

  // The bracket expansion below assumes a nonnegative maximizer; scores that
  // anticorrelate with the outcomes reduce to the sign-flipped problem.
  if (grad(0.0) < 0.0) return -platt_scale(-s, y);

  double lo = 0.0, hi = 1.0;
  double g_hi = grad(hi);
  int expand = 0;
  while (g_hi > 0.0) {
    lo = hi;
    hi *= 2.0;
    g_hi = grad(hi);
    if (++expand > 70) {
      throw numerical_error("rescaling scalar diverged: scores may be separated");
    }
  }
  // g(0) = sum s (y - 1/2); if it is already negative the maximizer sits in
  // (0, 1) and the bracket [0, 1] is valid as initialized.
  if (grad(lo) < 0.0 && lo > 0.0) {
    throw numerical_error("rescaling objective is not unimodal on the bracket");
  }

  double t = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    const double g = grad(t);
    if (g > 0.0) lo = t; else hi = t;
    const double h = curv(t);
    double next = h > 0.0 ? t + g / h : 0.5 * (lo + hi);
    if (next <= lo || next >= hi) next = 0.5 * (lo + hi);
    const double move = std::abs(next - t);
    t = next;
    if (move <= 1e-10 * std::max(1.0, std::abs(t)) || hi - lo <= 1e-10) {
      return t;
    }
  }
  return t;
}

namespace {

GlmFit with_platt(const GlmFit& fit, double t) {
  GlmFit rescaled = fit;
  rescaled.correction = PlattCorrection{t};
  return rescaled;
}

}  // namespace

GlmFit platt_rescale(const GlmFit& fit, const Eigen::MatrixXd& x_val,
                     const Eigen::VectorXd& y_val) {
  if (fit.family != GlmFamily::binomial) {
    throw config_error("rescaling applies to binomial fits");
  }
  // Score the validation rows with the raw fit.
  Eigen::VectorXd s = (x_val * fit.coefficients).array() + fit.intercept;
  return with_platt(fit, platt_scale(s, y_val));
}

GlmFit platt_rescale_loo(const GlmFit& fit, const LooPredictors& loo,
                         const Eigen::VectorXd& y_train) {
  return with_platt(fit, platt_scale(loo.s_loo, y_train));
}

GlmFit platt_rescale_loo(const GlmFit& fit, const Eigen::MatrixXd& x_train,
                         const Eigen::VectorXd& y_train) {
  const LooPredictors loo = loo_linear_predictors(fit, x_train, y_train);
  return platt_rescale_loo(fit, loo, y_train);
}

}  // namespace atebench
