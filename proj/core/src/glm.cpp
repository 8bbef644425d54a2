#include "atebench/glm.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"

#include "atebench/errors.hpp"
#include "atebench/link.hpp"

namespace atebench {

Eigen::VectorXd GlmFit::effective_coefficients() const {
  if (const auto* platt = std::get_if<PlattCorrection>(&correction)) {
    return coefficients * platt->t;
  }
  if (const auto* sloe = std::get_if<SloeCorrection>(&correction)) {
    return coefficients / sloe->alpha;
  }
  return coefficients;
}

double GlmFit::effective_intercept() const {
  if (const auto* platt = std::get_if<PlattCorrection>(&correction)) {
    return intercept * platt->t;
  }
  if (const auto* sloe = std::get_if<SloeCorrection>(&correction)) {
    return sloe->rescale_intercept ? intercept / sloe->alpha : intercept;
  }
  return intercept;
}

std::string GlmFit::to_json() const {
  nlohmann::json j;
  j["family"] = family == GlmFamily::gaussian ? "gaussian" : "binomial";
  j["coefficients"] = std::vector<double>(coefficients.data(),
                                          coefficients.data() + coefficients.size());
  j["intercept"] = intercept;
  j["has_intercept"] = has_intercept;
  j["n_fit"] = n_fit;
  if (const auto* platt = std::get_if<PlattCorrection>(&correction)) {
    j["correction"] = {{"type", "platt"}, {"t", platt->t}};
  } else if (const auto* sloe = std::get_if<SloeCorrection>(&correction)) {
    j["correction"] = {{"type", "sloe"},
                       {"alpha", sloe->alpha},
                       {"sigma_star", sloe->sigma_star},
                       {"lambda", sloe->lambda},
                       {"nu2", sloe->nu2},
                       {"gamma2", sloe->gamma2},
                       {"rescale_intercept", sloe->rescale_intercept}};
  } else {
    j["correction"] = {{"type", "none"}};
  }
  return j.dump();
}

namespace {

Eigen::MatrixXd with_intercept_column(const Eigen::MatrixXd& x, bool intercept) {
  if (!intercept) return x;
  Eigen::MatrixXd design(x.rows(), x.cols() + 1);
  design.leftCols(x.cols()) = x;
  design.col(x.cols()).setOnes();
  return design;
}

[[noreturn]] void throw_rank_deficient(int column, int d) {
  std::ostringstream msg;
  msg << "design matrix is rank deficient: ";
  if (column == d) {
    msg << "the intercept column is linearly dependent";
  } else {
    msg << "column " << column + 1 << " is linearly dependent";
  }
  throw numerical_error(msg.str());
}

}  // namespace

GlmFit fit_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
               const OlsOptions& options) {
  if (x.rows() != y.size()) {
    throw config_error("x and y have mismatched row counts");
  }
  const int d = static_cast<int>(x.cols());
  const int p = d + (options.intercept ? 1 : 0);
  if (x.rows() < p) {
    throw numerical_error("least squares needs at least as many rows as parameters");
  }

  const Eigen::MatrixXd design = with_intercept_column(x, options.intercept);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < p) {
    // Columns pivoted past the numerical rank are the dependent ones; report
    // the first, mapped back to its position in the design.
    const auto perm = qr.colsPermutation().indices();
    throw_rank_deficient(perm[qr.rank()], d);
  }
  const Eigen::VectorXd solution = qr.solve(y);

  GlmFit fit;
  fit.family = GlmFamily::gaussian;
  fit.coefficients = solution.head(d);
  fit.intercept = options.intercept ? solution[d] : 0.0;
  fit.has_intercept = options.intercept;
  fit.n_fit = static_cast<int>(x.rows());
  return fit;
}

GlmFit fit_logistic_mle(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        const LogisticOptions& options) {
  if (x.rows() != y.size()) {
    throw config_error("x and y have mismatched row counts");
  }
  const int n = static_cast<int>(x.rows());
  for (int i = 0; i < n; ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) {
      throw config_error("logistic responses must be 0 or 1");
    }
  }
  const int d = static_cast<int>(x.cols());
  const int p = d + (options.intercept ? 1 : 0);
  if (n < p) {
    throw numerical_error("logistic fit needs at least as many rows as parameters");
  }

  const Eigen::MatrixXd design = with_intercept_column(x, options.intercept);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  if (options.intercept) {
    const double rate = std::min(std::max(y.mean(), 1e-12), 1.0 - 1e-12);
    beta[p - 1] = std::log(rate / (1.0 - rate));
  }

  const auto nll = [&](const Eigen::VectorXd& lp) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += y[i] == 1.0 ? -log_sigmoid(lp[i]) : -log_sigmoid(-lp[i]);
    }
    return acc;
  };

  Eigen::VectorXd lp = design * beta;
  double objective = nll(lp);
  Eigen::VectorXd prob(n), sqrt_weight(n);
  Eigen::MatrixXd weighted = design;
  Eigen::MatrixXd hessian(p, p);

  for (int iter = 0; iter < options.max_iter; ++iter) {
    for (int i = 0; i < n; ++i) {
      prob[i] = sigmoid(lp[i]);
      sqrt_weight[i] = std::sqrt(std::max(prob[i] * (1.0 - prob[i]), 0.0));
    }
    const Eigen::VectorXd score = design.transpose() * (y - prob);
    if (score.lpNorm<Eigen::Infinity>() <= options.grad_tol * n) {
      GlmFit fit;
      fit.family = GlmFamily::binomial;
      fit.coefficients = beta.head(d);
      fit.intercept = options.intercept ? beta[d] : 0.0;
      fit.has_intercept = options.intercept;
      fit.n_fit = n;
      return fit;
    }

    weighted = sqrt_weight.asDiagonal() * design;
    hessian.setZero();
    hessian.selfadjointView<Eigen::Lower>().rankUpdate(weighted.transpose());
    Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(hessian);
    if (llt.info() != Eigen::Success) {
      throw numerical_error("logistic Hessian is numerically singular");
    }
    const Eigen::VectorXd step = llt.solve(score);
    const double decrement_sq = score.dot(step);
    if (beta.norm() > options.separation_norm &&
        std::sqrt(std::max(decrement_sq, 0.0)) > options.separation_decrement) {
      throw numerical_error(
          "perfect separation: the logistic likelihood has no finite maximizer");
    }

    double scale = 1.0;
    for (int halving = 0; halving < 60; ++halving) {
      const Eigen::VectorXd candidate = beta + scale * step;
      const Eigen::VectorXd lp_candidate = design * candidate;
      const double value = nll(lp_candidate);
      if (value <= objective - 1e-4 * scale * decrement_sq) {
        beta = candidate;
        lp = lp_candidate;
        objective = value;
        break;
      }
      scale *= 0.5;
      if (halving == 59) {
        throw numerical_error("logistic line search failed to make progress");
      }
    }
  }

  if (beta.norm() > options.separation_norm) {
    throw numerical_error(
        "perfect separation: the logistic likelihood has no finite maximizer");
  }
  throw numerical_error("logistic fit did not converge within the step cap");
}

double linear_predictor(const GlmFit& fit, const Eigen::VectorXd& x) {
  return fit.effective_intercept() + fit.effective_coefficients().dot(x);
}

Eigen::VectorXd linear_predictors(const GlmFit& fit, const Eigen::MatrixXd& x) {
  return (x * fit.effective_coefficients()).array() + fit.effective_intercept();
}

double predict(const GlmFit& fit, const Eigen::VectorXd& x) {
  const double lp = linear_predictor(fit, x);
  return fit.family == GlmFamily::binomial ? sigmoid(lp) : lp;
}

Eigen::VectorXd predict(const GlmFit& fit, const Eigen::MatrixXd& x) {
  Eigen::VectorXd lp = linear_predictors(fit, x);
  if (fit.family == GlmFamily::binomial) {
    for (int i = 0; i < lp.size(); ++i) lp[i] = sigmoid(lp[i]);
  }
  return lp;
}

double predict_corrected(const GlmFit& fit, const Eigen::VectorXd& x,
                         double sigma_x2, int order_k) {
  const double lp = linear_predictor(fit, x);
  if (fit.family == GlmFamily::gaussian) return lp;
  return corrected_link(lp, sigma_x2, order_k);
}

}  // namespace atebench
