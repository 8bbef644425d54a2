#include "atebench/sloe.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "atebench/errors.hpp"
#include "atebench/link.hpp"
#include "atebench/quadrature.hpp"

namespace atebench {

namespace {

// Root of t + lambda * sigmoid(t) = z.  The left side is strictly increasing
// and the root lies in [z - lambda, z]; Newton from t = z - lambda*sigmoid(z)
// with the bracket as a bisection safeguard.
double prox_logistic(double z, double lambda) {
  double lo = z - lambda;
  double hi = z;
  double t = z - lambda * sigmoid(z);
  for (int iter = 0; iter < 200; ++iter) {
    const double s = sigmoid(t);
    const double g = t + lambda * s - z;
    if (std::abs(g) <= 1e-13 * (1.0 + std::abs(z) + lambda)) return t;
    if (g > 0.0) hi = t; else lo = t;
    double next = t - g / (1.0 + lambda * s * (1.0 - s));
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == t) return t;
    t = next;
  }
  return t;
}

struct SystemResiduals {
  double f1 = 0.0;
  double f2 = 0.0;
  double f3 = 0.0;
  double max_norm() const {
    return std::max({std::abs(f1), std::abs(f2), std::abs(f3)});
  }
};

// The three residuals at (alpha, sigma, lambda), each an expectation over
// the Gaussian pair Q1 = gamma*U, Q2 = -alpha*gamma*U + sigma*sqrt(kappa)*V
// with U, V independent standard normals, taken by tensorized Gauss-Hermite.
// P = prox of Q2 at the current lambda; rho' is the sigmoid.
//
//   f1:  E[ 2 rho'(Q1) (lambda rho'(P))^2 ] / kappa^2 - sigma^2
//   f2:  E[ rho'(Q1) Q1 lambda rho'(P) ] / gamma^2
//   f3:  E[ 2 rho'(Q1) / (1 + lambda rho''(P)) ] - (1 - kappa)
//
// f2 vanishes like gamma^2 as the signal fades, so it is reported on the
// gamma^2 scale to keep the Jacobian well conditioned along the whole
// root-finding path.
SystemResiduals system_residuals(double kappa, double gamma2, double alpha,
                                 double sigma, double lambda,
                                 const GaussHermite& gh) {
  const double gamma = std::sqrt(gamma2);
  const double sqrt2 = std::sqrt(2.0);
  const double sk = sigma * std::sqrt(kappa);
  const int m = static_cast<int>(gh.nodes.size());

  double e1 = 0.0, e2 = 0.0, e3 = 0.0;
  for (int i = 0; i < m; ++i) {
    const double u = sqrt2 * gh.nodes[i];
    const double q1 = gamma * u;
    const double tilt = sigmoid(q1);
    const double base2 = -alpha * gamma * u;
    double a1 = 0.0, a2 = 0.0, a3 = 0.0;
    for (int j = 0; j < m; ++j) {
      const double w = gh.weights[j];
      const double q2 = base2 + sk * sqrt2 * gh.nodes[j];
      const double p = prox_logistic(q2, lambda);
      const double sp = sigmoid(p);
      const double lrp = lambda * sp;
      a1 += w * lrp * lrp;
      a2 += w * lrp;
      a3 += w / (1.0 + lambda * sp * (1.0 - sp));
    }
    const double wi = gh.weights[i];
    e1 += wi * 2.0 * tilt * a1;
    e2 += wi * tilt * q1 * a2;
    e3 += wi * 2.0 * tilt * a3;
  }
  const double inv_pi = GaussHermite::inv_sqrt_pi * GaussHermite::inv_sqrt_pi;
  e1 *= inv_pi;
  e2 *= inv_pi;
  e3 *= inv_pi;

  SystemResiduals r;
  r.f1 = e1 / (kappa * kappa) - sigma * sigma;
  r.f2 = e2 / gamma2;
  r.f3 = e3 - (1.0 - kappa);
  return r;
}

// Damped Newton on (alpha, sigma, lambda) in place.  Returns the final
// residual max-norm; the caller decides what is acceptable.
double newton_solve(double kappa, double gamma2, Eigen::Vector3d& s,
                    const GaussHermite& gh, const SystemOptions& opts) {
  const auto resid = [&](const Eigen::Vector3d& p) {
    const SystemResiduals r =
        system_residuals(kappa, gamma2, p[0], p[1], p[2], gh);
    return Eigen::Vector3d(r.f1, r.f2, r.f3);
  };

  Eigen::Vector3d r = resid(s);
  double rn = r.lpNorm<Eigen::Infinity>();
  for (int iter = 0; iter < opts.max_iter && rn > opts.tol; ++iter) {
    Eigen::Matrix3d jac;
    for (int j = 0; j < 3; ++j) {
      const double h = 1e-7 * std::max(std::abs(s[j]), 1e-3);
      Eigen::Vector3d sp = s;
      sp[j] += h;
      jac.col(j) = (resid(sp) - r) / h;
    }
    const Eigen::Vector3d step = jac.partialPivLu().solve(-r);
    if (!step.allFinite()) break;

    // All three unknowns are positive; cap the step so none loses more than
    // 90% of its value in one move.
    double t = 1.0;
    for (int j = 0; j < 3; ++j) {
      if (step[j] < 0.0) t = std::min(t, -0.9 * s[j] / step[j]);
    }
    bool accepted = false;
    for (int half = 0; half < 40; ++half) {
      const Eigen::Vector3d cand = s + t * step;
      const Eigen::Vector3d rc = resid(cand);
      const double rcn = rc.lpNorm<Eigen::Infinity>();
      if (rcn < rn * (1.0 - 1e-4 * t) || rcn <= opts.tol) {
        s = cand;
        r = rc;
        rn = rcn;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
  }
  return rn;
}

Eigen::Vector3d default_start(double kappa, double gamma2) {
  return {1.0 + 2.0 * kappa, std::sqrt(kappa * (1.0 + gamma2)), 1.0};
}

void check_system_inputs(double kappa, double gamma2,
                         const SystemOptions& opts) {
  if (!(kappa > 0.0 && kappa < 1.0)) {
    throw config_error("aspect ratio must lie strictly between 0 and 1");
  }
  if (!(gamma2 > 0.0) || !std::isfinite(gamma2)) {
    throw config_error("signal strength must be positive and finite");
  }
  if (opts.nodes < 48) {
    throw config_error("the system quadrature needs at least 48 nodes per axis");
  }
}

// Warm-startable solve: tries Newton from the supplied state, then from the
// default start, then continuation in kappa from an easy aspect ratio.
// Throws past the existence frontier.
SloeParameters solve_from(double kappa, double gamma2, Eigen::Vector3d warm,
                          const GaussHermite& gh, const SystemOptions& opts) {
  Eigen::Vector3d s = warm;
  if (newton_solve(kappa, gamma2, s, gh, opts) <= opts.residual_tol) {
    return {s[0], s[1], s[2]};
  }
  s = default_start(kappa, gamma2);
  if (newton_solve(kappa, gamma2, s, gh, opts) <= opts.residual_tol) {
    return {s[0], s[1], s[2]};
  }
  // Continuation anchored at an easy interior aspect ratio, stepping
  // geometrically toward the target so that very small kappas are approached
  // through a cascade of comparable relative moves rather than one cliff.
  const double k0 = 0.05;
  s = default_start(k0, gamma2);
  const int stages = 12;
  for (int i = 0; i <= stages; ++i) {
    const double k = k0 * std::pow(kappa / k0, static_cast<double>(i) / stages);
    if (newton_solve(k, gamma2, s, gh, opts) > opts.residual_tol) {
      throw numerical_error(
          "the coefficient-inflation system did not converge at aspect ratio " +
          std::to_string(kappa) + " and signal strength " +
          std::to_string(gamma2) +
          "; this point may lie beyond the existence frontier");
    }
  }
  return {s[0], s[1], s[2]};
}

double nu2_of(const SloeParameters& p, double kappa, double gamma2) {
  return p.alpha * p.alpha * gamma2 + kappa * p.sigma_star * p.sigma_star;
}

const SloeCorrection* sloe_of(const GlmFit& fit) {
  return std::get_if<SloeCorrection>(&fit.correction);
}

}  // namespace

SloeParameters solve_sur_candes_system(double kappa, double gamma2,
                                       const SystemOptions& options) {
  check_system_inputs(kappa, gamma2, options);
  const GaussHermite& gh = GaussHermite::cached(options.nodes);
  return solve_from(kappa, gamma2, default_start(kappa, gamma2), gh, options);
}

double corrupted_signal_strength(double kappa, double gamma2,
                                 const SystemOptions& options) {
  return nu2_of(solve_sur_candes_system(kappa, gamma2, options), kappa, gamma2);
}

GlmFit sloe_correct(const GlmFit& fit, const Eigen::MatrixXd& x,
                    const Eigen::VectorXd& y, const SloeOptions& options) {
  return sloe_correct(fit, loo_linear_predictors(fit, x, y), options);
}

GlmFit sloe_correct(const GlmFit& fit, const LooPredictors& loo,
                    const SloeOptions& options) {
  if (fit.family != GlmFamily::binomial) {
    throw config_error("the inflation correction applies to binomial fits");
  }
  const int n = static_cast<int>(loo.s_loo.size());
  const int d = static_cast<int>(fit.coefficients.size());
  if (n <= 0) throw config_error("no leave-one-out predictors supplied");
  const double kappa = static_cast<double>(d) / n;
  check_system_inputs(kappa, 1.0, options.system);

  const double mean = loo.s_loo.mean();
  const double nu2_hat = (loo.s_loo.array() - mean).square().sum() / n;

  const GaussHermite& gh = GaussHermite::cached(options.system.nodes);
  const double g_lo = 1e-6;

  SloeCorrection corr;
  corr.nu2 = nu2_hat;
  corr.rescale_intercept = options.rescale_intercept;

  // nu^2(gamma^2) is increasing, so gamma^2 solves nu^2(gamma^2) = nu2_hat by
  // a safeguarded secant on [g_lo, nu2_hat].  Degenerate inputs pin the
  // null-signal edge.
  Eigen::Vector3d warm = default_start(kappa, g_lo);
  SloeParameters at_lo = solve_from(kappa, g_lo, warm, gh, options.system);
  warm = {at_lo.alpha, at_lo.sigma_star, at_lo.lambda};
  if (nu2_hat <= g_lo || nu2_of(at_lo, kappa, g_lo) >= nu2_hat) {
    corr.gamma2 = g_lo;
    corr.alpha = at_lo.alpha;
    corr.sigma_star = at_lo.sigma_star;
    corr.lambda = at_lo.lambda;
  } else {
    double a = g_lo;
    double fa = nu2_of(at_lo, kappa, a) - nu2_hat;
    // Bracket from below by geometric growth.  nu^2(g) >= g and nu^2 blows
    // up toward the existence frontier, so the sign change always arrives at
    // a solvable gamma2 even when nu2_hat itself lies past the frontier.
    double b = std::min(1.0, nu2_hat);
    SloeParameters at_b = solve_from(kappa, b, warm, gh, options.system);
    warm = {at_b.alpha, at_b.sigma_star, at_b.lambda};
    double fb = nu2_of(at_b, kappa, b) - nu2_hat;
    for (int grow = 0; fb < 0.0 && b < nu2_hat && grow < 80; ++grow) {
      a = b;
      fa = fb;
      b = std::min(1.25 * b, nu2_hat);
      at_b = solve_from(kappa, b, warm, gh, options.system);
      warm = {at_b.alpha, at_b.sigma_star, at_b.lambda};
      fb = nu2_of(at_b, kappa, b) - nu2_hat;
    }
    SloeParameters best = at_b;
    double best_g = b;
    if (fb < 0.0) {
      // alpha >= 1 should make nu^2(g) >= g; if rounding says otherwise take
      // the endpoint.
      fb = 0.0;
    }
    // False position with the Illinois weight halving, so a stuck endpoint
    // cannot stall the bracket.
    int stuck_side = 0;
    for (int iter = 0; iter < 80 && b - a > 1e-9 * std::max(1.0, b); ++iter) {
      double g = (fb > fa) ? (a * fb - b * fa) / (fb - fa) : 0.5 * (a + b);
      const double margin = 1e-3 * (b - a);
      if (!(g > a + margin && g < b - margin)) g = 0.5 * (a + b);
      const SloeParameters at_g = solve_from(kappa, g, warm, gh, options.system);
      warm = {at_g.alpha, at_g.sigma_star, at_g.lambda};
      const double fg = nu2_of(at_g, kappa, g) - nu2_hat;
      best = at_g;
      best_g = g;
      if (std::abs(fg) <= 1e-9 * std::max(1.0, nu2_hat)) break;
      if (fg < 0.0) {
        a = g;
        fa = fg;
        if (stuck_side == -1) fb *= 0.5;
        stuck_side = -1;
      } else {
        b = g;
        fb = fg;
        if (stuck_side == 1) fa *= 0.5;
        stuck_side = 1;
      }
    }
    corr.gamma2 = best_g;
    corr.alpha = best.alpha;
    corr.sigma_star = best.sigma_star;
    corr.lambda = best.lambda;
  }

  GlmFit out = fit;
  out.correction = corr;
  return out;
}

Eigen::VectorXd sigma_x2_estimate(const GlmFit& fit, const Eigen::MatrixXd& x) {
  const SloeCorrection* corr = sloe_of(fit);
  if (corr == nullptr) {
    throw config_error("fit carries no inflation correction");
  }
  if (fit.n_fit <= 0) throw config_error("fit records no training size");
  const double scale = (corr->sigma_star * corr->sigma_star) /
                       (corr->alpha * corr->alpha) / fit.n_fit;
  return scale * x.rowwise().squaredNorm();
}

namespace {

Eigen::VectorXd corrected_inverse(const GlmFit& fit, const Eigen::MatrixXd& x,
                                  double sign) {
  if (sloe_of(fit) == nullptr) {
    throw config_error("fit carries no inflation correction");
  }
  const Eigen::VectorXd lp = linear_predictors(fit, x);
  const Eigen::VectorXd s2 = sigma_x2_estimate(fit, x);
  Eigen::VectorXd out(lp.size());
  for (Eigen::Index i = 0; i < lp.size(); ++i) {
    out[i] = 1.0 + std::exp(sign * lp[i] - 0.5 * s2[i]);
  }
  return out;
}

}  // namespace

Eigen::VectorXd inverse_propensity_corrected(const GlmFit& fit,
                                             const Eigen::MatrixXd& x) {
  return corrected_inverse(fit, x, -1.0);
}

Eigen::VectorXd inverse_propensity_corrected_control(const GlmFit& fit,
                                                     const Eigen::MatrixXd& x) {
  return corrected_inverse(fit, x, 1.0);
}

}  // namespace atebench
