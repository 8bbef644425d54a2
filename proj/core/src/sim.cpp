#include "atebench/sim.hpp"

#include <cmath>

#include "atebench/errors.hpp"
#include "atebench/link.hpp"
#include "atebench/quadrature.hpp"
#include "atebench/rng.hpp"

namespace atebench {

Eigen::VectorXd make_coefficients(int d, double c) {
  if (d < 8 || d % 8 != 0) {
    throw config_error("coefficient pattern needs d to be a positive multiple of 8");
  }
  Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
  const int block = d / 8;
  v.head(block).setConstant(c);
  v.segment(block, block).setConstant(-c);
  return v;
}

Eigen::VectorXd scale_for_variance(const Eigen::VectorXd& direction, double target) {
  if (target < 0.0) throw config_error("target variance must be nonnegative");
  if (target == 0.0) return Eigen::VectorXd::Zero(direction.size());
  const double norm2 = direction.squaredNorm();
  if (norm2 <= 0.0) {
    throw config_error("cannot scale a zero direction to a positive variance");
  }
  return direction * std::sqrt(target / norm2);
}

TrueParams true_params(const SimulationConfig& config) {
  config.validate();
  const Eigen::VectorXd pattern = make_coefficients(config.d, 1.0);
  TrueParams params;
  params.family = config.family;
  params.tau = config.tau;
  params.sigma2 = config.sigma2;
  params.eta = scale_for_variance(pattern, config.gamma2);
  if (config.family == Family::linear) {
    const double s1 = config.sigma2 * config.r2_treated / (1.0 - config.r2_treated);
    const double s0 = config.sigma2 * config.r2_control / (1.0 - config.r2_control);
    params.beta1 = scale_for_variance(pattern, s1);
    params.beta0 = scale_for_variance(pattern, s0);
  } else {
    params.beta1 = scale_for_variance(pattern, config.gamma2);
    params.beta0 = params.beta1;
  }
  return params;
}

// Stream layout per replication: n*d covariate normals row by row, then n
// treatment uniforms, then n outcome draws (normals for the linear family,
// uniforms for the logistic family).  The potential outcomes share the
// per-row outcome draw, so Y(1) - Y(0) is free of outcome noise under the
// linear family and the two arms are comonotone under the logistic family;
// either way the observed-data law is unchanged.
PotentialOutcomes simulate_potentials(const SimulationConfig& config, int rep_index) {
  if (rep_index < 0) throw config_error("rep_index must be nonnegative");
  const TrueParams params = true_params(config);
  const int n = config.n;
  const int d = config.d;

  Rng rng = Rng::substream(config.seed, static_cast<std::uint64_t>(rep_index));

  PotentialOutcomes out;
  out.data.x.resize(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      out.data.x(i, j) = rng.normal();
    }
  }

  const Eigen::VectorXd treat_logit = out.data.x * params.eta;
  out.data.w.resize(n);
  for (int i = 0; i < n; ++i) {
    out.data.w[i] = rng.uniform() < sigmoid(treat_logit[i]) ? 1.0 : 0.0;
  }

  const Eigen::VectorXd mean1 = out.data.x * params.beta1;
  const Eigen::VectorXd mean0 = out.data.x * params.beta0;
  out.y1.resize(n);
  out.y0.resize(n);
  if (config.family == Family::linear) {
    const double sd = std::sqrt(config.sigma2);
    for (int i = 0; i < n; ++i) {
      const double noise = sd * rng.normal();
      out.y1[i] = mean1[i] + params.tau + noise;
      out.y0[i] = mean0[i] + noise;
    }
  } else {
    for (int i = 0; i < n; ++i) {
      const double u = rng.uniform();
      out.y1[i] = u < sigmoid(mean1[i] + params.tau) ? 1.0 : 0.0;
      out.y0[i] = u < sigmoid(mean0[i]) ? 1.0 : 0.0;
    }
  }

  out.data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    out.data.y[i] = out.data.w[i] == 1.0 ? out.y1[i] : out.y0[i];
  }
  out.data.truth = params;
  return out;
}

Dataset simulate(const SimulationConfig& config, int rep_index) {
  return simulate_potentials(config, rep_index).data;
}

double true_ate(const TrueParams& params, int quadrature_nodes) {
  if (params.family == Family::linear) return params.tau;
  if (quadrature_nodes < 64) {
    throw config_error("the logistic ATE quadrature needs at least 64 nodes");
  }
  const auto& rule = GaussHermite::cached(quadrature_nodes);
  const double mean1 =
      rule.expect([](double z) { return sigmoid(z); }, params.tau,
                  params.beta1.squaredNorm());
  const double mean0 = rule.expect([](double z) { return sigmoid(z); }, 0.0,
                                   params.beta0.squaredNorm());
  return mean1 - mean0;
}

double true_ate(const SimulationConfig& config, int quadrature_nodes) {
  return true_ate(true_params(config), quadrature_nodes);
}

}  // namespace atebench
