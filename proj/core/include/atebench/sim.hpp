#pragma once

#include <Eigen/Dense>

#include "atebench/dataset.hpp"

namespace atebench {

// The signed block pattern used by every simulated coefficient vector:
// +c on the first d/8 entries, -c on the next d/8, zero elsewhere, so the
// squared norm is c^2 d / 4.  d must be a positive multiple of 8.
Eigen::VectorXd make_coefficients(int d, double c);

// Rescale `direction` so that Var(v'X) = target under identity covariance,
// i.e. ||v||^2 = target.  Errors on a zero direction unless target is zero.
Eigen::VectorXd scale_for_variance(const Eigen::VectorXd& direction, double target);

// Truth implied by a configuration.  The linear family scales the treated and
// control outcome coefficients to match their R^2 targets; the logistic
// family reuses gamma2 as the signal strength of both outcome arms, so eta,
// beta1 and beta0 are identical and effect heterogeneity enters only through
// the nonlinearity of the link applied to the offset tau.
TrueParams true_params(const SimulationConfig& config);

// Draw replication `rep_index`.  Uses the (seed, rep_index) substream, so any
// subset of replications can be generated independently, in any order, with
// bit-identical results.
Dataset simulate(const SimulationConfig& config, int rep_index);

// Same draw as simulate(), with both potential outcomes materialized.
struct PotentialOutcomes {
  Dataset data;
  Eigen::VectorXd y1;
  Eigen::VectorXd y0;
};
PotentialOutcomes simulate_potentials(const SimulationConfig& config, int rep_index);

// Population ATE.  tau for the linear family; a one-dimensional
// Gauss-Hermite mean difference of sigmoids for the logistic family
// (at least 64 nodes; absolute accuracy well below 1e-8).
double true_ate(const TrueParams& params, int quadrature_nodes = 128);
double true_ate(const SimulationConfig& config, int quadrature_nodes = 128);

}  // namespace atebench
