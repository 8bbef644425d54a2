#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace atebench {

// Gauss-Hermite rule for the weight exp(-x^2), nodes ascending.
//
// Rules are built by the Golub-Welsch eigendecomposition of the Jacobi
// matrix.  cached(n) memoizes rules by size; the library defaults are 128
// nodes for one-dimensional Gaussian means and 64 nodes per axis for the
// tensorized bivariate expectations in the coefficient-inflation solver.
struct GaussHermite {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;

  explicit GaussHermite(int n);

  static const GaussHermite& cached(int n);

  // E[f(Z)] for Z ~ N(mean, var).
  template <class F>
  double expect(F&& f, double mean, double var) const {
    if (var <= 0.0) return f(mean);
    const double scale = std::sqrt(2.0 * var);
    double acc = 0.0;
    for (int i = 0; i < nodes.size(); ++i) {
      acc += weights[i] * f(mean + scale * nodes[i]);
    }
    return acc * inv_sqrt_pi;
  }

  static constexpr double inv_sqrt_pi = 0.564189583547756286948079451561;
};

}  // namespace atebench
