#include "atebench/quadrature.hpp"

#include <map>
#include <mutex>

#include "atebench/errors.hpp"

namespace atebench {

GaussHermite::GaussHermite(int n) {
  if (n < 1) throw config_error("Gauss-Hermite rule needs at least one node");
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double b = std::sqrt(0.5 * i);
    jacobi(i, i - 1) = b;
    jacobi(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  nodes = eig.eigenvalues();
  weights.resize(n);
  const double sqrt_pi = 1.0 / inv_sqrt_pi;
  for (int i = 0; i < n; ++i) {
    const double v0 = eig.eigenvectors()(0, i);
    weights[i] = sqrt_pi * v0 * v0;
  }
}

const GaussHermite& GaussHermite::cached(int n) {
  static std::mutex mu;
  static std::map<int, GaussHermite> rules;
  std::lock_guard<std::mutex> lock(mu);
  auto it = rules.find(n);
  if (it == rules.end()) {
    it = rules.emplace(n, GaussHermite(n)).first;
  }
  return it->second;
}

}  // namespace atebench
