#include "atebench/link.hpp"

#include <array>
#include <cmath>
#include <vector>

#include "atebench/errors.hpp"

namespace atebench {

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_sigmoid(double z) {
  if (z >= 0.0) {
    return -std::log1p(std::exp(-z));
  }
  return z - std::log1p(std::exp(z));
}

namespace {

constexpr int kMaxOrder = 9;

// polys[n] holds the coefficients (by power of s) of the degree-(n+1)
// polynomial p_n with d^n/dz^n sigmoid(z) = p_n(sigmoid(z)).
const std::vector<std::vector<double>>& derivative_polys() {
  static const std::vector<std::vector<double>> polys = [] {
    std::vector<std::vector<double>> p(kMaxOrder + 1);
    p[0] = {0.0, 1.0};
    for (int n = 0; n < kMaxOrder; ++n) {
      std::vector<double> next(p[n].size() + 1, 0.0);
      for (std::size_t j = 1; j < p[n].size(); ++j) {
        const double a = p[n][j] * static_cast<double>(j);
        next[j] += a;
        next[j + 1] -= a;
      }
      p[n + 1] = std::move(next);
    }
    return p;
  }();
  return polys;
}

double poly_eval(const std::vector<double>& coef, double s) {
  double acc = 0.0;
  for (std::size_t j = coef.size(); j-- > 0;) {
    acc = acc * s + coef[j];
  }
  return acc;
}

}  // namespace

double sigmoid_derivative(int order, double z) {
  if (order < 1 || order > kMaxOrder) {
    throw config_error("sigmoid derivative order out of range");
  }
  const auto& polys = derivative_polys();
  if (z <= 0.0) {
    return poly_eval(polys[order], sigmoid(z));
  }
  const double reflected = poly_eval(polys[order], sigmoid(-z));
  return (order % 2 == 1) ? reflected : -reflected;
}

double corrected_link(double z, double sigma_x2, int order_k) {
  if (order_k < 0 || order_k > 4) {
    throw config_error("corrected link order must be between 0 and 4");
  }
  if (sigma_x2 < 0.0) {
    throw config_error("corrected link needs a nonnegative noise variance");
  }
  double value = sigmoid(z);
  double term = 1.0;
  for (int m = 1; m <= order_k; ++m) {
    term *= -sigma_x2 / (2.0 * m);
    value += term * sigmoid_derivative(2 * m, z);
  }
  return value;
}

}  // namespace atebench
