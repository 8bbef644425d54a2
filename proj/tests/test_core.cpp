#include <cmath>
#include <set>
#include <vector>

#include "atebench/errors.hpp"
#include "atebench/link.hpp"
#include "atebench/quadrature.hpp"
#include "atebench/rng.hpp"
#include "doctest.h"

using namespace atebench;

TEST_CASE("mix64 matches the published splitmix64 sequence") {
  // First outputs of splitmix64 seeded with 0, 1, 42: the finalizer applied
  // to state + golden ratio is exactly one step of that generator.
  CHECK(mix64(0) == 0xe220a8397b1dcdafULL);
  CHECK(mix64(1) == 0x910a2dec89025cc1ULL);
  CHECK(mix64(42) == 0xbdd732262feb6e95ULL);
}

TEST_CASE("uniform draws stay inside (0, 1]") {
  Rng rng(7);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 200000; ++i) {
    const double u = rng.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo > 0.0);
  CHECK(hi <= 1.0);
  CHECK(lo < 1e-4);
  CHECK(hi > 1.0 - 1e-4);
}

TEST_CASE("normal draws have standard moments") {
  Rng rng(123);
  const int n = 400000;
  double sum = 0.0, sum2 = 0.0, sum3 = 0.0;
  int inside = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sum2 += z * z;
    sum3 += z * z * z;
    if (std::abs(z) < 1.959963984540054) ++inside;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  const double skew = sum3 / n;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(skew) < 4.0 * std::sqrt(15.0 / n));
  CHECK(std::abs(inside / static_cast<double>(n) - 0.95) <
        4.0 * std::sqrt(0.95 * 0.05 / n));
}

TEST_CASE("substreams are reproducible and distinct") {
  Rng a = Rng::substream(99, 5);
  Rng b = Rng::substream(99, 5);
  Rng c = Rng::substream(99, 6);
  bool all_equal = true;
  bool any_diff_c = false;
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t va = a.next();
    if (va != b.next()) all_equal = false;
    if (va != c.next()) any_diff_c = true;
  }
  CHECK(all_equal);
  CHECK(any_diff_c);
}

TEST_CASE("Gauss-Hermite integrates polynomials exactly") {
  const GaussHermite& gh = GaussHermite::cached(8);
  // Moments of N(mu, var): degree-4 polynomials are exact with 8 nodes.
  const double mu = 1.3, var = 2.5;
  CHECK(gh.expect([](double z) { return z; }, mu, var) ==
        doctest::Approx(mu).epsilon(1e-13));
  CHECK(gh.expect([](double z) { return z * z; }, mu, var) ==
        doctest::Approx(var + mu * mu).epsilon(1e-13));
  CHECK(gh.expect([mu](double z) { return std::pow(z - mu, 4); }, mu, var) ==
        doctest::Approx(3.0 * var * var).epsilon(1e-12));
}

TEST_CASE("Gauss-Hermite handles analytic integrands and edge cases") {
  const GaussHermite& gh = GaussHermite::cached(64);
  // E[e^Z] = e^{1/2} for Z ~ N(0,1).
  CHECK(gh.expect([](double z) { return std::exp(z); }, 0.0, 1.0) ==
        doctest::Approx(std::exp(0.5)).epsilon(1e-12));
  // Symmetric rule: E[sigmoid(Z)] = 1/2 for centered Z.
  CHECK(gh.expect([](double z) { return sigmoid(z); }, 0.0, 9.0) ==
        doctest::Approx(0.5).epsilon(1e-12));
  // Zero variance evaluates the integrand at the mean.
  CHECK(gh.expect([](double z) { return std::cos(z); }, 0.7, 0.0) ==
        doctest::Approx(std::cos(0.7)));
  // The cache hands back the same rule object.
  CHECK(&GaussHermite::cached(64) == &gh);
  CHECK(gh.nodes.size() == 64);
  CHECK(gh.weights.size() == 64);
}

TEST_CASE("sigmoid basics and reflection") {
  CHECK(sigmoid(0.0) == 0.5);
  for (double z : {0.3, 1.7, 5.0, 40.0, 700.0}) {
    CHECK(sigmoid(-z) == doctest::Approx(1.0 - sigmoid(z)).epsilon(1e-14));
  }
  CHECK(sigmoid(700.0) <= 1.0);
  CHECK(sigmoid(-700.0) > 0.0);
  CHECK(log_sigmoid(-745.0) == doctest::Approx(-745.0).epsilon(1e-12));
  CHECK(log_sigmoid(30.0) == doctest::Approx(-std::exp(-30.0)).epsilon(1e-6));
  CHECK(std::isfinite(log_sigmoid(700.0)));
}

TEST_CASE("sigmoid derivatives match exact values at zero") {
  CHECK(sigmoid_derivative(1, 0.0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(sigmoid_derivative(2, 0.0) == doctest::Approx(0.0));
  CHECK(sigmoid_derivative(3, 0.0) == doctest::Approx(-0.125).epsilon(1e-14));
  CHECK(sigmoid_derivative(4, 0.0) == doctest::Approx(0.0));
}

TEST_CASE("sigmoid derivative ladder agrees with finite differences") {
  // d/dz of the order-n derivative is the order-(n+1) derivative; a central
  // difference of the former is an independent oracle for the latter.
  const double h = 1e-5;
  for (int order = 1; order <= 8; ++order) {
    for (double z : {-3.0, -1.0, 0.0, 0.4, 2.0, 5.5}) {
      const double fd =
          (sigmoid_derivative(order, z + h) - sigmoid_derivative(order, z - h)) /
          (2.0 * h);
      CHECK(sigmoid_derivative(order + 1, z) ==
            doctest::Approx(fd).epsilon(1e-6).scale(1e-4));
    }
  }
  // First derivative against the sigmoid itself.
  for (double z : {-2.0, 0.0, 1.3}) {
    const double fd = (sigmoid(z + h) - sigmoid(z - h)) / (2.0 * h);
    CHECK(sigmoid_derivative(1, z) == doctest::Approx(fd).epsilon(1e-8));
  }
}

TEST_CASE("sigmoid derivatives reflect with alternating parity") {
  for (int order = 1; order <= 9; ++order) {
    for (double z : {0.8, 3.0, 12.0}) {
      const double sign = (order % 2 == 1) ? 1.0 : -1.0;
      CHECK(sigmoid_derivative(order, -z) ==
            doctest::Approx(sign * sigmoid_derivative(order, z))
                .epsilon(1e-12)
                .scale(1e-30));
    }
  }
}

TEST_CASE("sigmoid derivatives stay finite and tiny at extreme arguments") {
  for (int order = 1; order <= 9; ++order) {
    for (double z : {700.0, -700.0, 350.0}) {
      const double v = sigmoid_derivative(order, z);
      CHECK(std::isfinite(v));
      CHECK(std::abs(v) < 1e-100);
    }
  }
}

TEST_CASE("corrected link collapses to the sigmoid") {
  for (double z : {-4.0, -0.5, 0.0, 1.2, 8.0}) {
    for (int k : {0, 1, 2, 3, 4}) {
      CHECK(corrected_link(z, 0.0, k) == sigmoid(z));
    }
    CHECK(corrected_link(z, 0.6, 0) == sigmoid(z));
  }
  // The correction is odd around zero, so the value at z = 0 stays 1/2.
  CHECK(corrected_link(0.0, 0.8, 1) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("order-1 corrected link matches its closed form") {
  for (double z : {-2.0, -0.3, 0.9, 2.4}) {
    for (double s2 : {0.1, 0.5, 1.0}) {
      const double ez = std::exp(z);
      const double closed =
          sigmoid(z) + (s2 / 2.0) * ez * (ez - 1.0) / std::pow(ez + 1.0, 3);
      CHECK(corrected_link(z, s2, 1) ==
            doctest::Approx(closed).epsilon(1e-12));
    }
  }
}

TEST_CASE("corrected link terms follow the series recurrence") {
  // Successive orders differ by exactly the next series term.
  const double z = 1.1, s2 = 0.4;
  double factorial = 1.0;
  for (int k = 1; k <= 4; ++k) {
    factorial *= k;
    const double term = std::pow(-s2, k) / (std::pow(2.0, k) * factorial) *
                        sigmoid_derivative(2 * k, z);
    CHECK(corrected_link(z, s2, k) - corrected_link(z, s2, k - 1) ==
          doctest::Approx(term).epsilon(1e-8).scale(1e-12));
  }
  CHECK_THROWS_AS(corrected_link(z, s2, 9), config_error);
  CHECK_THROWS_AS(corrected_link(z, s2, -1), config_error);
}

TEST_CASE("corrected link deconvolves additive predictor noise") {
  // The series is an inverse to Gaussian smoothing: feeding it z + G with
  // G ~ N(0, s2) and averaging recovers sigmoid(z).  The residual shrinks
  // fast in the truncation order.
  const GaussHermite& gh = GaussHermite::cached(96);
  for (double z : {-1.5, 0.3, 1.0, 2.5}) {
    for (double s2 : {0.04, 0.16}) {
      const double smoothed_k4 = gh.expect(
          [s2](double t) { return corrected_link(t, s2, 4); }, z, s2);
      const double smoothed_k1 = gh.expect(
          [s2](double t) { return corrected_link(t, s2, 1); }, z, s2);
      CHECK(std::abs(smoothed_k4 - sigmoid(z)) < 2e-6);
      CHECK(std::abs(smoothed_k4 - sigmoid(z)) <=
            std::abs(smoothed_k1 - sigmoid(z)));
    }
  }
}

TEST_CASE("order-1 corrected link beats the raw sigmoid as a mean predictor") {
  // Feeding the corrected link a noisy predictor recovers the noiseless
  // sigmoid better than feeding the sigmoid itself: the clean-link target is
  // sigmoid(z) while the naive plug-in averages to E[sigmoid(z + G)].
  const GaussHermite& gh = GaussHermite::cached(96);
  const double z = 1.0, s2 = 0.25;
  const double naive =
      gh.expect([](double t) { return sigmoid(t); }, z, s2);
  const double corrected =
      gh.expect([s2](double t) { return corrected_link(t, s2, 1); }, z, s2);
  CHECK(std::abs(corrected - sigmoid(z)) < std::abs(naive - sigmoid(z)));
}
