#pragma once

namespace atebench {

double sigmoid(double z);

// log(sigmoid(z)), computed without overflow for |z| up to ~700.
double log_sigmoid(double z);

// n-th derivative of the sigmoid, 1 <= n <= 9.
//
// Derivatives are polynomials in s = sigmoid(z) with integer coefficients
// built once by differentiating through ds/dz = s(1-s).  For z > 0 the
// polynomial is evaluated at sigmoid(-z), where s is small and the leading
// low-degree term dominates, and the result is reflected back through
// d^n/dz^n sigmoid(-z) = (-1)^(n+1) d^n/dz^n sigmoid(z).  Direct evaluation
// near s = 1 would cancel catastrophically; this form is stable for
// |z| <= 700.
double sigmoid_derivative(int order, double z);

// Series-corrected mean response: the order-k expansion of
// E[sigmoid(z + G)] = target sigmoid(z) when the linear predictor carries
// additive N(0, sigma_x2) estimation noise.  Term m is
// (-sigma_x2)^m / (2^m m!) times the 2m-th sigmoid derivative; k = 0 returns
// the plain sigmoid and k is capped at 4 (derivatives through order 8).
double corrected_link(double z, double sigma_x2, int order_k);

}  // namespace atebench
