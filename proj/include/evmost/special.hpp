#pragma once

namespace evmost {

/// Natural log of |Gamma(x)|. Lanczos approximation (g = 7, 9 terms) for
/// x >= 0.5, reflection formula below that. Poles (x = 0, -1, -2, ...)
/// return +inf.
double log_gamma(double x);

/// Digamma psi(x) = d/dx log Gamma(x). Upward recurrence to x >= 6, then the
/// asymptotic series; reflection for x < 0. Poles return NaN.
double digamma(double x);

double softplus(double x);

/// Logistic sigmoid, the derivative of softplus.
double sigmoid(double x);

}  // namespace evmost
