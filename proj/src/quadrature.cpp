#include "biotsig/quadrature.hpp"

#include <cmath>
#include <stdexcept>

#include "biotsig/errors.hpp"

namespace biotsig {

namespace {

// Value and first derivative of P_n via the three-term recurrence.
void legendre_pair(int n, double x, double& p, double& dp) {
  double p0 = 1.0, dp0 = 0.0;
  if (n == 0) {
    p = p0;
    dp = dp0;
    return;
  }
  double p1 = x, dp1 = 1.0;
  for (int k = 2; k <= n; ++k) {
    double pk = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
    double dpk = ((2 * k - 1) * (p1 + x * dp1) - (k - 1) * dp0) / k;
    p0 = p1;
    dp0 = dp1;
    p1 = pk;
    dp1 = dpk;
  }
  p = p1;
  dp = dp1;
}

constexpr double kNewtonTol = 1e-14;
constexpr int kNewtonMaxIter = 100;

}  // namespace

double legendre_value(int n, double x) {
  double p, dp;
  legendre_pair(n, x, p, dp);
  return p;
}

double legendre_derivative(int n, double x) {
  double p, dp;
  legendre_pair(n, x, p, dp);
  return dp;
}

void legendre_values(int n, double x, double* out) {
  out[0] = 1.0;
  if (n == 0) return;
  out[1] = x;
  for (int k = 2; k <= n; ++k)
    out[k] = ((2 * k - 1) * x * out[k - 1] - (k - 1) * out[k - 2]) / k;
}

QuadratureRule1D gauss_legendre(int n) {
  if (n < 1 || n > 64) throw DegreeError("gauss_legendre: point count out of range");
  QuadratureRule1D rule;
  rule.points.resize(n);
  rule.weights.resize(n);
  rule.exactness = 2 * n - 1;
  // Newton on P_n from Chebyshev-like initial guesses; roots come out
  // in descending order, so fill from the right.
  for (int i = 0; i < n; ++i) {
    double x = std::cos(M_PI * (4.0 * i + 3.0) / (4.0 * n + 2.0));
    double p = 0.0, dp = 1.0;
    for (int it = 0; it < kNewtonMaxIter; ++it) {
      legendre_pair(n, x, p, dp);
      double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < kNewtonTol) break;
    }
    legendre_pair(n, x, p, dp);
    rule.points[n - 1 - i] = x;
    rule.weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  // Symmetrize: the rule is invariant under x -> -x, enforce it exactly.
  for (int i = 0; i < n / 2; ++i) {
    double x = 0.5 * (rule.points[n - 1 - i] - rule.points[i]);
    rule.points[i] = -x;
    rule.points[n - 1 - i] = x;
    double w = 0.5 * (rule.weights[i] + rule.weights[n - 1 - i]);
    rule.weights[i] = rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.points[n / 2] = 0.0;
  return rule;
}

QuadratureRule1D gauss_lobatto(int n) {
  if (n < 2 || n > 64) throw DegreeError("gauss_lobatto: point count out of range");
  QuadratureRule1D rule;
  rule.points.resize(n);
  rule.weights.resize(n);
  rule.exactness = 2 * n - 3;
  int m = n - 1;  // interior points are roots of P_m'
  rule.points[0] = -1.0;
  rule.points[m] = 1.0;
  for (int i = 1; i < m; ++i) {
    // Chebyshev-Lobatto initial guess, then Newton on P_m'.
    double x = std::cos(M_PI * i / m);
    for (int it = 0; it < kNewtonMaxIter; ++it) {
      double p, dp;
      legendre_pair(m, x, p, dp);
      // Legendre ODE gives P_m'' in terms of P_m and P_m'.
      double d2p = (2.0 * x * dp - m * (m + 1) * p) / (1.0 - x * x);
      double dx = dp / d2p;
      x -= dx;
      if (std::abs(dx) < kNewtonTol) break;
    }
    rule.points[m - i] = x;
  }
  for (int i = 0; i < n; ++i) {
    double p = legendre_value(m, rule.points[i]);
    rule.weights[i] = 2.0 / (m * n * p * p);
  }
  for (int i = 0; i < n / 2; ++i) {
    double x = 0.5 * (rule.points[n - 1 - i] - rule.points[i]);
    rule.points[i] = -x;
    rule.points[n - 1 - i] = x;
    double w = 0.5 * (rule.weights[i] + rule.weights[n - 1 - i]);
    rule.weights[i] = rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.points[n / 2] = 0.0;
  return rule;
}

}  // namespace biotsig
