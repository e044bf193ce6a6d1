// One-dimensional Gauss quadrature rules on [-1, 1] and Legendre polynomials.
#pragma once

#include <vector>

namespace biotsig {

struct QuadratureRule1D {
  std::vector<double> points;
  std::vector<double> weights;
  int exactness = 0;  // highest polynomial degree integrated exactly
};

// Gauss-Legendre rule with n points (exact through degree 2n-1).
QuadratureRule1D gauss_legendre(int n);

// Gauss-Lobatto rule with n >= 2 points including both endpoints
// (exact through degree 2n-3).
QuadratureRule1D gauss_lobatto(int n);

// Legendre polynomial P_n and its first derivative at x.
double legendre_value(int n, double x);
double legendre_derivative(int n, double x);

// Values of P_0..P_n at x, written into out[0..n].
void legendre_values(int n, double x, double* out);

}  // namespace biotsig
