// Nodal Lagrange bases on Gauss-Lobatto points of [-1, 1].
#pragma once

#include <vector>

namespace biotsig {

inline constexpr int kMaxDegree = 12;

// Lagrange basis of a given degree on the degree+1 Gauss-Lobatto nodes.
// Evaluation returns values together with first and second derivatives;
// the product-rule accumulation below stays well defined at the nodes
// themselves (no barycentric division by x - x_i).
class ShapeBasis {
 public:
  explicit ShapeBasis(int degree);

  int degree() const { return degree_; }
  int size() const { return degree_ + 1; }
  const std::vector<double>& nodes() const { return nodes_; }

  // Fills val/d1/d2 (each of length size()) with L_i(x), L_i'(x), L_i''(x).
  // Null pointers skip the corresponding output.
  void eval(double x, double* val, double* d1 = nullptr, double* d2 = nullptr) const;

  double value(int i, double x) const;

 private:
  int degree_;
  std::vector<double> nodes_;
  std::vector<double> inv_denom_;  // 1 / prod_{j != i} (x_i - x_j)
};

// Shared cache, degrees 1..kMaxDegree.
const ShapeBasis& shape_basis(int degree);

}  // namespace biotsig
