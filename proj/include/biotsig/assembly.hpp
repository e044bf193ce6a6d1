// Assembly of the poroelastic two-field system
//   a(u,v) = 2*tau*(eps(u),eps(v)) + iota*(div u, div v)
//   b(v,q) = alpha*(div v, q)
//   c(p,q) = (alpha^2/iota)*(p,q) + (kappa grad p, grad q)
// into sparse blocks over the free dofs of a DofMap.
#pragma once

#include <Eigen/Sparse>
#include <functional>

#include "biotsig/dofmap.hpp"
#include "biotsig/mesh.hpp"

namespace biotsig {

using VectorField = std::function<Vec2(const Vec2&)>;
using ScalarField = std::function<double(const Vec2&)>;

struct MaterialParams {
  double tau = 1.0;   // shear modulus
  double iota = 1.0;  // composite dilation coefficient
  double alpha = 1.0; // Biot coupling
  Mat2 kappa = Mat2::Identity();  // permeability over viscosity

  void validate() const;  // throws std::invalid_argument
};

struct SystemBlocks {
  Eigen::SparseMatrix<double> A;  // n_u x n_u, elasticity, SPD on the free dofs
  Eigen::SparseMatrix<double> B;  // n_p x n_u, pressure rows / displacement columns
  Eigen::SparseMatrix<double> C;  // n_p x n_p, flow, SPD
  Eigen::VectorXd fe;             // elastic load
  Eigen::VectorXd ff;             // fluid load
  Eigen::SparseMatrix<double> gram_u;  // vector H1 Gram (optional, see assemble)
  Eigen::SparseMatrix<double> gram_p;  // scalar H1 Gram
};

// Elementwise Gauss-Legendre assembly with max(r_T, s_T) + 1 points per
// direction. The H1 Gram matrices are only filled when with_gram is set;
// they are not needed by the solver itself.
SystemBlocks assemble(const Mesh& mesh, const DofMap& dofmap, const MaterialParams& mat,
                      const VectorField& load_e, const ScalarField& load_f,
                      bool with_gram = false);

// Energy norms sqrt(a(u,u)) and sqrt(c(p,p)).
std::pair<double, double> energy_norms(const SystemBlocks& blocks, const Eigen::VectorXd& u,
                                       const Eigen::VectorXd& p);

// Dual norms sqrt(f^T A^{-1} f) and sqrt(f^T C^{-1} f) of linear functionals
// given by their coefficient vectors.
double dual_norm_u(const SystemBlocks& blocks, const Eigen::VectorXd& f);
double dual_norm_p(const SystemBlocks& blocks, const Eigen::VectorXd& f);

}  // namespace biotsig
