// Evaluation of discrete solution fields (values, gradients, second
// derivatives) at reference points of mesh leaves.
#pragma once

#include <Eigen/Dense>

#include "biotsig/dofmap.hpp"
#include "biotsig/mesh.hpp"

namespace biotsig {

struct FieldSample {
  Vec2 u{0, 0};
  Mat2 grad_u = Mat2::Zero();     // grad_u(i, j) = d u_i / d x_j
  Mat2 hess_u0 = Mat2::Zero();    // second derivatives of u_0
  Mat2 hess_u1 = Mat2::Zero();
  double p = 0.0;
  Vec2 grad_p{0, 0};
  Mat2 hess_p = Mat2::Zero();

  double div_u() const { return grad_u(0, 0) + grad_u(1, 1); }
  Mat2 strain() const { return 0.5 * (grad_u + grad_u.transpose()); }
};

// Binds a mesh/dofmap pair with solution coefficient vectors and resolves
// local nodal values once per leaf up front. Second derivatives use the full
// chain rule of the bilinear reference map, so they are exact for polynomial
// data on distorted cells too.
class FieldEvaluator {
 public:
  FieldEvaluator(const Mesh& mesh, const DofMap& dofmap, Eigen::VectorXd u, Eigen::VectorXd p);

  // `elem` must be a leaf of the bound mesh.
  FieldSample eval(int elem, const Vec2& ref, bool with_second = false) const;

  const Mesh& mesh() const { return *mesh_; }
  const DofMap& dofmap() const { return *dofmap_; }
  const Eigen::VectorXd& u() const { return u_; }
  const Eigen::VectorXd& p() const { return p_; }

  // Nodal coefficients on a leaf (columns are local nodes).
  const Eigen::MatrixXd& u_nodal(int leaf_pos) const { return u_nodal_[leaf_pos]; }
  const Eigen::VectorXd& p_nodal(int leaf_pos) const { return p_nodal_[leaf_pos]; }

 private:
  const Mesh* mesh_;
  const DofMap* dofmap_;
  Eigen::VectorXd u_, p_;
  std::vector<Eigen::MatrixXd> u_nodal_;  // 2 x n_loc per leaf
  std::vector<Eigen::VectorXd> p_nodal_;
};

}  // namespace biotsig
