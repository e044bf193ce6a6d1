// Residual a posteriori error indicator: per-element volume and edge-jump
// terms for both fields, boundary residual terms, and the contact functional
// built from the reconstructed multiplier with its cut-off functions.
#pragma once

#include <Eigen/Dense>

#include "biotsig/assembly.hpp"
#include "biotsig/vi_solver.hpp"

namespace biotsig {

struct EstimatorReport {
  // Indexed by leaf position (dofmap.leaf_pos ordering).
  Eigen::VectorXd eta_u_sq;
  Eigen::VectorXd eta_p_sq;

  // Raw interface jump integrals (no h/r weights), by interface id; zero on
  // boundary rows. Diagnostic only.
  Eigen::VectorXd iface_jump_u_sq;
  Eigen::VectorXd iface_jump_p_sq;

  // The three pieces of the contact functional: (h/r)-weighted multiplier
  // mismatch |lambda - mu|^2, (r/h)-weighted penetration |zeta|^2, and the
  // coupling (90/469)(<lambda, zeta> + <mu, g - u.n>). The coupling piece
  // can be slightly negative; the total stays nonnegative in practice.
  double contact_mismatch_sq = 0.0;
  double contact_penetration_sq = 0.0;
  double contact_coupling = 0.0;

  double contact_total() const {
    return contact_mismatch_sq + contact_penetration_sq + contact_coupling;
  }
  double total_sq() const { return eta_u_sq.sum() + eta_p_sq.sum() + contact_total(); }
};

EstimatorReport estimate(const Mesh& mesh, const DofMap& dofmap, const MaterialParams& mat,
                         const VectorField& load_e, const ScalarField& load_f,
                         const ScalarField& gap, const VISolution& sol,
                         const ContactMultiplier& lambda);

// Unweighted L2 jump integrals over one interior interface (both sub-edges
// for hanging interfaces): integral of |[[theta(u).n]]|^2 and of
// |[[kappa grad p . n]]|^2. Throws std::invalid_argument on boundary edges.
std::pair<double, double> edge_jump(const Mesh& mesh, const DofMap& dofmap,
                                    const MaterialParams& mat, const VISolution& sol, int iface);

}  // namespace biotsig
