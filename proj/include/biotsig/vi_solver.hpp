// Saddle-point solves for the coupled system and the primal-dual active-set
// method for the contact variational inequality.
#pragma once

#include <Eigen/Sparse>

#include "biotsig/assembly.hpp"
#include "biotsig/dofmap.hpp"

namespace biotsig {

struct VISolveOptions {
  double residual_tol = 1e-10;  // relative tolerance for the KKT residuals
  int max_iterations = 50;
  double active_set_weight = 1.0;  // weight c in the lambda + c*(value - bound) test
  std::vector<char> initial_active;  // optional warm start; empty = bound <= 0 rule
};

struct KktResiduals {
  double stationarity = 0.0;     // force balance including contact forces
  double feasibility = 0.0;      // worst constraint violation
  double complementarity = 0.0;  // worst |lambda_i * slack_i|
  double dual_feasibility = 0.0; // most negative multiplier (>= 0 when clean)
};

struct VISolution {
  Eigen::VectorXd u, p;
  Eigen::VectorXd lambda;    // one multiplier per constraint, nonnegative
  std::vector<char> active;
  int iterations = 0;
  KktResiduals residuals;
};

// Factorization of [[A, -B^T], [-B, -C]] (symmetric quasidefinite, so an
// LDLT factorization exists for any symmetric permutation).
std::pair<Eigen::VectorXd, Eigen::VectorXd> solve_linear(const SystemBlocks& blocks);

VISolution solve_vi(const SystemBlocks& blocks, const std::vector<ContactConstraint>& constraints,
                    const VISolveOptions& opts = {});

// The contact multiplier as a piecewise polynomial on the contact boundary,
// recovered from the discrete force balance
//   <lambda, v.n> = <fe, v> - a(u, v) + b(v, p)  for all discrete v,
// which reduces to a boundary mass system because only contact-edge nodes
// have a nonvanishing normal trace.
class ContactMultiplier {
 public:
  double eval(int iface, double t) const;  // t in [-1,1] along the edge
  double value_at_constraint(int i) const { return nodal_[i]; }
  const Eigen::VectorXd& nodal() const { return nodal_; }
  double integral() const { return integral_; }

 private:
  friend ContactMultiplier reconstruct_lambda(const Mesh&, const DofMap&, const SystemBlocks&,
                                              const std::vector<ContactConstraint>&,
                                              const VISolution&);
  struct Piece {
    int degree = 0;
    std::vector<int> constraint_idx;  // edge node k -> constraint index
  };
  std::unordered_map<int, Piece> pieces_;  // by boundary interface id
  Eigen::VectorXd nodal_;
  double integral_ = 0.0;
};

ContactMultiplier reconstruct_lambda(const Mesh& mesh, const DofMap& dofmap,
                                     const SystemBlocks& blocks,
                                     const std::vector<ContactConstraint>& constraints,
                                     const VISolution& sol);

}  // namespace biotsig
