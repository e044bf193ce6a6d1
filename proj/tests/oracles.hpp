// Independent reference computations used by the test binaries. These stay
// deliberately naive (dense algebra, exhaustive search) so they exercise a
// different code path than the library.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "biotsig/assembly.hpp"
#include "biotsig/dofmap.hpp"
#include "biotsig/mesh.hpp"

namespace biotsig::testing {

inline Mesh with_uniform_degree(Mesh mesh, int r) {
  const std::vector<int> leaves = mesh.leaves();
  for (int t : leaves) mesh = mesh.with_degree(t, r);
  return mesh;
}

// Gap to the obstacle used by the contact example on the unit square.
inline double example_gap(const Vec2& x) { return 3.0 * (1.0 - std::cos(x[0] - 0.5)); }

struct EnumeratedSolution {
  Eigen::VectorXd u, p, lambda;
  int candidates = 0;  // subsets that passed both sign and feasibility checks
};

// Solves the contact problem by enumerating every active set: for each subset
// S the equality-constrained saddle problem is solved through a dense bordered
// KKT system, and a subset counts as a solution when its multipliers are
// nonnegative and no constraint outside S is violated. Convexity makes the
// survivor unique up to degenerate (zero-multiplier) ties, which agree in
// (u, p, lambda) anyway. Only sensible for a dozen constraints or fewer.
inline EnumeratedSolution enumerate_vi(const SystemBlocks& blocks,
                                       const std::vector<ContactConstraint>& cons) {
  const int nu = static_cast<int>(blocks.A.rows());
  const int np = static_cast<int>(blocks.C.rows());
  const int n = nu + np;
  const int m = static_cast<int>(cons.size());

  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
  K.topLeftCorner(nu, nu) = Eigen::MatrixXd(blocks.A);
  K.topRightCorner(nu, np) = -Eigen::MatrixXd(blocks.B).transpose();
  K.bottomLeftCorner(np, nu) = -Eigen::MatrixXd(blocks.B);
  K.bottomRightCorner(np, np) = -Eigen::MatrixXd(blocks.C);
  Eigen::VectorXd rhs(n);
  rhs << blocks.fe, blocks.ff;
  const double tol = 1e-10 * (1.0 + rhs.lpNorm<Eigen::Infinity>());

  EnumeratedSolution best;
  for (unsigned subset = 0; subset < (1u << m); ++subset) {
    std::vector<int> sel;
    for (int i = 0; i < m; ++i)
      if (subset & (1u << i)) sel.push_back(i);
    const int s = static_cast<int>(sel.size());

    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(n + s, n + s);
    full.topLeftCorner(n, n) = K;
    Eigen::VectorXd frhs(n + s);
    frhs.head(n) = rhs;
    for (int a = 0; a < s; ++a) {
      const ContactConstraint& c = cons[sel[a]];
      full(c.dof, n + a) = c.coeff;  // contact force enters the balance
      full(n + a, c.dof) = c.coeff;  // pinned value of the constrained dof
      frhs[n + a] = c.bound;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(full);
    if (!lu.isInvertible()) continue;
    Eigen::VectorXd sol = lu.solve(frhs);
    if ((full * sol - frhs).lpNorm<Eigen::Infinity>() > tol) continue;

    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
    bool ok = true;
    for (int a = 0; a < s && ok; ++a) {
      lambda[sel[a]] = sol[n + a];
      if (lambda[sel[a]] < -tol) ok = false;
    }
    for (int i = 0; i < m && ok; ++i) {
      const double value = cons[i].coeff * sol[cons[i].dof];
      if (value > cons[i].bound + tol) ok = false;
    }
    if (!ok) continue;

    if (best.candidates == 0) {
      best.u = sol.head(nu);
      best.p = sol.segment(nu, np);
      best.lambda = lambda;
    }
    ++best.candidates;
  }
  return best;
}

}  // namespace biotsig::testing
