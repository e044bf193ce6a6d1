#include "biotsig/vi_solver.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <cmath>
#include <set>
#include <unordered_map>

#include "biotsig/errors.hpp"
#include "biotsig/lagrange.hpp"
#include "biotsig/quadrature.hpp"

namespace biotsig {

namespace {

// [[A, -B^T], [-B, -C]]: symmetric quasidefinite, so LDLT factors exist for
// every symmetric permutation and SimplicialLDLT is safe without pivoting.
Eigen::SparseMatrix<double> build_saddle(const SystemBlocks& b) {
  const int nu = static_cast<int>(b.A.rows());
  const int np = static_cast<int>(b.C.rows());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(b.A.nonZeros() + 2 * b.B.nonZeros() + b.C.nonZeros()));
  for (int k = 0; k < b.A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(b.A, k); it; ++it)
      trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (int k = 0; k < b.B.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(b.B, k); it; ++it) {
      const int r = static_cast<int>(it.row());  // pressure index
      const int c = static_cast<int>(it.col());  // displacement index
      trip.emplace_back(nu + r, c, -it.value());
      trip.emplace_back(c, nu + r, -it.value());
    }
  for (int k = 0; k < b.C.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(b.C, k); it; ++it)
      trip.emplace_back(nu + static_cast<int>(it.row()), nu + static_cast<int>(it.col()),
                        -it.value());
  Eigen::SparseMatrix<double> K(nu + np, nu + np);
  K.setFromTriplets(trip.begin(), trip.end());
  K.makeCompressed();
  return K;
}

Eigen::VectorXd refine_once(const Eigen::SparseMatrix<double>& K,
                            const Eigen::VectorXd& rhs, Eigen::VectorXd z,
                            const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& solve) {
  z += solve(rhs - K * z);
  return z;
}

Eigen::VectorXd solve_checked(const Eigen::SparseMatrix<double>& K, const Eigen::VectorXd& rhs,
                              double tol) {
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(K);
  Eigen::VectorXd z;
  if (ldlt.info() == Eigen::Success) {
    z = refine_once(K, rhs, ldlt.solve(rhs),
                    [&](const Eigen::VectorXd& r) { return ldlt.solve(r).eval(); });
  }
  const double scale = 1.0 + rhs.lpNorm<Eigen::Infinity>();
  if (ldlt.info() != Eigen::Success || (rhs - K * z).lpNorm<Eigen::Infinity>() > tol * scale) {
    // Roundoff can defeat the unpivoted factorization on badly scaled
    // systems; retry with a general sparse LU before giving up.
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(K);
    if (lu.info() != Eigen::Success) throw SolverError("saddle point factorization failed");
    z = refine_once(K, rhs, lu.solve(rhs),
                    [&](const Eigen::VectorXd& r) { return lu.solve(r).eval(); });
    if ((rhs - K * z).lpNorm<Eigen::Infinity>() > tol * scale)
      throw SolverError("saddle point solve did not reach the requested residual");
  }
  return z;
}

}  // namespace

std::pair<Eigen::VectorXd, Eigen::VectorXd> solve_linear(const SystemBlocks& blocks) {
  const int nu = static_cast<int>(blocks.A.rows());
  const int np = static_cast<int>(blocks.C.rows());
  Eigen::SparseMatrix<double> K = build_saddle(blocks);
  Eigen::VectorXd rhs(nu + np);
  rhs << blocks.fe, blocks.ff;
  Eigen::VectorXd z = solve_checked(K, rhs, 1e-10);
  return {z.head(nu), z.tail(np)};
}

VISolution solve_vi(const SystemBlocks& blocks, const std::vector<ContactConstraint>& constraints,
                    const VISolveOptions& opts) {
  const int nu = static_cast<int>(blocks.A.rows());
  const int np = static_cast<int>(blocks.C.rows());
  const int n = nu + np;
  const int m = static_cast<int>(constraints.size());

  {
    std::set<int> seen_dofs;
    for (const ContactConstraint& c : constraints) {
      if (c.dof < 0 || c.dof >= nu) throw std::invalid_argument("constraint dof out of range");
      if (c.coeff == 0.0) throw std::invalid_argument("constraint has zero coefficient");
      if (!seen_dofs.insert(c.dof).second)
        throw std::invalid_argument("duplicate constraint on one dof");
    }
  }

  Eigen::SparseMatrix<double> K = build_saddle(blocks);
  Eigen::VectorXd rhs(n);
  rhs << blocks.fe, blocks.ff;
  const double scale = 1.0 + rhs.lpNorm<Eigen::Infinity>();

  VISolution sol;
  if (m == 0) {
    Eigen::VectorXd z = solve_checked(K, rhs, opts.residual_tol);
    sol.u = z.head(nu);
    sol.p = z.tail(np);
    sol.lambda = Eigen::VectorXd::Zero(0);
    sol.iterations = 0;
    sol.residuals.stationarity = (rhs - K * z).lpNorm<Eigen::Infinity>();
    return sol;
  }

  std::vector<char> active(m, 0);
  if (!opts.initial_active.empty()) {
    if (static_cast<int>(opts.initial_active.size()) != m)
      throw std::invalid_argument("initial_active size does not match constraints");
    active = opts.initial_active;
  } else {
    // The zero displacement already touches wherever the gap vanishes.
    for (int i = 0; i < m; ++i) active[i] = constraints[i].bound <= 0.0 ? 1 : 0;
  }

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  ldlt.analyzePattern(K);

  // Activating a constraint pins its dof, which we realize by zeroing the
  // row and column and placing a unit diagonal. The sparsity pattern of K
  // never changes, so the symbolic factorization is reused across sweeps.
  std::set<std::vector<char>> visited;
  Eigen::VectorXd z(n);
  const double deadband = 1e-12 * scale;  // keeps roundoff from flipping sets

  for (int iter = 1; iter <= opts.max_iterations; ++iter) {
    visited.insert(active);

    std::vector<char> pinned(n, 0);
    Eigen::VectorXd pin_value = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < m; ++i) {
      if (!active[i]) continue;
      pinned[constraints[i].dof] = 1;
      pin_value[constraints[i].dof] = constraints[i].bound / constraints[i].coeff;
    }

    Eigen::VectorXd rhs_mod = rhs;
    for (int i = 0; i < m; ++i) {
      if (!active[i]) continue;
      const int k = constraints[i].dof;
      for (Eigen::SparseMatrix<double>::InnerIterator it(K, k); it; ++it)
        rhs_mod[it.row()] -= it.value() * pin_value[k];
    }

    Eigen::SparseMatrix<double> Kmod = K;
    for (int c = 0; c < Kmod.outerSize(); ++c)
      for (Eigen::SparseMatrix<double>::InnerIterator it(Kmod, c); it; ++it)
        if (pinned[it.row()] || pinned[c])
          it.valueRef() = (static_cast<int>(it.row()) == c) ? 1.0 : 0.0;
    for (int k = 0; k < n; ++k)
      if (pinned[k]) rhs_mod[k] = pin_value[k];

    ldlt.factorize(Kmod);
    if (ldlt.info() == Eigen::Success) {
      z = refine_once(Kmod, rhs_mod, ldlt.solve(rhs_mod),
                      [&](const Eigen::VectorXd& r) { return ldlt.solve(r).eval(); });
    } else {
      Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(Kmod);
      if (lu.info() != Eigen::Success)
        throw SolverError("active-set subproblem factorization failed");
      z = refine_once(Kmod, rhs_mod, lu.solve(rhs_mod),
                      [&](const Eigen::VectorXd& r) { return lu.solve(r).eval(); });
    }
    if ((rhs_mod - Kmod * z).lpNorm<Eigen::Infinity>() > opts.residual_tol * scale)
      throw SolverError("active-set subproblem solve did not converge");

    // Multipliers from the untouched rows of the original system, then the
    // usual semismooth update of the active set.
    Eigen::VectorXd resid = rhs - K * z;
    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
    for (int i = 0; i < m; ++i)
      if (active[i]) lambda[i] = resid[constraints[i].dof] / constraints[i].coeff;

    std::vector<char> next(m, 0);
    for (int i = 0; i < m; ++i) {
      const double value = constraints[i].coeff * z[constraints[i].dof];
      const double test = lambda[i] + opts.active_set_weight * (value - constraints[i].bound);
      next[i] = test > deadband ? 1 : 0;
    }

    if (next == active) {
      sol.u = z.head(nu);
      sol.p = z.tail(np);
      sol.lambda = lambda;
      sol.active = active;
      sol.iterations = iter;

      KktResiduals& r = sol.residuals;
      Eigen::VectorXd balance = resid;
      for (int i = 0; i < m; ++i)
        balance[constraints[i].dof] -= lambda[i] * constraints[i].coeff;
      r.stationarity = balance.lpNorm<Eigen::Infinity>();
      r.dual_feasibility = m > 0 ? lambda.minCoeff() : 0.0;
      for (int i = 0; i < m; ++i) {
        const double slack = constraints[i].bound - constraints[i].coeff * z[constraints[i].dof];
        r.feasibility = std::max(r.feasibility, -slack);
        r.complementarity = std::max(r.complementarity, std::abs(lambda[i] * slack));
      }
      if (r.stationarity > opts.residual_tol * scale)
        throw SolverError("contact solve ended with a large force-balance residual");
      return sol;
    }
    if (visited.count(next))
      throw NoConvergenceError("active-set iteration entered a cycle");
    active = std::move(next);
  }
  throw NoConvergenceError("active-set iteration hit the sweep limit");
}

double ContactMultiplier::eval(int iface, double t) const {
  auto it = pieces_.find(iface);
  if (it == pieces_.end()) throw std::invalid_argument("not a contact interface");
  const Piece& piece = it->second;
  const ShapeBasis& basis = shape_basis(piece.degree);
  std::vector<double> val(basis.size());
  basis.eval(t, val.data());
  double out = 0.0;
  for (int k = 0; k < basis.size(); ++k) out += val[k] * nodal_[piece.constraint_idx[k]];
  return out;
}

ContactMultiplier reconstruct_lambda(const Mesh& mesh, const DofMap& dofmap,
                                     const SystemBlocks& blocks,
                                     const std::vector<ContactConstraint>& constraints,
                                     const VISolution& sol) {
  const int m = static_cast<int>(constraints.size());
  std::unordered_map<int, int> constraint_of_dof;
  for (int i = 0; i < m; ++i) constraint_of_dof[constraints[i].dof] = i;

  ContactMultiplier out;
  Eigen::MatrixXd mass = Eigen::MatrixXd::Zero(m, m);

  const auto& interfaces = mesh.interfaces();
  for (std::size_t ifc = 0; ifc < interfaces.size(); ++ifc) {
    const EdgeInterface& iface = interfaces[ifc];
    if (iface.kind != EdgeInterface::Kind::Boundary || iface.tags.disp != DispBC::Contact)
      continue;
    const int t = iface.a.elem;
    const int l = iface.a.edge;
    const int d = mesh.element(t).degree_u;
    const int lp = dofmap.leaf_pos.at(t);

    ContactMultiplier::Piece piece;
    piece.degree = d;
    piece.constraint_idx.resize(d + 1);
    for (int k = 0; k <= d; ++k) {
      auto [i, j] = LocalNodes::edge_node_ij(d, l, k);
      const int slot = dofmap.disp.slots[lp][LocalNodes::index(d, i, j)];
      if (slot < 0) throw MeshError("contact node is not a free dof");
      Vec2 normal = mesh.edge_normal(t, l);
      const int comp = std::abs(normal[1]) > std::abs(normal[0]) ? 1 : 0;
      auto found = constraint_of_dof.find(DofMap::udof(slot, comp));
      if (found == constraint_of_dof.end())
        throw std::invalid_argument("constraints do not match the contact boundary");
      piece.constraint_idx[k] = found->second;
    }

    // 1D mass matrix of the edge trace basis, exact Gauss quadrature.
    const ShapeBasis& basis = shape_basis(d);
    const QuadratureRule1D rule = gauss_legendre(d + 1);
    const double half_len = 0.5 * mesh.edge_length(t, l);
    std::vector<double> val(basis.size());
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      basis.eval(rule.points[q], val.data());
      const double w = rule.weights[q] * half_len;
      for (int a = 0; a <= d; ++a)
        for (int b = 0; b <= d; ++b)
          mass(piece.constraint_idx[a], piece.constraint_idx[b]) += w * val[a] * val[b];
    }
    out.pieces_[static_cast<int>(ifc)] = std::move(piece);
  }

  // The discrete force balance tested with the contact-node basis functions:
  // all other basis functions have zero trace on the contact boundary, so
  // the boundary mass system below determines the multiplier completely.
  Eigen::VectorXd work = blocks.fe - blocks.A * sol.u + blocks.B.transpose() * sol.p;
  Eigen::VectorXd rho(m);
  for (int i = 0; i < m; ++i) rho[i] = work[constraints[i].dof] / constraints[i].coeff;

  Eigen::LDLT<Eigen::MatrixXd> chol(mass);
  if (chol.info() != Eigen::Success) throw SolverError("contact trace mass matrix is singular");
  out.nodal_ = chol.solve(rho);

  double integral = 0.0;
  for (const auto& [ifc, piece] : out.pieces_) {
    const EdgeInterface& iface = interfaces[ifc];
    const ShapeBasis& basis = shape_basis(piece.degree);
    const QuadratureRule1D rule = gauss_legendre(piece.degree + 1);
    const double half_len = 0.5 * mesh.edge_length(iface.a.elem, iface.a.edge);
    std::vector<double> val(basis.size());
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      basis.eval(rule.points[q], val.data());
      double lam = 0.0;
      for (int k = 0; k <= piece.degree; ++k) lam += val[k] * out.nodal_[piece.constraint_idx[k]];
      integral += rule.weights[q] * half_len * lam;
    }
  }
  out.integral_ = integral;
  return out;
}

}  // namespace biotsig
