#include "biotsig/fields.hpp"

#include <stdexcept>

#include "biotsig/lagrange.hpp"

namespace biotsig {

namespace {

double nodal_value(const ScalarLayout& layout, int slot, const Eigen::VectorXd& coeffs,
                   int stride, int offset) {
  // stride/offset pick a component out of interleaved displacement dofs.
  if (slot >= 0) return coeffs[stride * slot + offset];
  if (slot == kEliminatedSlot) return 0.0;
  double v = 0.0;
  for (const LinearTerm& t : layout.combo(slot)) v += t.weight * coeffs[stride * t.dof + offset];
  return v;
}

}  // namespace

FieldEvaluator::FieldEvaluator(const Mesh& mesh, const DofMap& dofmap, Eigen::VectorXd u,
                               Eigen::VectorXd p)
    : mesh_(&mesh), dofmap_(&dofmap), u_(std::move(u)), p_(std::move(p)) {
  if (u_.size() != dofmap.n_u() || p_.size() != dofmap.n_p())
    throw std::invalid_argument("FieldEvaluator: coefficient sizes do not match the dof map");
  const auto& leaves = mesh.leaves();
  u_nodal_.resize(leaves.size());
  p_nodal_.resize(leaves.size());
  for (std::size_t lp = 0; lp < leaves.size(); ++lp) {
    const Element& el = mesh.element(leaves[lp]);
    const int nu = LocalNodes::count(el.degree_u);
    const int np = LocalNodes::count(el.degree_p);
    u_nodal_[lp].resize(2, nu);
    p_nodal_[lp].resize(np);
    for (int n = 0; n < nu; ++n)
      for (int a = 0; a < 2; ++a)
        u_nodal_[lp](a, n) = nodal_value(dofmap.disp, dofmap.disp.slots[lp][n], u_, 2, a);
    for (int n = 0; n < np; ++n)
      p_nodal_[lp](n) = nodal_value(dofmap.pres, dofmap.pres.slots[lp][n], p_, 1, 0);
  }
}

FieldSample FieldEvaluator::eval(int elem, const Vec2& ref, bool with_second) const {
  auto it = dofmap_->leaf_pos.find(elem);
  if (it == dofmap_->leaf_pos.end())
    throw std::invalid_argument("FieldEvaluator: element is not a leaf of the bound mesh");
  const int lp = it->second;
  const Element& el = mesh_->element(elem);

  const Mat2 J = mesh_->jacobian(elem, ref);
  const Mat2 invJ = J.inverse();
  const Mat2 invJT = invJ.transpose();
  const Vec2 tw = mesh_->twist(elem);

  FieldSample s;
  // Reference-space value/gradient/Hessian accumulation per field.
  auto accumulate = [&](int degree, auto&& coeff, int comps, double* value, Vec2* grad,
                        Mat2* hess) {
    const ShapeBasis& basis = shape_basis(degree);
    const int n1 = degree + 1;
    std::vector<double> vx(n1), dx(n1), d2x(n1), vy(n1), dy(n1), d2y(n1);
    basis.eval(ref[0], vx.data(), dx.data(), with_second ? d2x.data() : nullptr);
    basis.eval(ref[1], vy.data(), dy.data(), with_second ? d2y.data() : nullptr);
    for (int c = 0; c < comps; ++c) {
      double v = 0.0;
      Vec2 g = Vec2::Zero();
      Mat2 h = Mat2::Zero();
      for (int j = 0; j < n1; ++j)
        for (int i = 0; i < n1; ++i) {
          const double cf = coeff(c, LocalNodes::index(degree, i, j));
          v += cf * vx[i] * vy[j];
          g[0] += cf * dx[i] * vy[j];
          g[1] += cf * vx[i] * dy[j];
          if (with_second) {
            h(0, 0) += cf * d2x[i] * vy[j];
            h(1, 1) += cf * vx[i] * d2y[j];
            h(0, 1) += cf * dx[i] * dy[j];
          }
        }
      h(1, 0) = h(0, 1);
      value[c] = v;
      // Physical gradient.
      const Vec2 pg = invJT * g;
      grad[c] = pg;
      if (with_second) {
        // Remove the curvature of the bilinear map, then push forward:
        // H_ref = J^T H_phys J + sum_a (d2 F_a) (grad_phys)_a, where the only
        // nonzero second derivative of F is the mixed twist term.
        Mat2 corr = Mat2::Zero();
        corr(0, 1) = corr(1, 0) = tw[0] * pg[0] + tw[1] * pg[1];
        hess[c] = invJT * (h - corr) * invJ;
      }
    }
  };

  double uv[2];
  Vec2 ug[2];
  Mat2 uh[2];
  accumulate(el.degree_u, [&](int c, int n) { return u_nodal_[lp](c, n); }, 2, uv, ug, uh);
  s.u = Vec2(uv[0], uv[1]);
  s.grad_u.row(0) = ug[0].transpose();
  s.grad_u.row(1) = ug[1].transpose();
  if (with_second) {
    s.hess_u0 = uh[0];
    s.hess_u1 = uh[1];
  }

  double pv;
  Vec2 pg;
  Mat2 ph;
  accumulate(el.degree_p, [&](int, int n) { return p_nodal_[lp](n); }, 1, &pv, &pg, &ph);
  s.p = pv;
  s.grad_p = pg;
  if (with_second) s.hess_p = ph;
  return s;
}

}  // namespace biotsig
