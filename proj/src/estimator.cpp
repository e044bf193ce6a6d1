#include "biotsig/estimator.hpp"

#include <cmath>

#include "biotsig/errors.hpp"
#include "biotsig/fields.hpp"
#include "biotsig/quadrature.hpp"

namespace biotsig {

namespace {

// Reference coordinates of a point on local edge l at edge parameter s,
// following the counter-clockwise corner traversal.
Vec2 edge_ref_point(int edge, double s) {
  switch (edge) {
    case 0: return Vec2(s, -1.0);
    case 1: return Vec2(1.0, s);
    case 2: return Vec2(-s, 1.0);
    default: return Vec2(-1.0, -s);
  }
}

// Edge parameter of a physical point on a straight element edge, computed
// from the projection onto the edge segment; robust to traversal direction.
double edge_param(const Mesh& mesh, int elem, int edge, const Vec2& x) {
  const auto& ec = Mesh::edge_corners()[edge];
  const Vec2 e0 = mesh.vertex(mesh.element(elem).vertex[ec[0]]);
  const Vec2 e1 = mesh.vertex(mesh.element(elem).vertex[ec[1]]);
  const Vec2 d = e1 - e0;
  return 2.0 * (x - e0).dot(d) / d.squaredNorm() - 1.0;
}

Vec2 traction(const FieldSample& f, const MaterialParams& mat, const Vec2& n) {
  Mat2 theta = 2.0 * mat.tau * f.strain() + mat.iota * f.div_u() * Mat2::Identity();
  return theta * n;
}

struct Segment {
  Vec2 p0, p1;      // physical endpoints, canonical (master) direction
  EdgeSide far;     // side opposite the master
};

std::vector<Segment> interface_segments(const Mesh& mesh, const EdgeInterface& e) {
  if (e.kind == EdgeInterface::Kind::Interior)
    return {{mesh.vertex(e.v0), mesh.vertex(e.v1), e.b}};
  return {{mesh.vertex(e.v0), mesh.vertex(e.hanging_vertex), e.slave[0]},
          {mesh.vertex(e.hanging_vertex), mesh.vertex(e.v1), e.slave[1]}};
}

FieldSample eval_on_edge(const FieldEvaluator& fields, int elem, int edge, const Vec2& x,
                         bool with_second = false) {
  const double s = edge_param(fields.mesh(), elem, edge, x);
  return fields.eval(elem, edge_ref_point(edge, s), with_second);
}

// Per-segment unweighted jump integrals against the master side `a`.
std::pair<double, double> segment_jump(const FieldEvaluator& fields, const MaterialParams& mat,
                                       const EdgeSide& a, const Segment& seg) {
  const Mesh& mesh = fields.mesh();
  const Vec2 n = mesh.edge_normal(a.elem, a.edge);
  const int ru = std::max(mesh.element(a.elem).degree_u, mesh.element(seg.far.elem).degree_u);
  const int rp = std::max(mesh.element(a.elem).degree_p, mesh.element(seg.far.elem).degree_p);
  const QuadratureRule1D rule = gauss_legendre(std::max(ru, rp) + 2);
  const double half_len = 0.5 * (seg.p1 - seg.p0).norm();

  double ju = 0.0, jp = 0.0;
  for (std::size_t q = 0; q < rule.points.size(); ++q) {
    const double s = rule.points[q];
    const Vec2 x = 0.5 * (1.0 - s) * seg.p0 + 0.5 * (1.0 + s) * seg.p1;
    const FieldSample fa = eval_on_edge(fields, a.elem, a.edge, x);
    const FieldSample fb = eval_on_edge(fields, seg.far.elem, seg.far.edge, x);
    const Vec2 tj = traction(fa, mat, n) - traction(fb, mat, n);
    const double pj = (mat.kappa * (fa.grad_p - fb.grad_p)).dot(n);
    const double w = rule.weights[q] * half_len;
    ju += w * tj.squaredNorm();
    jp += w * pj * pj;
  }
  return {ju, jp};
}

}  // namespace

std::pair<double, double> edge_jump(const Mesh& mesh, const DofMap& dofmap,
                                    const MaterialParams& mat, const VISolution& sol, int iface) {
  const EdgeInterface& e = mesh.interfaces().at(iface);
  if (e.kind == EdgeInterface::Kind::Boundary)
    throw std::invalid_argument("edge_jump: boundary edge has no jump");
  FieldEvaluator fields(mesh, dofmap, sol.u, sol.p);
  double ju = 0.0, jp = 0.0;
  for (const Segment& seg : interface_segments(mesh, e)) {
    auto [su, sp] = segment_jump(fields, mat, e.a, seg);
    ju += su;
    jp += sp;
  }
  return {ju, jp};
}

EstimatorReport estimate(const Mesh& mesh, const DofMap& dofmap, const MaterialParams& mat,
                         const VectorField& load_e, const ScalarField& load_f,
                         const ScalarField& gap, const VISolution& sol,
                         const ContactMultiplier& lambda) {
  const FieldEvaluator fields(mesh, dofmap, sol.u, sol.p);
  const auto& leaves = dofmap.leaf_elems;
  const int nleaf = static_cast<int>(leaves.size());

  EstimatorReport rep;
  rep.eta_u_sq = Eigen::VectorXd::Zero(nleaf);
  rep.eta_p_sq = Eigen::VectorXd::Zero(nleaf);
  const auto& interfaces = mesh.interfaces();
  rep.iface_jump_u_sq = Eigen::VectorXd::Zero(static_cast<int>(interfaces.size()));
  rep.iface_jump_p_sq = Eigen::VectorXd::Zero(static_cast<int>(interfaces.size()));

  // Volume residuals of the two strong equations, h_T^2/r_T^2 weighted.
  // div theta(u) expands to (tau + iota) grad(div u) + tau Laplace(u).
  for (int lp = 0; lp < nleaf; ++lp) {
    const int t = leaves[lp];
    const Element& el = mesh.element(t);
    const int nq = std::max(el.degree_u, el.degree_p) + 2;
    const QuadratureRule1D rule = gauss_legendre(nq);
    double vu = 0.0, vp = 0.0;
    for (std::size_t qj = 0; qj < rule.points.size(); ++qj)
      for (std::size_t qi = 0; qi < rule.points.size(); ++qi) {
        const Vec2 ref(rule.points[qi], rule.points[qj]);
        const FieldSample f = fields.eval(t, ref, true);
        const Vec2 x = mesh.map_to_physical(t, ref);
        const double w =
            rule.weights[qi] * rule.weights[qj] * mesh.jacobian(t, ref).determinant();

        const Vec2 grad_div(f.hess_u0(0, 0) + f.hess_u1(0, 1),
                            f.hess_u0(1, 0) + f.hess_u1(1, 1));
        const Vec2 lap_u(f.hess_u0.trace(), f.hess_u1.trace());
        const Vec2 ru =
            (mat.tau + mat.iota) * grad_div + mat.tau * lap_u - mat.alpha * f.grad_p + load_e(x);
        vu += w * ru.squaredNorm();

        const double div_kgrad = (mat.kappa.array() * f.hess_p.array()).sum();
        const double rp = div_kgrad - (mat.alpha * mat.alpha / mat.iota) * f.p -
                          mat.alpha * f.div_u() - load_f(x);
        vp += w * rp * rp;
      }
    const double h2 = mesh.diameter(t) * mesh.diameter(t);
    rep.eta_u_sq[lp] += h2 / (el.degree_u * el.degree_u) * vu;
    rep.eta_p_sq[lp] += h2 / (el.degree_p * el.degree_p) * vp;
  }

  for (std::size_t ifc = 0; ifc < interfaces.size(); ++ifc) {
    const EdgeInterface& e = interfaces[ifc];

    if (e.kind != EdgeInterface::Kind::Boundary) {
      // Interior jumps: every element sees its own boundary edge, so the
      // master counts the whole interface at its full edge length while a
      // hanging slave counts only its sub-edge; the 1/2 in h_e/(2 r_e)
      // makes the two viewpoints of a conforming edge sum to one share.
      int ru = mesh.element(e.a.elem).degree_u;
      int rp = mesh.element(e.a.elem).degree_p;
      const auto segs = interface_segments(mesh, e);
      std::vector<std::pair<double, double>> seg_jumps;
      for (const Segment& seg : segs) {
        seg_jumps.push_back(segment_jump(fields, mat, e.a, seg));
        ru = std::min(ru, mesh.element(seg.far.elem).degree_u);
        rp = std::min(rp, mesh.element(seg.far.elem).degree_p);
      }
      double ju = 0.0, jp = 0.0;
      for (auto [su, sp] : seg_jumps) ju += su, jp += sp;
      rep.iface_jump_u_sq[static_cast<int>(ifc)] = ju;
      rep.iface_jump_p_sq[static_cast<int>(ifc)] = jp;

      const double len_a = mesh.edge_length(e.a.elem, e.a.edge);
      const int pos_a = dofmap.leaf_pos.at(e.a.elem);
      rep.eta_u_sq[pos_a] += len_a / (2.0 * ru) * ju;
      rep.eta_p_sq[pos_a] += len_a / (2.0 * rp) * jp;
      for (std::size_t k = 0; k < segs.size(); ++k) {
        const EdgeSide& far = segs[k].far;
        const double len_b = mesh.edge_length(far.elem, far.edge);
        const int pos_b = dofmap.leaf_pos.at(far.elem);
        rep.eta_u_sq[pos_b] += len_b / (2.0 * ru) * seg_jumps[k].first;
        rep.eta_p_sq[pos_b] += len_b / (2.0 * rp) * seg_jumps[k].second;
      }
      continue;
    }

    // Boundary terms. Dirichlet (displacement) and prescribed-pressure edges
    // carry no indicator; traction, contact and flux edges test the natural
    // condition residuals with weight h_e/r_e.
    const int t = e.a.elem;
    const int l = e.a.edge;
    const Element& el = mesh.element(t);
    const int pos = dofmap.leaf_pos.at(t);
    const Vec2 n = mesh.edge_normal(t, l);
    const Vec2 p0 = mesh.vertex(e.v0), p1 = mesh.vertex(e.v1);
    const double len = (p1 - p0).norm();
    const double half_len = 0.5 * len;
    const bool contact = e.tags.disp == DispBC::Contact;
    const bool tract = e.tags.disp == DispBC::Traction;
    const bool flux = e.tags.pres == PresBC::Flux;
    if (!contact && !tract && !flux) continue;

    const QuadratureRule1D rule = gauss_legendre(std::max(el.degree_u, el.degree_p) + 2);
    double bu = 0.0, bp = 0.0;
    double mismatch = 0.0, penetration = 0.0, coupling = 0.0;
    const double hr_u = len / el.degree_u;
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const double s = rule.points[q];
      const Vec2 x = 0.5 * (1.0 - s) * p0 + 0.5 * (1.0 + s) * p1;
      const FieldSample f = fields.eval(t, edge_ref_point(l, s));
      const double w = rule.weights[q] * half_len;

      if (tract) {
        const Vec2 res = traction(f, mat, n) - mat.alpha * f.p * n;
        bu += w * res.squaredNorm();
      } else if (contact) {
        const double lam = lambda.eval(static_cast<int>(ifc), s);
        const Vec2 res = traction(f, mat, n) - (mat.alpha * f.p - lam) * n;
        bu += w * res.squaredNorm();

        // Cut-off functions evaluated pointwise at the quadrature points;
        // the local 45/469-scaled weights use this edge's h and r.
        const double un = f.u.dot(n);
        const double g = gap(x);
        const double mu = std::max(0.0, lam - (45.0 / 469.0) / hr_u * (g - un));
        const double zeta = std::max(un - g, -(45.0 / 469.0) * hr_u * lam);
        mismatch += w * hr_u * (lam - mu) * (lam - mu);  // weight h/r
        penetration += w / hr_u * zeta * zeta;           // weight r/h
        coupling += w * (90.0 / 469.0) * (lam * zeta + mu * (g - un));
      }
      if (flux) {
        const double res = (mat.kappa * f.grad_p).dot(n);
        bp += w * res * res;
      }
    }
    rep.eta_u_sq[pos] += hr_u * bu;
    rep.eta_p_sq[pos] += len / el.degree_p * bp;
    rep.contact_mismatch_sq += mismatch;
    rep.contact_penetration_sq += penetration;
    rep.contact_coupling += coupling;
  }
  return rep;
}

}  // namespace biotsig
