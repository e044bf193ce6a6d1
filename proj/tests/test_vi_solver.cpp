#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "biotsig/assembly.hpp"
#include "biotsig/errors.hpp"
#include "biotsig/lagrange.hpp"
#include "biotsig/quadrature.hpp"
#include "biotsig/vi_solver.hpp"
#include "oracles.hpp"

using namespace biotsig;
using testing::enumerate_vi;
using testing::example_gap;
using testing::with_uniform_degree;

namespace {

struct Instance {
  Mesh mesh;
  DofMap dm;
  SystemBlocks blocks;
  std::vector<ContactConstraint> cons;
};

Instance make_instance(Mesh mesh, const Vec2& fe, double ff,
                       const std::function<double(const Vec2&)>& gap) {
  Instance inst{std::move(mesh), {}, {}, {}};
  inst.dm = build_dof_map(inst.mesh);
  inst.blocks = assemble(inst.mesh, inst.dm, MaterialParams{},
                         [fe](const Vec2&) { return fe; }, [ff](const Vec2&) { return ff; });
  inst.cons = contact_constraints(inst.mesh, inst.dm, gap);
  return inst;
}

}  // namespace

TEST_CASE("solve_linear matches a dense direct solve and satisfies both equations") {
  for (int r : {1, 2}) {
    Mesh mesh = with_uniform_degree(Mesh::unit_square(2), r);
    DofMap dm = build_dof_map(mesh);
    SystemBlocks blocks =
        assemble(mesh, dm, MaterialParams{}, [](const Vec2& x) { return Vec2(x[1], -1 + x[0]); },
                 [](const Vec2& x) { return x[0] * x[1] - 0.5; });
    auto [u, p] = solve_linear(blocks);

    const int nu = dm.n_u(), np = dm.n_p();
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nu + np, nu + np);
    K.topLeftCorner(nu, nu) = Eigen::MatrixXd(blocks.A);
    K.topRightCorner(nu, np) = -Eigen::MatrixXd(blocks.B).transpose();
    K.bottomLeftCorner(np, nu) = -Eigen::MatrixXd(blocks.B);
    K.bottomRightCorner(np, np) = -Eigen::MatrixXd(blocks.C);
    Eigen::VectorXd rhs(nu + np);
    rhs << blocks.fe, blocks.ff;
    Eigen::VectorXd dense = K.fullPivLu().solve(rhs);
    CHECK((u - dense.head(nu)).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK((p - dense.tail(np)).lpNorm<Eigen::Infinity>() < 1e-10);

    CHECK((blocks.A * u - blocks.B.transpose() * p - blocks.fe).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK((-blocks.B * u - blocks.C * p - blocks.ff).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("an unconstrained or slack contact problem reduces to the linear solve") {
  Instance inst = make_instance(Mesh::unit_square(2), Vec2(0, -1), -1.0,
                                [](const Vec2&) { return 1e6; });
  auto [u0, p0] = solve_linear(inst.blocks);

  VISolution none = solve_vi(inst.blocks, {});
  CHECK((none.u - u0).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((none.p - p0).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK(none.lambda.size() == 0);

  VISolution slack = solve_vi(inst.blocks, inst.cons);
  CHECK((slack.u - u0).lpNorm<Eigen::Infinity>() < 1e-11);
  CHECK(slack.lambda.lpNorm<Eigen::Infinity>() == 0.0);
  for (char a : slack.active) CHECK(a == 0);
}

TEST_CASE("active-set solves match exhaustive enumeration on small instances") {
  std::vector<Instance> instances;
  instances.push_back(make_instance(Mesh::unit_square(1), Vec2(0, -1), -1.0, example_gap));
  instances.push_back(make_instance(Mesh::unit_square(2), Vec2(0, -3), -1.0,
                                    [](const Vec2& x) { return 0.05 * (1.0 + x[0]); }));
  instances.push_back(make_instance(with_uniform_degree(Mesh::unit_square(1), 2), Vec2(0, -2),
                                    -1.0, example_gap));
  instances.push_back(make_instance(Mesh::unit_square(2), Vec2(0, -1), 2.0,
                                    [](const Vec2&) { return 0.0; }));
  instances.push_back(make_instance(with_uniform_degree(Mesh::unit_square(2), 2), Vec2(0, -4),
                                    0.0, [](const Vec2& x) { return 0.02 + 0.2 * x[0] * x[0]; }));

  for (const Instance& inst : instances) {
    CAPTURE(inst.cons.size());
    REQUIRE(inst.cons.size() <= 12);
    auto oracle = enumerate_vi(inst.blocks, inst.cons);
    REQUIRE(oracle.candidates >= 1);

    VISolution sol = solve_vi(inst.blocks, inst.cons);
    CHECK((sol.u - oracle.u).lpNorm<Eigen::Infinity>() < 1e-9);
    CHECK((sol.p - oracle.p).lpNorm<Eigen::Infinity>() < 1e-9);
    CHECK((sol.lambda - oracle.lambda).lpNorm<Eigen::Infinity>() < 1e-9);
  }
}

TEST_CASE("converged solutions satisfy the KKT conditions to solver accuracy") {
  Instance inst = make_instance(Mesh::unit_square(8), Vec2(0, -1), -1.0, example_gap);
  VISolution sol = solve_vi(inst.blocks, inst.cons);

  CHECK(sol.residuals.stationarity < 1e-10 * (1.0 + inst.blocks.fe.lpNorm<Eigen::Infinity>()));
  CHECK(sol.residuals.feasibility < 1e-10);
  CHECK(sol.residuals.complementarity < 1e-10);
  CHECK(sol.lambda.minCoeff() >= 0.0);

  // Pinned dofs sit exactly on the obstacle.
  for (std::size_t i = 0; i < inst.cons.size(); ++i) {
    if (!sol.active[i]) continue;
    const ContactConstraint& c = inst.cons[i];
    CHECK(std::abs(c.coeff * sol.u[c.dof] - c.bound) < 1e-11);
    CHECK(sol.lambda[i] > 0.0);
  }
}

TEST_CASE("the example load presses the middle of the bottom edge into contact") {
  Instance inst = make_instance(Mesh::unit_square(16), Vec2(0, -1), -1.0, example_gap);
  VISolution sol = solve_vi(inst.blocks, inst.cons);

  // Collect the active region as x-coordinates; it must be a nonempty
  // contiguous interval straddling the gap minimum at x1 = 0.5.
  std::vector<double> active_x, all_x;
  for (std::size_t i = 0; i < inst.cons.size(); ++i) {
    all_x.push_back(inst.cons[i].point[0]);
    if (sol.active[i]) active_x.push_back(inst.cons[i].point[0]);
  }
  REQUIRE(!active_x.empty());
  std::sort(active_x.begin(), active_x.end());
  CHECK(active_x.front() < 0.5);
  CHECK(active_x.back() > 0.5);
  const double h = 1.0 / 16;
  for (std::size_t i = 1; i < active_x.size(); ++i)
    CHECK(active_x[i] - active_x[i - 1] == doctest::Approx(h).epsilon(1e-9));

  // The discrete multiplier is nonnegative by construction; the L2-type
  // reconstruction undershoots slightly at the free boundary of the contact
  // zone (that is what the estimator's cut-off handles), so its sign check
  // is qualitative: small relative to the peak.
  CHECK(sol.lambda.minCoeff() >= 0.0);
  ContactMultiplier lam = reconstruct_lambda(inst.mesh, inst.dm, inst.blocks, inst.cons, sol);
  CHECK(lam.nodal().maxCoeff() > 1.0);
  CHECK(lam.nodal().minCoeff() > -0.1 * lam.nodal().maxCoeff());
  CHECK(lam.integral() > 0.0);
  // The reconstruction redistributes but preserves the total contact force:
  // integrating the boundary mass identity against 1 gives sum(lambda_i).
  CHECK(lam.integral() == doctest::Approx(sol.lambda.sum()).epsilon(1e-10));

  // Evaluate at x1 = 0.5 through the owning edge.
  bool found = false;
  const auto& interfaces = inst.mesh.interfaces();
  for (std::size_t ifc = 0; ifc < interfaces.size(); ++ifc) {
    const EdgeInterface& e = interfaces[ifc];
    if (e.kind != EdgeInterface::Kind::Boundary || e.tags.disp != DispBC::Contact) continue;
    Vec2 a = inst.mesh.vertex(e.v0), b = inst.mesh.vertex(e.v1);
    double lo = std::min(a[0], b[0]), hi = std::max(a[0], b[0]);
    if (lo <= 0.5 && 0.5 <= hi) {
      double t = 2.0 * (0.5 - a[0]) / (b[0] - a[0]) - 1.0;
      CHECK(lam.eval(static_cast<int>(ifc), t) > 0.0);
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("multiplier reconstruction satisfies the discrete force balance") {
  Instance inst = make_instance(with_uniform_degree(Mesh::unit_square(4), 2), Vec2(0, -2), -1.0,
                                [](const Vec2& x) { return 0.05 + 0.1 * x[0]; });
  VISolution sol = solve_vi(inst.blocks, inst.cons);
  ContactMultiplier lam = reconstruct_lambda(inst.mesh, inst.dm, inst.blocks, inst.cons, sol);

  // Independent check of <lambda, phi_j> = (fe - A u + B^T p)_{k_j} / c_j
  // with an over-integrated quadrature and a fresh basis evaluation.
  Eigen::VectorXd work =
      inst.blocks.fe - inst.blocks.A * sol.u + inst.blocks.B.transpose() * sol.p;
  Eigen::VectorXd lhs = Eigen::VectorXd::Zero(inst.cons.size());

  const auto& interfaces = inst.mesh.interfaces();
  for (std::size_t ifc = 0; ifc < interfaces.size(); ++ifc) {
    const EdgeInterface& e = interfaces[ifc];
    if (e.kind != EdgeInterface::Kind::Boundary || e.tags.disp != DispBC::Contact) continue;
    int t = e.a.elem, l = e.a.edge;
    int d = inst.mesh.element(t).degree_u;
    int lp = inst.dm.leaf_pos.at(t);
    const ShapeBasis& basis = shape_basis(d);
    QuadratureRule1D rule = gauss_legendre(d + 3);
    double half_len = 0.5 * inst.mesh.edge_length(t, l);
    std::vector<double> val(basis.size());
    std::unordered_map<int, std::size_t> by_dof;
    for (std::size_t i = 0; i < inst.cons.size(); ++i) by_dof[inst.cons[i].dof] = i;
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      basis.eval(rule.points[q], val.data());
      double lv = lam.eval(static_cast<int>(ifc), rule.points[q]);
      for (int k = 0; k <= d; ++k) {
        auto [i, j] = LocalNodes::edge_node_ij(d, l, k);
        int slot = inst.dm.disp.slots[lp][LocalNodes::index(d, i, j)];
        std::size_t ci = by_dof.at(DofMap::udof(slot, 1));
        lhs[ci] += rule.weights[q] * half_len * lv * val[k];
      }
    }
  }
  for (std::size_t i = 0; i < inst.cons.size(); ++i) {
    double rho = work[inst.cons[i].dof] / inst.cons[i].coeff;
    CHECK(lhs[i] == doctest::Approx(rho).epsilon(1e-9).scale(1.0));
  }
}

TEST_CASE("warm starts from the converged active set finish in one sweep") {
  Instance inst = make_instance(Mesh::unit_square(8), Vec2(0, -1), -1.0, example_gap);
  VISolution first = solve_vi(inst.blocks, inst.cons);
  CHECK(first.iterations >= 1);

  VISolveOptions opts;
  opts.initial_active = first.active;
  VISolution second = solve_vi(inst.blocks, inst.cons, opts);
  CHECK(second.iterations == 1);
  CHECK((second.u - first.u).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((second.lambda - first.lambda).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("solver runs are deterministic") {
  Instance inst = make_instance(Mesh::unit_square(4), Vec2(0, -1), -1.0, example_gap);
  VISolution a = solve_vi(inst.blocks, inst.cons);
  VISolution b = solve_vi(inst.blocks, inst.cons);
  CHECK(a.u == b.u);
  CHECK(a.p == b.p);
  CHECK(a.lambda == b.lambda);
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("input validation and iteration caps raise the documented errors") {
  Instance inst = make_instance(Mesh::unit_square(2), Vec2(0, -1), -1.0, example_gap);

  VISolveOptions cap;
  cap.max_iterations = 0;
  CHECK_THROWS_AS(solve_vi(inst.blocks, inst.cons, cap), NoConvergenceError);

  VISolveOptions bad_warm;
  bad_warm.initial_active.assign(inst.cons.size() + 1, 0);
  CHECK_THROWS_AS(solve_vi(inst.blocks, inst.cons, bad_warm), std::invalid_argument);

  auto dup = inst.cons;
  dup.push_back(dup.front());
  CHECK_THROWS_AS(solve_vi(inst.blocks, dup), std::invalid_argument);

  auto oob = inst.cons;
  oob.front().dof = inst.dm.n_u() + 3;
  CHECK_THROWS_AS(solve_vi(inst.blocks, oob), std::invalid_argument);
}
