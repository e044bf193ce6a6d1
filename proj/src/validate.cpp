#include "biotsig/validate.hpp"

#include <json.hpp>

#include <Eigen/SparseCholesky>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <utility>

#include "biotsig/errors.hpp"

namespace biotsig {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// mt19937 output is pinned by the standard; mapping it to ranges by hand
// keeps instances identical across standard libraries, which
// std::uniform_*_distribution does not guarantee.
double unit_real(std::mt19937& g) { return static_cast<double>(g()) * (1.0 / 4294967296.0); }

double uniform(std::mt19937& g, double lo, double hi) { return lo + (hi - lo) * unit_real(g); }

int uniform_int(std::mt19937& g, int lo, int hi) {
  return lo + static_cast<int>(g() % static_cast<unsigned>(hi - lo + 1));
}

Eigen::VectorXd random_vector(std::mt19937& g, int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = uniform(g, -1.0, 1.0);
  return v;
}

double inf_norm(const Eigen::VectorXd& v) {
  return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0;
}

ValidationInstance finish_instance(Mesh mesh, const MaterialParams& mat, const VectorField& fe,
                                   const ScalarField& ff, const ScalarField& gap) {
  DofMap dofmap = build_dof_map(mesh);
  SystemBlocks blocks = assemble(mesh, dofmap, mat, fe, ff, /*with_gram=*/true);
  std::vector<ContactConstraint> cons = contact_constraints(mesh, dofmap, gap);
  VISolveOptions opts;
  opts.residual_tol = 1e-12;
  VISolution sol = solve_vi(blocks, cons, opts);
  return {std::move(mesh), std::move(dofmap), mat,
          std::move(blocks), std::move(cons), std::move(sol)};
}

}  // namespace

ValidationInstance random_instance(unsigned seed) {
  std::mt19937 g(seed);

  const int m = uniform_int(g, 1, 4);
  Mesh mesh = Mesh::unit_square(m);
  const int passes = uniform_int(g, 0, 3);
  for (int pass = 0; pass < passes; ++pass) {
    std::vector<int> marks;
    for (int e : mesh.leaves())
      if (unit_real(g) < 0.35) marks.push_back(e);
    if (!marks.empty()) mesh = mesh.refined(marks);
  }
  {
    const std::vector<int> leaves = mesh.leaves();
    for (int e : leaves) {
      const int r = uniform_int(g, 1, 3);
      if (r > mesh.element(e).degree_u) mesh = mesh.with_degree(e, r);
    }
  }

  MaterialParams mat;
  mat.tau = uniform(g, 0.5, 2.0);
  mat.iota = uniform(g, 0.5, 2.0);
  mat.alpha = uniform(g, 0.5, 1.5);
  mat.kappa = Mat2::Zero();
  mat.kappa(0, 0) = uniform(g, 0.5, 2.0);
  mat.kappa(1, 1) = uniform(g, 0.5, 2.0);

  // Affine loads; the vertical component pushes downward so that a fair share
  // of instances actually activates the contact condition.
  const double a00 = uniform(g, -2.0, 2.0);
  const double a01 = uniform(g, -2.0, 2.0);
  const double a02 = uniform(g, -2.0, 2.0);
  const double a10 = uniform(g, -3.0, 0.0);
  const double a11 = uniform(g, -2.0, 2.0);
  const double a12 = uniform(g, -2.0, 2.0);
  VectorField fe = [=](const Vec2& x) {
    return Vec2(a00 + a01 * x[0] + a02 * x[1], a10 + a11 * x[0] + a12 * x[1]);
  };
  const double f0 = uniform(g, -2.0, 2.0);
  const double f1 = uniform(g, -2.0, 2.0);
  const double f2 = uniform(g, -2.0, 2.0);
  ScalarField ff = [=](const Vec2& x) { return f0 + f1 * x[0] + f2 * x[1]; };

  // Nonnegative gap, so v = 0 stays feasible and the energy and stability
  // inequalities below are forced.
  const double g0 = uniform(g, 0.0, 0.4);
  const double g1 = uniform(g, 0.0, 2.0);
  const double gc = uniform(g, 0.3, 0.7);
  ScalarField gap = [=](const Vec2& x) {
    const double d = x[0] - gc;
    return g0 + g1 * d * d;
  };

  return finish_instance(std::move(mesh), mat, fe, ff, gap);
}

ValidationInstance zero_instance() {
  Mesh mesh = Mesh::unit_square(2).refined({0});
  MaterialParams mat;
  VectorField fe = [](const Vec2&) { return Vec2(0.0, 0.0); };
  ScalarField ff = [](const Vec2&) { return 0.0; };
  ScalarField gap = [](const Vec2&) { return 0.25; };
  return finish_instance(std::move(mesh), mat, fe, ff, gap);
}

double check_b_continuity(const ValidationInstance& inst, std::mt19937& gen, int probes) {
  double worst = -kInf;
  for (int k = 0; k < probes; ++k) {
    const Eigen::VectorXd v = random_vector(gen, inst.dofmap.n_u());
    const Eigen::VectorXd q = random_vector(gen, inst.dofmap.n_p());
    const double lhs = std::abs(q.dot(inst.blocks.B * v));
    const double rhs =
        std::sqrt(v.dot(inst.blocks.A * v)) * std::sqrt(q.dot(inst.blocks.C * q));
    worst = std::max(worst, (lhs - rhs) / (1.0 + lhs + rhs));
  }
  return worst;
}

double check_norm_bounds(const ValidationInstance& inst, std::mt19937& gen, int probes) {
  const MaterialParams& mat = inst.material;
  const double cu = 2.0 * (mat.tau + mat.iota);
  const double half_tr = 0.5 * (mat.kappa(0, 0) + mat.kappa(1, 1));
  const double lam_max =
      half_tr + std::sqrt(std::max(0.0, half_tr * half_tr - mat.kappa.determinant()));
  const double cp = std::max(mat.alpha * mat.alpha / mat.iota, lam_max);

  double worst = -kInf;
  for (int k = 0; k < probes; ++k) {
    const Eigen::VectorXd v = random_vector(gen, inst.dofmap.n_u());
    const double au = v.dot(inst.blocks.A * v);
    const double gu = cu * v.dot(inst.blocks.gram_u * v);
    worst = std::max(worst, (au - gu) / (1.0 + au + gu));

    const Eigen::VectorXd q = random_vector(gen, inst.dofmap.n_p());
    const double cq = q.dot(inst.blocks.C * q);
    const double gp = cp * q.dot(inst.blocks.gram_p * q);
    worst = std::max(worst, (cq - gp) / (1.0 + cq + gp));
  }
  return worst;
}

double check_schur_bounds(const ValidationInstance& inst, std::mt19937& gen, int probes) {
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol(inst.blocks.C);
  if (chol.info() != Eigen::Success) return kInf;
  double worst = -kInf;
  for (int k = 0; k < probes; ++k) {
    const Eigen::VectorXd x = random_vector(gen, inst.dofmap.n_u());
    const double ax = x.dot(inst.blocks.A * x);
    const Eigen::VectorXd bx = inst.blocks.B * x;
    const double sx = ax + bx.dot(chol.solve(bx));
    const double scale = 1.0 + ax + sx;
    worst = std::max(worst, (ax - sx) / scale);        // ellipticity constant one
    worst = std::max(worst, (sx - 2.0 * ax) / scale);  // continuity constant two
  }
  return worst;
}

double check_equality_residual(const ValidationInstance& inst) {
  const Eigen::VectorXd& u = inst.solution.u;
  const Eigen::VectorXd& p = inst.solution.p;
  const Eigen::VectorXd Au = inst.blocks.A * u;
  const Eigen::VectorXd Btp = inst.blocks.B.transpose() * p;
  const Eigen::VectorXd Bu = inst.blocks.B * u;
  const Eigen::VectorXd Cp = inst.blocks.C * p;

  Eigen::VectorXd ru = Au - Btp - inst.blocks.fe;
  for (std::size_t k = 0; k < inst.constraints.size(); ++k)
    ru[inst.constraints[k].dof] += inst.solution.lambda[static_cast<int>(k)] *
                                   inst.constraints[k].coeff;
  const Eigen::VectorXd rp = -Bu - Cp - inst.blocks.ff;

  const double scale = 1.0 + inf_norm(Au) + inf_norm(Btp) + inf_norm(inst.blocks.fe) +
                       inf_norm(Bu) + inf_norm(Cp) + inf_norm(inst.blocks.ff);
  return std::max(inf_norm(ru), inf_norm(rp)) / scale;
}

double check_complementarity(const ValidationInstance& inst) {
  const double lam_scale = 1.0 + inf_norm(inst.solution.lambda);
  double worst = inst.constraints.empty() ? 0.0 : -kInf;
  for (std::size_t k = 0; k < inst.constraints.size(); ++k) {
    const ContactConstraint& c = inst.constraints[k];
    const double value = c.coeff * inst.solution.u[c.dof];
    const double lam = inst.solution.lambda[static_cast<int>(k)];
    const double bscale = 1.0 + std::abs(c.bound);
    worst = std::max(worst, (value - c.bound) / bscale);
    worst = std::max(worst, -lam / lam_scale);
    worst = std::max(worst, std::abs(lam * (c.bound - value)) / (lam_scale * bscale));
  }
  return worst;
}

double check_energy_inequality(const ValidationInstance& inst) {
  const Eigen::VectorXd& u = inst.solution.u;
  const Eigen::VectorXd& p = inst.solution.p;
  const double au = u.dot(inst.blocks.A * u);
  const double cp = p.dot(inst.blocks.C * p);
  const double fu = inst.blocks.fe.dot(u);
  const double fp = inst.blocks.ff.dot(p);
  return (au + cp + fp - fu) /
         (1.0 + std::abs(au) + std::abs(cp) + std::abs(fu) + std::abs(fp));
}

double check_stability(const ValidationInstance& inst) {
  const Eigen::VectorXd& u = inst.solution.u;
  const Eigen::VectorXd& p = inst.solution.p;
  const double lhs = std::sqrt(u.dot(inst.blocks.A * u) + p.dot(inst.blocks.C * p));
  const double rhs = dual_norm_u(inst.blocks, inst.blocks.fe) +
                     dual_norm_p(inst.blocks, inst.blocks.ff);
  return (lhs - rhs) / (1.0 + lhs + rhs);
}

double check_uniqueness(const ValidationInstance& inst) {
  VISolveOptions opts;
  opts.residual_tol = 1e-12;
  opts.initial_active.assign(inst.constraints.size(), 0);
  try {
    const VISolution a = solve_vi(inst.blocks, inst.constraints, opts);
    opts.initial_active.assign(inst.constraints.size(), 1);
    const VISolution b = solve_vi(inst.blocks, inst.constraints, opts);
    const double scale = 1.0 + inf_norm(a.u) + inf_norm(a.p) + inf_norm(a.lambda);
    return std::max({inf_norm(a.u - b.u), inf_norm(a.p - b.p), inf_norm(a.lambda - b.lambda)}) /
           scale;
  } catch (const SolverError&) {
    return kInf;
  }
}

bool PropertyReport::all_passed() const {
  for (const PropertyResult& pr : properties)
    if (!pr.passed()) return false;
  return true;
}

PropertyReport run_properties(unsigned seed, int count) {
  if (count < 0) throw std::invalid_argument("instance count must be nonnegative");

  struct Def {
    const char* name;
    const char* statement;
  };
  constexpr std::array<Def, 8> defs{{
      {"b-continuity", "|b(v,q)| <= ||v||_a ||q||_c"},
      {"norm-upper-bounds",
       "a(v,v) <= 2(tau+iota) ||v||_1^2 ; c(q,q) <= max(alpha^2/iota, lam_max kappa) ||q||_1^2"},
      {"schur-bounds", "||v||_a^2 <= v^T (A + B^T C^-1 B) v <= 2 ||v||_a^2"},
      {"equality-residual", "A u - B^T p + G^T lambda = fe ; -B u - C p = ff"},
      {"complementarity", "G u <= g, lambda >= 0, lambda_i (g_i - (G u)_i) = 0"},
      {"energy-inequality", "||u||_a^2 + ||p||_c^2 + (ff, p) <= (fe, u)"},
      {"stability", "sqrt(||u||_a^2 + ||p||_c^2) <= ||fe||_a* + ||ff||_c*"},
      {"uniqueness", "active-set limits from the all-inactive and all-active starts coincide"},
  }};

  PropertyReport rep;
  rep.seed = seed;
  rep.instance_count = count + 1;  // the zero instance plus `count` random ones
  for (const Def& d : defs)
    rep.properties.push_back({d.name, d.statement, rep.instance_count, -kInf, kPropertyTol});

  std::mt19937 master(seed);
  std::mt19937 probe(seed ^ 0x5bd1e995u);
  for (int k = 0; k <= count; ++k) {
    std::array<double, 8> viol;
    viol.fill(kInf);
    try {
      const ValidationInstance inst = k == 0 ? zero_instance() : random_instance(master());
      viol[0] = check_b_continuity(inst, probe);
      viol[1] = check_norm_bounds(inst, probe);
      viol[2] = check_schur_bounds(inst, probe);
      viol[3] = check_equality_residual(inst);
      viol[4] = check_complementarity(inst);
      viol[5] = check_energy_inequality(inst);
      viol[6] = check_stability(inst);
      viol[7] = check_uniqueness(inst);
    } catch (const std::exception&) {
      // A solver failure counts against every property of this instance; the
      // report stays complete instead of aborting the suite.
    }
    for (std::size_t i = 0; i < viol.size(); ++i)
      rep.properties[i].max_violation = std::max(rep.properties[i].max_violation, viol[i]);
  }
  return rep;
}

std::string to_table(const PropertyReport& rep) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "property suite: seed %u, %d instances (1 zero + %d random)\n",
                rep.seed, rep.instance_count, rep.instance_count - 1);
  out += line;
  out += std::string(78, '-');
  out += '\n';
  for (const PropertyResult& pr : rep.properties) {
    std::snprintf(line, sizeof line, "%-20s  max violation %10.3e   tol %7.1e   %s\n",
                  pr.name.c_str(), pr.max_violation, pr.tolerance,
                  pr.passed() ? "pass" : "FAIL");
    out += line;
    out += "    ";
    out += pr.statement;
    out += '\n';
  }
  out += std::string(78, '-');
  out += '\n';
  out += rep.all_passed() ? "all properties passed\n" : "PROPERTY FAILURES PRESENT\n";
  return out;
}

std::string to_json(const PropertyReport& rep) {
  nlohmann::json j;
  j["seed"] = rep.seed;
  j["instance_count"] = rep.instance_count;
  j["all_passed"] = rep.all_passed();
  j["properties"] = nlohmann::json::array();
  for (const PropertyResult& pr : rep.properties)
    j["properties"].push_back({{"name", pr.name},
                               {"statement", pr.statement},
                               {"instances", pr.instances},
                               {"max_violation", pr.max_violation},
                               {"tolerance", pr.tolerance},
                               {"passed", pr.passed()}});
  return j.dump(2) + "\n";
}

}  // namespace biotsig
