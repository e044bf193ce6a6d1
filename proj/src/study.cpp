#include "biotsig/study.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <unordered_map>
#include <utility>

#include "biotsig/errors.hpp"
#include "biotsig/lagrange.hpp"
#include "biotsig/quadrature.hpp"
#include "biotsig/vtk.hpp"

namespace biotsig {

namespace {

constexpr double kPi = std::numbers::pi;

// sin^2(pi t) and its first two derivatives.
double sq(double t) {
  double v = std::sin(kPi * t);
  return v * v;
}
double dsq(double t) { return kPi * std::sin(2.0 * kPi * t); }
double ddsq(double t) { return 2.0 * kPi * kPi * std::cos(2.0 * kPi * t); }

}  // namespace

Problem contact_problem() {
  Problem prob;
  prob.name = "contact";
  prob.load_e = [](const Vec2&) { return Vec2(0.0, -1.0); };
  prob.load_f = [](const Vec2&) { return -1.0; };
  prob.gap = [](const Vec2& x) { return 3.0 * (1.0 - std::cos(x[0] - 0.5)); };
  return prob;
}

Vec2 manufactured_u(const Vec2& x) {
  double w = sq(x[0]) * sq(x[1]);
  return Vec2(w, w);
}

double manufactured_p(const Vec2& x) { return sq(x[0]) * sq(x[1]); }

Problem manufactured_problem() {
  Problem prob;
  prob.name = "manufactured";
  const double tau = prob.material.tau;
  const double iota = prob.material.iota;
  const double alpha = prob.material.alpha;
  // Forcing from the strong equations -div theta(u) + alpha grad p = f_e and
  // div(kappa grad p) - (alpha^2/iota) p - alpha div u = f_f for the fields
  // u1 = u2 = p = sin^2(pi x1) sin^2(pi x2).
  prob.load_e = [=](const Vec2& x) {
    double sx = sq(x[0]), sy = sq(x[1]);
    double dx = dsq(x[0]), dy = dsq(x[1]);
    double ddx = ddsq(x[0]), ddy = ddsq(x[1]);
    double lap = ddx * sy + sx * ddy;
    Vec2 grad_div(ddx * sy + dx * dy, dx * dy + sx * ddy);
    Vec2 grad_p(dx * sy, sx * dy);
    return Vec2(-tau * lap - (tau + iota) * grad_div[0] + alpha * grad_p[0],
                -tau * lap - (tau + iota) * grad_div[1] + alpha * grad_p[1]);
  };
  prob.load_f = [=](const Vec2& x) {
    double sx = sq(x[0]), sy = sq(x[1]);
    double lap = ddsq(x[0]) * sy + sx * ddsq(x[1]);
    double div_u = dsq(x[0]) * sy + sx * dsq(x[1]);
    return lap - (alpha * alpha / iota) * sx * sy - alpha * div_u;
  };
  prob.gap = [](const Vec2&) { return 1.0; };
  return prob;
}

Problem problem_by_name(const std::string& name) {
  if (name == "contact") return contact_problem();
  if (name == "manufactured") return manufactured_problem();
  throw std::invalid_argument("unknown problem preset: " + name);
}

Scheme scheme_by_name(const std::string& name) {
  if (name == "h-uniform") return Scheme::HUniform;
  if (name == "r-uniform") return Scheme::RUniform;
  if (name == "h-adaptive") return Scheme::HAdaptive;
  if (name == "hp-adaptive") return Scheme::HpAdaptive;
  throw std::invalid_argument("unknown scheme: " + name);
}

std::string to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::HUniform: return "h-uniform";
    case Scheme::RUniform: return "r-uniform";
    case Scheme::HAdaptive: return "h-adaptive";
    case Scheme::HpAdaptive: return "hp-adaptive";
  }
  throw std::invalid_argument("unknown scheme");
}

void StudyConfig::validate() const {
  if (!(theta > 0.0 && theta <= 1.0))
    throw std::invalid_argument("StudyConfig: theta must be in (0, 1]");
  if (degree < 1 || degree > kMaxDegree)
    throw std::invalid_argument("StudyConfig: degree outside 1.." + std::to_string(kMaxDegree));
  if (initial_cells < 1) throw std::invalid_argument("StudyConfig: initial_cells must be >= 1");
  if (max_dof < 1 || max_reference_dof < 1)
    throw std::invalid_argument("StudyConfig: dof caps must be positive");
  if (!(solver_tol > 0.0)) throw std::invalid_argument("StudyConfig: solver_tol must be positive");
  if (!problem.load_e || !problem.load_f || !problem.gap)
    throw std::invalid_argument("StudyConfig: problem fields must be callable");
  problem.material.validate();
}

StudyConfig make_config(Problem problem, Scheme scheme, int degree) {
  StudyConfig cfg;
  cfg.problem = std::move(problem);
  cfg.scheme = scheme;
  cfg.degree = degree;
  switch (scheme) {
    case Scheme::RUniform:
      cfg.initial_cells = 4;
      break;
    case Scheme::HpAdaptive:
      cfg.degree = std::max(degree, 2);
      cfg.initial_cells = 2;
      break;
    default:
      cfg.initial_cells = 2;
      break;
  }
  return cfg;
}

std::optional<double> eoc_step(long n_prev, double err_prev, long n_cur, double err_cur) {
  if (!(err_prev > 0.0) || !(err_cur > 0.0) || n_prev == n_cur) return std::nullopt;
  return std::log(err_prev / err_cur) / std::log(double(n_cur) / double(n_prev));
}

void compute_eoc(std::vector<ConvergenceRecord>& records) {
  for (std::size_t k = 0; k < records.size(); ++k) {
    if (k == 0)
      records[k].eoc = std::nullopt;
    else
      records[k].eoc =
          eoc_step(records[k - 1].n_dof, records[k - 1].err, records[k].n_dof, records[k].err);
  }
}

// --- energy error over nested meshes ---------------------------------------------

namespace {

void check_nested(const Mesh& coarse, const Mesh& fine) {
  if (coarse.element_count() > fine.element_count() ||
      coarse.vertex_count() > fine.vertex_count())
    throw std::invalid_argument("energy_error: meshes are not nested");
  for (int e = 0; e < coarse.element_count(); ++e)
    if (coarse.element(e).vertex != fine.element(e).vertex)
      throw std::invalid_argument("energy_error: meshes are not nested");
  for (int v = 0; v < coarse.vertex_count(); ++v)
    if ((coarse.vertex(v) - fine.vertex(v)).squaredNorm() != 0.0)
      throw std::invalid_argument("energy_error: meshes are not nested");
}

// Reference point of `elem` expressed in an ancestor element.
Vec2 ref_in_ancestor(const Mesh& mesh, int elem, int ancestor, Vec2 ref) {
  while (elem != ancestor) {
    int parent = mesh.element(elem).parent;
    if (parent < 0) throw std::invalid_argument("energy_error: meshes are not nested");
    const Element& pe = mesh.element(parent);
    int slot = 0;
    while (slot < 3 && pe.child[slot] != elem) ++slot;
    ref = Mesh::child_to_parent_ref(slot, ref);
    elem = parent;
  }
  return ref;
}

}  // namespace

std::pair<double, double> energy_error(const FieldEvaluator& coarse, const FieldEvaluator& fine,
                                       const MaterialParams& mat) {
  mat.validate();
  const Mesh& cm = coarse.mesh();
  const Mesh& fm = fine.mesh();
  check_nested(cm, fm);

  std::unordered_map<int, QuadratureRule1D> rules;
  const double mass = mat.alpha * mat.alpha / mat.iota;
  double eu = 0.0, ep = 0.0;
  for (int leaf : fm.leaves()) {
    const Element& el = fm.element(leaf);
    int points = std::max(el.degree_u, el.degree_p) + 2;
    auto [it, fresh] = rules.try_emplace(points);
    if (fresh) it->second = gauss_legendre(points);
    const QuadratureRule1D& rule = it->second;
    int anc = fm.ancestor_leaf_in_snapshot(leaf, cm.element_count());
    for (std::size_t j = 0; j < rule.points.size(); ++j) {
      for (std::size_t i = 0; i < rule.points.size(); ++i) {
        Vec2 ref(rule.points[i], rule.points[j]);
        double w = rule.weights[i] * rule.weights[j] * fm.jacobian(leaf, ref).determinant();
        FieldSample fs = fine.eval(leaf, ref);
        FieldSample cs = coarse.eval(anc, ref_in_ancestor(fm, leaf, anc, ref));
        Mat2 de = fs.strain() - cs.strain();
        double ddiv = fs.div_u() - cs.div_u();
        eu += w * (2.0 * mat.tau * de.squaredNorm() + mat.iota * ddiv * ddiv);
        double dp = fs.p - cs.p;
        Vec2 dg = fs.grad_p - cs.grad_p;
        ep += w * (mass * dp * dp + dg.dot(mat.kappa * dg));
      }
    }
  }
  return {eu, ep};
}

// --- the study loop ---------------------------------------------------------------

LevelSolution solve_on(const Problem& problem, Mesh mesh, double solver_tol) {
  DofMap dofmap = build_dof_map(mesh);
  SystemBlocks blocks = assemble(mesh, dofmap, problem.material, problem.load_e, problem.load_f);
  auto cons = contact_constraints(mesh, dofmap, problem.gap);
  VISolveOptions opts;
  opts.residual_tol = solver_tol;
  VISolution sol = solve_vi(blocks, cons, opts);
  return {std::move(mesh), std::move(dofmap), std::move(sol)};
}

Mesh reference_space(const Mesh& finest) {
  std::vector<int> all = finest.leaves();
  Mesh quartered = finest.refined(all);
  try {
    return quartered.with_degrees_incremented(1);
  } catch (const DegreeError&) {
    throw StudyError("reference space exceeds the supported polynomial degree");
  }
}

LevelSolution reference_solution(const Problem& problem, const Mesh& finest, double solver_tol,
                                 long max_dof) {
  Mesh rmesh = reference_space(finest);
  DofMap rdof = build_dof_map(rmesh);
  if (rdof.n_total() > max_dof)
    throw StudyError("reference space needs " + std::to_string(rdof.n_total()) +
                     " dofs, above the cap of " + std::to_string(max_dof));
  SystemBlocks blocks =
      assemble(rmesh, rdof, problem.material, problem.load_e, problem.load_f);
  auto cons = contact_constraints(rmesh, rdof, problem.gap);
  VISolveOptions opts;
  opts.residual_tol = solver_tol;
  VISolution sol = solve_vi(blocks, cons, opts);
  return {std::move(rmesh), std::move(rdof), std::move(sol)};
}

namespace {

struct LevelState {
  Mesh mesh;
  DofMap dofmap;
  VISolution sol;
  std::vector<ContactConstraint> cons;
  ContactMultiplier lam;
  Eigen::VectorXd eta_leaf;  // per-leaf indicator eta_u^2 + eta_p^2
  double eta_total_sq = 0.0;
};

struct MarkEntry {
  int level = 0;
  int elem = 0;
  double eta_sq = 0.0;
  RefineAction action = RefineAction::H;
};

using Window = std::optional<std::pair<double, double>>;

// Active constraints of the previous level as an interval in x1; used to
// warm start the next solve.
Window active_window(const std::vector<ContactConstraint>& cons, const std::vector<char>& active) {
  Window w;
  for (std::size_t i = 0; i < cons.size(); ++i) {
    if (!active[i]) continue;
    double x = cons[i].point[0];
    if (!w)
      w = {x, x};
    else
      *w = {std::min(w->first, x), std::max(w->second, x)};
  }
  return w;
}

std::vector<char> interval_warm_start(const std::vector<ContactConstraint>& cons,
                                      const Window& window) {
  if (!window) return {};
  std::vector<char> active(cons.size(), 0);
  for (std::size_t i = 0; i < cons.size(); ++i)
    active[i] = cons[i].point[0] >= window->first && cons[i].point[0] <= window->second;
  return active;
}

LevelState solve_level(const Problem& prob, Mesh mesh, DofMap dofmap, double tol,
                       const Window& warm, bool with_estimate) {
  SystemBlocks blocks = assemble(mesh, dofmap, prob.material, prob.load_e, prob.load_f);
  auto cons = contact_constraints(mesh, dofmap, prob.gap);
  VISolveOptions opts;
  opts.residual_tol = tol;
  opts.initial_active = interval_warm_start(cons, warm);
  VISolution sol = solve_vi(blocks, cons, opts);
  LevelState st{std::move(mesh), std::move(dofmap), std::move(sol), std::move(cons),
                {},              {},               0.0};
  if (with_estimate) {
    st.lam = reconstruct_lambda(st.mesh, st.dofmap, blocks, st.cons, st.sol);
    EstimatorReport est = estimate(st.mesh, st.dofmap, prob.material, prob.load_e, prob.load_f,
                                   prob.gap, st.sol, st.lam);
    st.eta_leaf = est.eta_u_sq + est.eta_p_sq;
    st.eta_total_sq = est.total_sq();
  }
  return st;
}

void revalidate_feasibility(const LevelState& st, int level) {
  for (const ContactConstraint& c : st.cons) {
    double slack = c.bound - c.coeff * st.sol.u[c.dof];
    if (slack < -1e-9 * (1.0 + std::abs(c.bound)))
      throw SolverError("level " + std::to_string(level) +
                        ": stored solution violates a contact constraint");
  }
  if (st.sol.lambda.size() > 0 && st.sol.lambda.minCoeff() < -1e-9)
    throw SolverError("level " + std::to_string(level) + ": negative contact multiplier");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void write_convergence_csv(const std::string& path, const std::vector<ConvergenceRecord>& recs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "# energy error quadrature: Gauss-Legendre, reference degree + 2 points per direction\n";
  out << "level,N,err_u_sq,err_p_sq,err,eta_total,eoc\n";
  for (const ConvergenceRecord& r : recs) {
    out << r.level << ',' << r.n_dof << ',' << fmt(r.err_u_sq) << ',' << fmt(r.err_p_sq) << ','
        << fmt(r.err) << ',' << fmt(r.eta_total) << ',';
    if (r.eoc) out << fmt(*r.eoc);
    out << '\n';
  }
}

void write_marking_csv(const std::string& path, const std::vector<MarkEntry>& marks) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "level,element,eta_sq,action\n";
  for (const MarkEntry& m : marks)
    out << m.level << ',' << m.elem << ',' << fmt(m.eta_sq) << ','
        << (m.action == RefineAction::H ? 'h' : 'p') << '\n';
}

void write_contact_csv(const std::string& path, const LevelState& st, const Problem& prob) {
  biotsig::write_contact_csv(path, prob, st.mesh, st.dofmap, st.sol, st.lam);
}

void write_artifacts(const StudyConfig& cfg, const std::vector<LevelState>& levels,
                     const std::vector<MarkEntry>& marks,
                     const std::vector<ConvergenceRecord>& recs) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  fs::path dir(cfg.out_dir);
  write_convergence_csv((dir / "convergence.csv").string(), recs);
  write_marking_csv((dir / "marking.csv").string(), marks);
  write_contact_csv((dir / "contact.csv").string(), levels.back(), cfg.problem);
  for (std::size_t k = 0; k < levels.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "level_%02zu.vtk", k);
    FieldEvaluator fields(levels[k].mesh, levels[k].dofmap, levels[k].sol.u, levels[k].sol.p);
    write_vtk((dir / name).string(), fields, levels[k].eta_leaf);
  }
}

}  // namespace

void write_contact_csv(const std::string& path, const Problem& problem, const Mesh& mesh,
                       const DofMap& dofmap, const VISolution& sol,
                       const ContactMultiplier& lam) {
  const Vec2 corner_ref[4] = {Vec2(-1, -1), Vec2(1, -1), Vec2(1, 1), Vec2(-1, 1)};
  FieldEvaluator fields(mesh, dofmap, sol.u, sol.p);
  struct Row {
    double x, lambda, slack;
  };
  std::vector<Row> rows;
  const auto& interfaces = mesh.interfaces();
  for (std::size_t ifc = 0; ifc < interfaces.size(); ++ifc) {
    const EdgeInterface& iface = interfaces[ifc];
    if (iface.kind != EdgeInterface::Kind::Boundary || iface.tags.disp != DispBC::Contact)
      continue;
    int elem = iface.a.elem, edge = iface.a.edge;
    Vec2 n = mesh.edge_normal(elem, edge);
    const Vec2& r0 = corner_ref[edge];
    const Vec2& r1 = corner_ref[(edge + 1) % 4];
    for (int k = 0; k <= 8; ++k) {
      double t = -1.0 + 0.25 * k;
      Vec2 ref = 0.5 * (1.0 - t) * r0 + 0.5 * (1.0 + t) * r1;
      Vec2 x = mesh.map_to_physical(elem, ref);
      double un = fields.eval(elem, ref).u.dot(n);
      rows.push_back({x[0], lam.eval(static_cast<int>(ifc), t), un - problem.gap(x)});
    }
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.x < b.x; });
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "x,lambda,u_n_minus_g\n";
  double last_x = std::numeric_limits<double>::quiet_NaN();
  for (const Row& r : rows) {
    if (r.x == last_x) continue;  // shared edge endpoints repeat exactly
    last_x = r.x;
    out << fmt(r.x) << ',' << fmt(r.lambda) << ',' << fmt(r.slack) << '\n';
  }
}

StudyResult run_study(const StudyConfig& cfg) {
  cfg.validate();
  const Problem& prob = cfg.problem;

  Mesh mesh = Mesh::unit_square(cfg.initial_cells);
  if (cfg.degree > 1) mesh = mesh.with_degrees_incremented(cfg.degree - 1);

  std::vector<LevelState> levels;
  std::vector<MarkEntry> marks;
  Window warm;

  for (int level = 0;; ++level) {
    DofMap dofmap = build_dof_map(mesh);
    if (dofmap.n_total() > cfg.max_dof) {
      if (levels.empty())
        throw std::invalid_argument("run_study: max_dof is below the initial space size");
      break;
    }
    if (!levels.empty() && dofmap.n_total() <= levels.back().dofmap.n_total())
      throw std::logic_error("run_study: dof count did not grow between levels");
    LevelState st = [&] {
      try {
        return solve_level(prob, std::move(mesh), std::move(dofmap), cfg.solver_tol, warm, true);
      } catch (const NoConvergenceError& e) {
        throw NoConvergenceError("level " + std::to_string(level) + ": " + e.what());
      } catch (const SolverError& e) {
        throw SolverError("level " + std::to_string(level) + ": " + e.what());
      }
    }();
    warm = active_window(st.cons, st.sol.active);
    levels.push_back(std::move(st));
    const LevelState& cur = levels.back();

    // Build the next mesh; an empty growth step ends the loop (degree cap
    // reached or nothing left to refine).
    bool grew = false;
    switch (cfg.scheme) {
      case Scheme::HUniform: {
        std::vector<int> all = cur.mesh.leaves();
        mesh = cur.mesh.refined(all);
        grew = true;
        break;
      }
      case Scheme::RUniform: {
        int r = cur.mesh.element(cur.mesh.leaves().front()).degree_u;
        if (r + 1 <= kMaxDegree) {
          mesh = cur.mesh.with_degrees_incremented(1);
          grew = true;
        }
        break;
      }
      case Scheme::HAdaptive: {
        if (cur.eta_leaf.size() == 0 || cur.eta_leaf.maxCoeff() <= 0.0) break;
        std::vector<int> marked = doerfler_mark(cur.eta_leaf, cfg.theta);
        std::vector<int> elems;
        for (int pos : marked) {
          int e = cur.dofmap.leaf_elems[pos];
          marks.push_back({level, e, cur.eta_leaf[pos], RefineAction::H});
          elems.push_back(e);
        }
        mesh = cur.mesh.refined(elems);
        grew = true;
        break;
      }
      case Scheme::HpAdaptive: {
        if (cur.eta_leaf.size() == 0 || cur.eta_leaf.maxCoeff() <= 0.0) break;
        std::vector<int> marked = doerfler_mark(cur.eta_leaf, cfg.theta);
        FieldEvaluator fields(cur.mesh, cur.dofmap, cur.sol.u, cur.sol.p);
        std::vector<int> h_elems;
        std::vector<std::pair<int, int>> p_raises;
        for (int pos : marked) {
          int e = cur.dofmap.leaf_elems[pos];
          RefineAction act = hp_decide(fields, e);
          int r = cur.mesh.element(e).degree_u;
          if (act == RefineAction::P && r + 1 > kMaxDegree) act = RefineAction::H;
          marks.push_back({level, e, cur.eta_leaf[pos], act});
          if (act == RefineAction::H)
            h_elems.push_back(e);
          else
            p_raises.push_back({e, r + 1});
        }
        Mesh next = h_elems.empty() ? cur.mesh : cur.mesh.refined(h_elems);
        for (auto [e, r] : p_raises) {
          // The 1-irregularity closure may have quartered a p-marked cell;
          // it got refined either way, so the degree raise is dropped.
          if (!next.element(e).leaf()) continue;
          next = next.with_degree(e, std::max(r, next.element(e).degree_u));
        }
        mesh = std::move(next);
        grew = true;
        break;
      }
    }
    if (!grew) break;
  }

  // Overrefined reference: one global quartering, degree + 1 everywhere.
  Mesh rmesh = reference_space(levels.back().mesh);
  DofMap rdof = build_dof_map(rmesh);
  if (rdof.n_total() > cfg.max_reference_dof)
    throw StudyError("reference space needs " + std::to_string(rdof.n_total()) +
                     " dofs, above the cap of " + std::to_string(cfg.max_reference_dof));
  LevelState ref = [&] {
    try {
      return solve_level(prob, std::move(rmesh), std::move(rdof), cfg.solver_tol, warm, false);
    } catch (const NoConvergenceError& e) {
      throw NoConvergenceError(std::string("reference level: ") + e.what());
    } catch (const SolverError& e) {
      throw SolverError(std::string("reference level: ") + e.what());
    }
  }();

  StudyResult out;
  out.reference_dof = ref.dofmap.n_total();
  for (int leaf : ref.mesh.leaves())
    out.reference_degree = std::max(out.reference_degree, ref.mesh.element(leaf).degree_u);

  FieldEvaluator ref_fields(ref.mesh, ref.dofmap, ref.sol.u, ref.sol.p);
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const LevelState& st = levels[k];
    revalidate_feasibility(st, static_cast<int>(k));
    FieldEvaluator fields(st.mesh, st.dofmap, st.sol.u, st.sol.p);
    auto [eu, ep] = energy_error(fields, ref_fields, prob.material);
    ConvergenceRecord rec;
    rec.level = static_cast<int>(k);
    rec.n_dof = st.dofmap.n_total();
    rec.err_u_sq = eu;
    rec.err_p_sq = ep;
    rec.err = std::sqrt(eu + ep);
    rec.eta_total = std::sqrt(std::max(0.0, st.eta_total_sq));
    out.records.push_back(rec);
  }
  compute_eoc(out.records);

  if (!cfg.out_dir.empty()) write_artifacts(cfg, levels, marks, out.records);
  return out;
}

}  // namespace biotsig
