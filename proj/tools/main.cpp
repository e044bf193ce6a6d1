// Command line front end: one-shot solves, refinement studies, and the
// property suite over randomized instances.
#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>

#include "biotsig/errors.hpp"
#include "biotsig/estimator.hpp"
#include "biotsig/fields.hpp"
#include "biotsig/study.hpp"
#include "biotsig/validate.hpp"
#include "biotsig/vtk.hpp"

namespace {

struct CliConfig {
  std::string problem = "contact";
  std::string scheme = "h-adaptive";
  int r = 2;
  double theta = 0.5;
  long max_dof = 20000;
  double solver_tol = 1e-10;
  long reference_cap = 2500000;
  std::string out_dir;
};

CliConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  const nlohmann::json j = nlohmann::json::parse(in);
  CliConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "problem") {
      cfg.problem = value.get<std::string>();
    } else if (key == "scheme") {
      cfg.scheme = value.get<std::string>();
    } else if (key == "r") {
      cfg.r = value.get<int>();
    } else if (key == "theta") {
      cfg.theta = value.get<double>();
    } else if (key == "max_dof") {
      cfg.max_dof = value.get<long>();
    } else if (key == "tolerances") {
      for (const auto& [tk, tv] : value.items()) {
        if (tk == "solver")
          cfg.solver_tol = tv.get<double>();
        else if (tk == "reference_cap")
          cfg.reference_cap = tv.get<long>();
        else
          throw std::runtime_error("config: unknown tolerances key '" + tk + "'");
      }
    } else if (key == "outputs") {
      for (const auto& [ok, ov] : value.items()) {
        if (ok == "dir")
          cfg.out_dir = ov.get<std::string>();
        else
          throw std::runtime_error("config: unknown outputs key '" + ok + "'");
      }
    } else {
      throw std::runtime_error("config: unknown key '" + key + "'");
    }
  }
  return cfg;
}

biotsig::StudyConfig study_config(const CliConfig& cli) {
  biotsig::StudyConfig cfg = biotsig::make_config(biotsig::problem_by_name(cli.problem),
                                                  biotsig::scheme_by_name(cli.scheme), cli.r);
  cfg.theta = cli.theta;
  cfg.max_dof = cli.max_dof;
  cfg.max_reference_dof = cli.reference_cap;
  cfg.solver_tol = cli.solver_tol;
  cfg.out_dir = cli.out_dir;
  return cfg;
}

int cmd_study(const CliConfig& cli) {
  const biotsig::StudyResult res = biotsig::run_study(study_config(cli));
  std::printf("%s, %s\n", cli.problem.c_str(), cli.scheme.c_str());
  std::printf("%-5s %9s %13s %13s %13s %10s %8s\n", "level", "N", "err_u_sq", "err_p_sq", "err",
              "eta_total", "eoc");
  for (const biotsig::ConvergenceRecord& r : res.records) {
    std::printf("%-5d %9ld %13.6e %13.6e %13.6e %10.4e ", r.level, r.n_dof, r.err_u_sq,
                r.err_p_sq, r.err, r.eta_total);
    if (r.eoc)
      std::printf("%8.3f\n", *r.eoc);
    else
      std::printf("%8s\n", "-");
  }
  std::printf("reference space: %ld dofs at degree %d\n", res.reference_dof,
              res.reference_degree);
  if (!cli.out_dir.empty()) std::printf("artifacts written to %s\n", cli.out_dir.c_str());
  return 0;
}

int cmd_solve(const CliConfig& cli) {
  const biotsig::Problem prob = biotsig::problem_by_name(cli.problem);

  // The largest uniform refinement of the 2x2 base grid, at the requested
  // degree, that stays within the dof budget.
  biotsig::Mesh mesh = biotsig::Mesh::unit_square(2);
  if (cli.r > 1) mesh = mesh.with_degrees_incremented(cli.r - 1);
  if (biotsig::build_dof_map(mesh).n_total() > cli.max_dof)
    throw std::runtime_error("max_dof is below the initial space size");
  for (;;) {
    biotsig::Mesh next = mesh.refined(mesh.leaves());
    if (biotsig::build_dof_map(next).n_total() > cli.max_dof) break;
    mesh = std::move(next);
  }

  const biotsig::LevelSolution ls = biotsig::solve_on(prob, std::move(mesh), cli.solver_tol);
  const biotsig::SystemBlocks blocks =
      biotsig::assemble(ls.mesh, ls.dofmap, prob.material, prob.load_e, prob.load_f);
  const std::vector<biotsig::ContactConstraint> cons =
      biotsig::contact_constraints(ls.mesh, ls.dofmap, prob.gap);
  const biotsig::ContactMultiplier lam =
      biotsig::reconstruct_lambda(ls.mesh, ls.dofmap, blocks, cons, ls.sol);
  const biotsig::EstimatorReport est = biotsig::estimate(
      ls.mesh, ls.dofmap, prob.material, prob.load_e, prob.load_f, prob.gap, ls.sol, lam);

  int active = 0;
  for (char a : ls.sol.active) active += a != 0;
  std::printf("problem %s: %zu leaves at degree %d, N = %d\n", prob.name.c_str(),
              ls.dofmap.leaf_elems.size(), cli.r, ls.dofmap.n_total());
  std::printf("active-set iterations %d, active constraints %d of %zu\n", ls.sol.iterations,
              active, cons.size());
  std::printf("eta_u %.6e, eta_p %.6e, contact term %.6e, eta_total %.6e\n",
              std::sqrt(est.eta_u_sq.sum()), std::sqrt(est.eta_p_sq.sum()), est.contact_total(),
              std::sqrt(std::max(0.0, est.total_sq())));
  std::printf("kkt residuals: stationarity %.2e, feasibility %.2e, complementarity %.2e\n",
              ls.sol.residuals.stationarity, ls.sol.residuals.feasibility,
              ls.sol.residuals.complementarity);

  if (!cli.out_dir.empty()) {
    std::filesystem::create_directories(cli.out_dir);
    const std::filesystem::path dir(cli.out_dir);
    const biotsig::FieldEvaluator fields(ls.mesh, ls.dofmap, ls.sol.u, ls.sol.p);
    const Eigen::VectorXd eta = est.eta_u_sq + est.eta_p_sq;
    biotsig::write_vtk((dir / "solution.vtk").string(), fields, eta);
    biotsig::write_contact_csv((dir / "contact.csv").string(), prob, ls.mesh, ls.dofmap, ls.sol,
                               lam);
    std::printf("artifacts written to %s\n", cli.out_dir.c_str());
  }
  return 0;
}

int cmd_validate(unsigned seed, int instances, const std::string& out_dir) {
  const biotsig::PropertyReport rep = biotsig::run_properties(seed, instances);
  std::fputs(biotsig::to_table(rep).c_str(), stdout);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path path = std::filesystem::path(out_dir) / "report.json";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << biotsig::to_json(rep);
    std::printf("report written to %s\n", path.string().c_str());
  }
  return rep.all_passed() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hp-adaptive solver for stationary poroelasticity with contact"};
  app.require_subcommand(1);

  std::string config_path, out_dir, scheme;
  long max_dof = 0;
  unsigned seed = 1;
  int instances = 20;

  CLI::App* solve =
      app.add_subcommand("solve", "solve once on the largest uniform mesh within the dof budget");
  solve->add_option("--config", config_path, "JSON config file");
  solve->add_option("--out", out_dir, "output directory for solution.vtk and contact.csv");
  solve->add_option("--max-dof", max_dof, "dof budget override");

  CLI::App* study =
      app.add_subcommand("study", "run a refinement study against an overrefined reference");
  study->add_option("--config", config_path, "JSON config file");
  study->add_option("--out", out_dir, "output directory for csv and vtk artifacts");
  study->add_option("--scheme", scheme, "h-uniform | r-uniform | h-adaptive | hp-adaptive");
  study->add_option("--max-dof", max_dof, "dof budget override");

  CLI::App* validate =
      app.add_subcommand("validate", "check the structural inequalities on random instances");
  validate->add_option("--out", out_dir, "output directory for report.json");
  validate->add_option("--seed", seed, "random seed");
  validate->add_option("--instances", instances, "number of random instances");

  CLI11_PARSE(app, argc, argv);

  try {
    CliConfig cfg = config_path.empty() ? CliConfig{} : load_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!scheme.empty()) cfg.scheme = scheme;
    if (max_dof > 0) cfg.max_dof = max_dof;

    if (solve->parsed()) return cmd_solve(cfg);
    if (study->parsed()) return cmd_study(cfg);
    return cmd_validate(seed, instances, cfg.out_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
