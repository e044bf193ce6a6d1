// Convergence studies: refinement loops for the uniform and adaptive
// schemes, the overrefined reference solution, energy-norm errors across
// nested meshes, and the CSV/VTK artifacts.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "biotsig/adaptivity.hpp"
#include "biotsig/assembly.hpp"
#include "biotsig/estimator.hpp"
#include "biotsig/vi_solver.hpp"

namespace biotsig {

// A complete problem instance on the unit square with the fixed boundary
// layout of Mesh::unit_square (top: displacement Dirichlet / zero pressure,
// bottom: contact / no flux, sides: zero traction / no flux).
struct Problem {
  std::string name;
  MaterialParams material;
  VectorField load_e;
  ScalarField load_f;
  ScalarField gap;
};

// The driving benchmark: f_e = (0,-1), f_f = -1, g = 3(1 - cos(x1 - 0.5)),
// unit material parameters. The body is pressed onto the obstacle and the
// contact zone forms around x1 = 0.5 where the gap closes.
Problem contact_problem();

// Smooth contact-free benchmark with the known solution
// u1 = u2 = p = sin^2(pi x1) sin^2(pi x2), whose forcing follows from the
// strong form. The solution and its gradient vanish on the whole boundary,
// so it satisfies every boundary condition of the tag layout exactly; the
// gap is 1, keeping the contact constraints inactive.
Problem manufactured_problem();

// Exact fields of the manufactured benchmark (for direct checks).
Vec2 manufactured_u(const Vec2& x);
double manufactured_p(const Vec2& x);

Problem problem_by_name(const std::string& name);  // "contact" | "manufactured"

enum class Scheme { HUniform, RUniform, HAdaptive, HpAdaptive };

Scheme scheme_by_name(const std::string& name);
std::string to_string(Scheme scheme);

struct StudyConfig {
  Problem problem = contact_problem();
  Scheme scheme = Scheme::HUniform;
  int degree = 1;        // base polynomial degree of the initial mesh
  int initial_cells = 2; // the initial mesh is an initial_cells^2 grid
  double theta = 0.5;    // bulk fraction for the adaptive schemes
  long max_dof = 200000;
  long max_reference_dof = 2500000;
  double solver_tol = 1e-10;
  std::string out_dir;   // empty: no files are written

  void validate() const;  // throws std::invalid_argument
};

// Reasonable per-scheme defaults: r-uniform fixes a 4x4 grid and grows the
// degree from 1; hp starts from a 2x2 grid at degree 2; the h-schemes start
// from a 2x2 grid at the requested degree.
StudyConfig make_config(Problem problem, Scheme scheme, int degree);

struct ConvergenceRecord {
  int level = 0;
  long n_dof = 0;
  double err_u_sq = 0.0;  // squared energy error of the displacement field
  double err_p_sq = 0.0;  // squared energy error of the pressure field
  double err = 0.0;       // sqrt(err_u_sq + err_p_sq)
  double eta_total = 0.0; // square root of the total estimator
  std::optional<double> eoc;  // vs. the previous record; empty on level 0
};

struct StudyResult {
  std::vector<ConvergenceRecord> records;
  long reference_dof = 0;
  int reference_degree = 0;  // max displacement degree of the reference space
};

// One solved refinement level, kept so errors against the reference can be
// evaluated after the loop finishes.
struct LevelSolution {
  Mesh mesh;
  DofMap dofmap;
  VISolution sol;
};

// The overrefined reference space: every leaf of `finest` quartered once and
// every degree raised by one, preserving the refinement tree so all coarser
// levels stay nested. Throws StudyError when a degree would leave the
// supported range.
Mesh reference_space(const Mesh& finest);

// Assembles and solves the problem on one mesh.
LevelSolution solve_on(const Problem& problem, Mesh mesh, double solver_tol = 1e-10);

// solve_on over reference_space(finest); throws StudyError when that space
// exceeds max_dof.
LevelSolution reference_solution(const Problem& problem, const Mesh& finest,
                                 double solver_tol = 1e-10, long max_dof = 2500000);

// Runs solve -> estimate -> mark/refine until the next level would exceed
// max_dof, then solves the overrefined reference (one global quartering and
// degree + 1 relative to the finest level) and fills the error columns.
// Throws StudyError when the reference space exceeds max_reference_dof or
// the supported degree range; solver failures propagate with the level
// recorded in the message.
StudyResult run_study(const StudyConfig& config);

// Samples the contact boundary (nine points per contact edge) and writes
// sorted rows x,lambda,u_n_minus_g, the discrete contact pressure and gap
// slack along the bottom edge.
void write_contact_csv(const std::string& path, const Problem& problem, const Mesh& mesh,
                       const DofMap& dofmap, const VISolution& sol,
                       const ContactMultiplier& lam);

// Squared energy-norm errors (displacement, pressure) between two solutions
// on nested meshes of the same refinement tree; integrates on the fine mesh
// with degree + 2 Gauss points per direction and evaluates the coarse
// solution by descending the tree. Throws std::invalid_argument when the
// coarse mesh is not an ancestor of the fine one.
std::pair<double, double> energy_error(const FieldEvaluator& coarse, const FieldEvaluator& fine,
                                       const MaterialParams& mat);

// eoc between two (N, err) pairs: log(err_prev/err_cur) / log(N_cur/N_prev).
// Empty when either error vanishes or the dof counts coincide.
std::optional<double> eoc_step(long n_prev, double err_prev, long n_cur, double err_cur);

// Fills the eoc column of consecutive records.
void compute_eoc(std::vector<ConvergenceRecord>& records);

}  // namespace biotsig
