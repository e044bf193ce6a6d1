// Executable property suite: the inequalities and identities the discrete
// coupled system satisfies by construction, checked on randomized instances.
// Everything here is algebraically forced (Cauchy-Schwarz chains, KKT
// conditions, feasibility of v = 0), so violations beyond roundoff indicate
// an assembly or solver defect, not a modelling choice.
#pragma once

#include <random>
#include <string>
#include <vector>

#include "biotsig/assembly.hpp"
#include "biotsig/dofmap.hpp"
#include "biotsig/mesh.hpp"
#include "biotsig/vi_solver.hpp"

namespace biotsig {

inline constexpr double kPropertyTol = 1e-9;

struct ValidationInstance {
  Mesh mesh;
  DofMap dofmap;
  MaterialParams material;
  SystemBlocks blocks;  // assembled with the H1 Gram matrices
  std::vector<ContactConstraint> constraints;
  VISolution solution;
};

// Deterministic random instance: uniform m-by-m start (m in 1..4), up to
// three random refinement passes, random per-leaf degrees in 1..3, affine
// random loads, random positive material parameters and a nonnegative gap
// (so v = 0 is always feasible). The same seed reproduces the same instance.
ValidationInstance random_instance(unsigned seed);

// Zero loads on a fixed mesh with one hanging interface; the solution is
// exactly zero and every inequality below holds with equality.
ValidationInstance zero_instance();

// Each check returns a normalized violation: the worst (lhs - rhs) / scale
// over its probes or constraints for an inequality lhs <= rhs, so any value
// at most kPropertyTol means the property holds. Probe vectors come from the
// supplied generator; checks without random probes take only the instance.

// |b(v,q)| <= ||v||_a ||q||_c
double check_b_continuity(const ValidationInstance& inst, std::mt19937& gen, int probes = 4);
// a(v,v) <= 2(tau+iota) ||v||_1^2  and  c(q,q) <= max(alpha^2/iota, lam_max kappa) ||q||_1^2
double check_norm_bounds(const ValidationInstance& inst, std::mt19937& gen, int probes = 4);
// ||v||_a^2 <= v^T (A + B^T C^{-1} B) v <= 2 ||v||_a^2
double check_schur_bounds(const ValidationInstance& inst, std::mt19937& gen, int probes = 4);
// A u - B^T p + G^T lambda = fe  and  -B u - C p = ff
double check_equality_residual(const ValidationInstance& inst);
// G u <= g, lambda >= 0, lambda_i (g_i - (G u)_i) = 0
double check_complementarity(const ValidationInstance& inst);
// ||u||_a^2 + ||p||_c^2 + (ff, p) <= (fe, u)
double check_energy_inequality(const ValidationInstance& inst);
// sqrt(||u||_a^2 + ||p||_c^2) <= ||fe||_a* + ||ff||_c*
double check_stability(const ValidationInstance& inst);
// Active-set iterations from the all-inactive and the all-active start reach
// the same (u, p, lambda).
double check_uniqueness(const ValidationInstance& inst);

struct PropertyResult {
  std::string name;
  std::string statement;  // the checked inequality, so a failure points at its source
  int instances = 0;
  double max_violation = 0.0;
  double tolerance = kPropertyTol;
  bool passed() const { return max_violation <= tolerance; }
};

struct PropertyReport {
  unsigned seed = 0;
  int instance_count = 0;
  std::vector<PropertyResult> properties;
  bool all_passed() const;
};

// Runs every check on the zero instance plus `count` random instances seeded
// off `seed`, keeping the worst violation per property. Solver failures are
// recorded as infinite violations instead of being thrown, so the report is
// always complete.
PropertyReport run_properties(unsigned seed, int count = 20);

std::string to_table(const PropertyReport& report);
std::string to_json(const PropertyReport& report);

}  // namespace biotsig
