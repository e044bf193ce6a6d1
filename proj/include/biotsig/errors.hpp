// Exception types shared across the solver components.
#pragma once

#include <stdexcept>
#include <string>

namespace biotsig {

// Mesh topology or tag data violates a structural requirement
// (non-CCW cell, more than one hanging node per edge, degree jump > 1, ...).
struct MeshError : std::runtime_error {
  explicit MeshError(const std::string& what) : std::runtime_error(what) {}
};

// A solver failed to produce a usable result (factorization breakdown,
// iteration cap reached, cycling active sets).
struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

struct NoConvergenceError : SolverError {
  explicit NoConvergenceError(const std::string& what) : SolverError(what) {}
};

// Requested polynomial degree outside the supported range.
struct DegreeError : std::invalid_argument {
  explicit DegreeError(const std::string& what) : std::invalid_argument(what) {}
};

// A convergence study cannot complete within its resource limits (the
// overrefined reference space would exceed the dof or degree caps).
struct StudyError : std::runtime_error {
  explicit StudyError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace biotsig
