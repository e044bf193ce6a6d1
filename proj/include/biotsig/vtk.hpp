// Legacy ASCII VTK output: one bilinear quad per mesh leaf, displacement and
// pressure at the corner vertices, polynomial degree and error indicator per
// cell.
#pragma once

#include <Eigen/Dense>
#include <string>

#include "biotsig/fields.hpp"

namespace biotsig {

// eta_sq is indexed by leaf position (same order as dofmap.leaf_elems) and
// may be empty, in which case the indicator array is omitted. Throws
// std::runtime_error when the file cannot be written and
// std::invalid_argument on a size mismatch.
void write_vtk(const std::string& path, const FieldEvaluator& fields,
               const Eigen::VectorXd& eta_sq = Eigen::VectorXd());

}  // namespace biotsig
