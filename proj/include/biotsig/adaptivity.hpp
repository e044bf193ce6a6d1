// Doerfler bulk marking and the h-versus-p decision from the decay of
// Legendre expansion coefficients of the element-local solution.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "biotsig/fields.hpp"

namespace biotsig {

enum class RefineAction { H, P };

inline constexpr double kDefaultDecayThreshold = 1.3862943611198906;  // log 4

// Smallest prefix (after sorting descending, ties by ascending index) whose
// indicator sum reaches theta times the total. Returns indices into eta_sq.
// Throws std::invalid_argument when every indicator is zero or theta is
// outside (0, 1].
std::vector<int> doerfler_mark(const Eigen::VectorXd& eta_sq, double theta);

// Least-squares slope of log(diag[k]) against k over k = 1..r (diag has
// r+1 entries, entry 0 is ignored); decay of at least sigma_star per degree
// reads as smooth (P), slower decay as singular (H). Fewer than two usable
// coefficients (r = 1) defaults to H; an identically zero expansion is
// trivially smooth (P).
RefineAction decide_from_decay(const std::vector<double>& diag, double sigma_star);

// Degree-k coefficient magnitudes of the orthonormal tensor Legendre
// expansion of the element-local solution on the reference square:
// diag[k] = sqrt of the squared sum over the band max(i, j) = k, combined
// over the two displacement components and the pressure.
std::vector<double> legendre_diagonal(const FieldEvaluator& fields, int elem);

RefineAction hp_decide(const FieldEvaluator& fields, int elem,
                       double sigma_star = kDefaultDecayThreshold);

}  // namespace biotsig
