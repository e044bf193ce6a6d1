#include "biotsig/adaptivity.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "biotsig/quadrature.hpp"

namespace biotsig {

std::vector<int> doerfler_mark(const Eigen::VectorXd& eta_sq, double theta) {
  if (!(theta > 0.0) || theta > 1.0)
    throw std::invalid_argument("doerfler_mark: theta must lie in (0, 1]");
  const int n = static_cast<int>(eta_sq.size());
  for (int i = 0; i < n; ++i)
    if (eta_sq[i] < 0.0) throw std::invalid_argument("doerfler_mark: negative indicator");
  const double total = eta_sq.sum();
  if (total <= 0.0) throw std::invalid_argument("doerfler_mark: nothing to mark");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (eta_sq[a] != eta_sq[b]) return eta_sq[a] > eta_sq[b];
    return a < b;
  });

  // theta = 1 asks for every positive indicator; handle it exactly instead
  // of trusting the cumulative sum to reach the total without rounding.
  std::vector<int> marked;
  if (theta == 1.0) {
    for (int i : order)
      if (eta_sq[i] > 0.0) marked.push_back(i);
    return marked;
  }
  double cum = 0.0;
  for (int i : order) {
    marked.push_back(i);
    cum += eta_sq[i];
    if (cum >= theta * total) break;
  }
  return marked;
}

RefineAction decide_from_decay(const std::vector<double>& diag, double sigma_star) {
  const int r = static_cast<int>(diag.size()) - 1;
  if (r < 2) return RefineAction::H;

  double peak = 0.0;
  for (int k = 1; k <= r; ++k) peak = std::max(peak, std::abs(diag[k]));
  if (peak == 0.0) return RefineAction::P;

  // Clamping relative to the peak keeps exact zeros finite and the whole
  // fit invariant under rescaling of the solution.
  std::vector<double> y(r);
  for (int k = 1; k <= r; ++k)
    y[k - 1] = std::log(std::max(std::abs(diag[k]), 1e-14 * peak));

  double xbar = 0.0, ybar = 0.0;
  for (int k = 1; k <= r; ++k) xbar += k, ybar += y[k - 1];
  xbar /= r;
  ybar /= r;
  double num = 0.0, den = 0.0;
  for (int k = 1; k <= r; ++k) {
    num += (k - xbar) * (y[k - 1] - ybar);
    den += (k - xbar) * (k - xbar);
  }
  // Decay per unit degree; the small slack keeps exact-boundary data (for
  // which sigma equals sigma_star up to rounding) on the smooth side.
  const double sigma = -num / den;
  return sigma >= sigma_star - 1e-12 ? RefineAction::P : RefineAction::H;
}

std::vector<double> legendre_diagonal(const FieldEvaluator& fields, int elem) {
  const int r = fields.mesh().element(elem).degree_u;
  const QuadratureRule1D rule = gauss_legendre(r + 1);
  const int nq = static_cast<int>(rule.points.size());

  // Orthonormal 1D Legendre values at the quadrature points.
  Eigen::MatrixXd leg(nq, r + 1);
  std::vector<double> raw(r + 1);
  for (int q = 0; q < nq; ++q) {
    legendre_values(r, rule.points[q], raw.data());
    for (int k = 0; k <= r; ++k) leg(q, k) = raw[k] * std::sqrt((2.0 * k + 1.0) / 2.0);
  }

  // Full coefficient matrices c_ij = integral of field * Lhat_i(xi) *
  // Lhat_j(eta) for each of the three solution components, evaluated as
  // A^T F A with A(q, k) = w_q Lhat_k(x_q).
  Eigen::MatrixXd A(nq, r + 1);
  for (int q = 0; q < nq; ++q) A.row(q) = rule.weights[q] * leg.row(q);
  std::array<Eigen::MatrixXd, 3> F;
  F.fill(Eigen::MatrixXd(nq, nq));
  for (int qj = 0; qj < nq; ++qj)
    for (int qi = 0; qi < nq; ++qi) {
      const FieldSample f = fields.eval(elem, Vec2(rule.points[qi], rule.points[qj]));
      F[0](qi, qj) = f.u[0];
      F[1](qi, qj) = f.u[1];
      F[2](qi, qj) = f.p;
    }

  // The degree-k entry collects the L-shaped band max(i, j) = k over all
  // three components, the tensor-product notion of "coefficients of
  // degree k".
  std::vector<double> diag(r + 1, 0.0);
  for (const auto& field : F) {
    const Eigen::MatrixXd c = A.transpose() * field * A;
    for (int i = 0; i <= r; ++i)
      for (int j = 0; j <= r; ++j) diag[std::max(i, j)] += c(i, j) * c(i, j);
  }
  for (double& d : diag) d = std::sqrt(d);
  return diag;
}

RefineAction hp_decide(const FieldEvaluator& fields, int elem, double sigma_star) {
  return decide_from_decay(legendre_diagonal(fields, elem), sigma_star);
}

}  // namespace biotsig
