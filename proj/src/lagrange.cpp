#include "biotsig/lagrange.hpp"

#include <array>
#include <memory>
#include <mutex>

#include "biotsig/errors.hpp"
#include "biotsig/quadrature.hpp"

namespace biotsig {

ShapeBasis::ShapeBasis(int degree) : degree_(degree) {
  if (degree < 1 || degree > kMaxDegree)
    throw DegreeError("ShapeBasis: degree must be in 1.." + std::to_string(kMaxDegree));
  nodes_ = gauss_lobatto(degree + 1).points;
  inv_denom_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    double d = 1.0;
    for (std::size_t j = 0; j < nodes_.size(); ++j)
      if (j != i) d *= nodes_[i] - nodes_[j];
    inv_denom_[i] = 1.0 / d;
  }
}

void ShapeBasis::eval(double x, double* val, double* d1, double* d2) const {
  const int n = size();
  for (int i = 0; i < n; ++i) {
    // Accumulate p0 = prod (x - x_j), p1 = p0', p2 = p0'' over j != i.
    double p0 = 1.0, p1 = 0.0, p2 = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      double t = x - nodes_[j];
      p2 = p2 * t + 2.0 * p1;
      p1 = p1 * t + p0;
      p0 = p0 * t;
    }
    if (val) val[i] = p0 * inv_denom_[i];
    if (d1) d1[i] = p1 * inv_denom_[i];
    if (d2) d2[i] = p2 * inv_denom_[i];
  }
}

double ShapeBasis::value(int i, double x) const {
  double p0 = 1.0;
  for (int j = 0; j < size(); ++j)
    if (j != i) p0 *= x - nodes_[j];
  return p0 * inv_denom_[i];
}

const ShapeBasis& shape_basis(int degree) {
  if (degree < 1 || degree > kMaxDegree)
    throw DegreeError("shape_basis: degree must be in 1.." + std::to_string(kMaxDegree));
  static std::array<std::unique_ptr<ShapeBasis>, kMaxDegree + 1> cache;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  if (!cache[degree]) cache[degree] = std::make_unique<ShapeBasis>(degree);
  return *cache[degree];
}

}  // namespace biotsig
