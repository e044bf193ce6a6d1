#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "biotsig/adaptivity.hpp"
#include "biotsig/lagrange.hpp"
#include "biotsig/quadrature.hpp"

using namespace biotsig;

namespace {

Mesh one_cell(int degree) {
  EdgeTags nat{DispBC::Traction, PresBC::Flux};
  Mesh mesh = Mesh::from_data({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {{0, 1, 2, 3}},
                              {{nat, nat, nat, nat}});
  return mesh.with_degree(0, degree);
}

double orthonormal_legendre(int k, double x) {
  return legendre_value(k, x) * std::sqrt((2.0 * k + 1.0) / 2.0);
}

}  // namespace

TEST_CASE("doerfler marking picks the documented prefix on the worked example") {
  Eigen::VectorXd eta(4);
  eta << 4, 3, 2, 1;
  auto marked = doerfler_mark(eta, 0.5);
  REQUIRE(marked.size() == 2);
  CHECK(marked[0] == 0);
  CHECK(marked[1] == 1);

  // Brute force: no single element reaches theta * total, and the pair
  // {0, 1} does, so the greedy prefix is also a minimal-cardinality set.
  for (int i = 0; i < 4; ++i) CHECK(eta[i] < 0.5 * eta.sum());
  CHECK(eta[0] + eta[1] >= 0.5 * eta.sum());
}

TEST_CASE("theta = 1 marks exactly the positive indicators") {
  Eigen::VectorXd eta(5);
  eta << 1, 0, 2, 0, 3;
  auto marked = doerfler_mark(eta, 1.0);
  std::sort(marked.begin(), marked.end());
  CHECK(marked == std::vector<int>{0, 2, 4});
}

TEST_CASE("a single positive element is marked for any theta") {
  Eigen::VectorXd eta(1);
  eta << 0.37;
  for (double theta : {0.1, 0.5, 1.0}) {
    auto marked = doerfler_mark(eta, theta);
    REQUIRE(marked.size() == 1);
    CHECK(marked[0] == 0);
  }
}

TEST_CASE("degenerate marking inputs raise invalid_argument") {
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(doerfler_mark(zero, 0.5), std::invalid_argument);
  Eigen::VectorXd eta(2);
  eta << 1, 2;
  CHECK_THROWS_AS(doerfler_mark(eta, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(doerfler_mark(eta, 1.5), std::invalid_argument);
  Eigen::VectorXd neg(2);
  neg << 1, -0.1;
  CHECK_THROWS_AS(doerfler_mark(neg, 0.5), std::invalid_argument);
}

TEST_CASE("ties are broken by ascending index") {
  Eigen::VectorXd eta(4);
  eta << 2, 3, 2, 3;
  auto marked = doerfler_mark(eta, 0.5);
  REQUIRE(marked.size() == 2);
  CHECK(marked[0] == 1);
  CHECK(marked[1] == 3);
}

TEST_CASE("greedy prefix satisfies the bulk criterion and is prefix-minimal") {
  std::mt19937 rng(20260814);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 40);
    Eigen::VectorXd eta(n);
    for (int i = 0; i < n; ++i) eta[i] = dist(rng) < 0.2 ? 0.0 : dist(rng);
    if (eta.sum() <= 0.0) eta[0] = 0.5;
    const double theta = 0.1 + 0.8 * dist(rng);

    auto marked = doerfler_mark(eta, theta);
    double sum = 0.0;
    for (int i : marked) sum += eta[i];
    CHECK(sum >= theta * eta.sum());
    if (marked.size() > 1) CHECK(sum - eta[marked.back()] < theta * eta.sum());
  }
}

TEST_CASE("decay-slope rule separates exponential from algebraic coefficients") {
  for (int r = 2; r <= 6; ++r) {
    std::vector<double> exp_decay(r + 1), alg_decay(r + 1);
    for (int k = 0; k <= r; ++k) {
      exp_decay[k] = std::pow(4.0, -k);
      alg_decay[k] = k == 0 ? 1.0 : std::pow(double(k), -2.0);
    }
    CHECK(decide_from_decay(exp_decay, kDefaultDecayThreshold) == RefineAction::P);
    // k^-2 sits exactly on the threshold at r = 2 (slope log 4) and falls
    // below it from r = 3 on.
    auto expect = r == 2 ? RefineAction::P : RefineAction::H;
    CHECK(decide_from_decay(alg_decay, kDefaultDecayThreshold) == expect);
  }
}

TEST_CASE("degenerate decay inputs use the documented fallbacks") {
  CHECK(decide_from_decay({1.0, 0.5}, kDefaultDecayThreshold) == RefineAction::H);  // r = 1
  CHECK(decide_from_decay({0.0, 0.0, 0.0}, kDefaultDecayThreshold) == RefineAction::P);
}

TEST_CASE("the decision is invariant under solution scaling") {
  for (double scale : {7.3, 1e-8, 1e8}) {
    std::vector<double> a(5), b(5);
    for (int k = 0; k <= 4; ++k) {
      a[k] = std::pow(4.0, -k);
      b[k] = a[k] * scale;
    }
    CHECK(decide_from_decay(a, kDefaultDecayThreshold) ==
          decide_from_decay(b, kDefaultDecayThreshold));
    std::vector<double> c(5), d(5);
    for (int k = 0; k <= 4; ++k) {
      c[k] = k == 0 ? 1.0 : std::pow(double(k), -2.0);
      d[k] = c[k] * scale;
    }
    CHECK(decide_from_decay(c, kDefaultDecayThreshold) ==
          decide_from_decay(d, kDefaultDecayThreshold));
  }
}

TEST_CASE("legendre_diagonal recovers planted diagonal coefficients") {
  for (int r : {3, 4}) {
    Mesh mesh = one_cell(r);
    DofMap dm = build_dof_map(mesh);

    auto planted = [&](const std::vector<double>& a) {
      const auto& nodes = shape_basis(r).nodes();
      Eigen::VectorXd u(dm.n_u()), p(dm.n_p());
      for (int j = 0; j <= r; ++j)
        for (int i = 0; i <= r; ++i) {
          double val = 0.0;
          for (int k = 0; k <= r; ++k)
            val += a[k] * orthonormal_legendre(k, nodes[i]) * orthonormal_legendre(k, nodes[j]);
          int slot = dm.disp.slots[0][LocalNodes::index(r, i, j)];
          int pslot = dm.pres.slots[0][LocalNodes::index(r, i, j)];
          u[DofMap::udof(slot, 0)] = val;
          u[DofMap::udof(slot, 1)] = 2.0 * val;
          p[pslot] = -val;
        }
      return FieldEvaluator(mesh, dm, u, p);
    };

    std::vector<double> a(r + 1);
    for (int k = 0; k <= r; ++k) a[k] = std::pow(4.0, -k);
    FieldEvaluator smooth = planted(a);
    auto diag = legendre_diagonal(smooth, 0);
    REQUIRE(static_cast<int>(diag.size()) == r + 1);
    const double combine = std::sqrt(1.0 + 4.0 + 1.0);
    for (int k = 0; k <= r; ++k)
      CHECK(diag[k] == doctest::Approx(combine * a[k]).epsilon(1e-12));
    CHECK(hp_decide(smooth, 0) == RefineAction::P);

    for (int k = 0; k <= r; ++k) a[k] = k == 0 ? 1.0 : std::pow(double(k), -2.0);
    FieldEvaluator rough = planted(a);
    CHECK(hp_decide(rough, 0) == (r == 2 ? RefineAction::P : RefineAction::H));
  }
}

TEST_CASE("polynomial-exact local solutions read as smooth") {
  Mesh mesh = one_cell(3);
  DofMap dm = build_dof_map(mesh);
  Eigen::VectorXd u(dm.n_u()), p(dm.n_p());
  for (int s = 0; s < dm.disp.num_free; ++s) {
    Vec2 x = dm.disp.free_position[s];
    u[DofMap::udof(s, 0)] = 1.0 + 0.5 * x[0] - x[1];
    u[DofMap::udof(s, 1)] = x[0] + x[1];
  }
  for (int s = 0; s < dm.pres.num_free; ++s) p[s] = 2.0 - dm.pres.free_position[s][0];
  FieldEvaluator fields(mesh, dm, u, p);
  CHECK(hp_decide(fields, 0) == RefineAction::P);
}
