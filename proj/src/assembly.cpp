#include "biotsig/assembly.hpp"

#include <Eigen/SparseCholesky>
#include <map>
#include <stdexcept>
#include <vector>

#include "biotsig/errors.hpp"
#include "biotsig/lagrange.hpp"
#include "biotsig/quadrature.hpp"

namespace biotsig {

void MaterialParams::validate() const {
  if (!(tau > 0.0) || !(iota > 0.0) || !(alpha > 0.0))
    throw std::invalid_argument("material parameters tau, iota, alpha must be positive");
  if (std::abs(kappa(0, 1) - kappa(1, 0)) > 1e-14 * (1.0 + kappa.norm()))
    throw std::invalid_argument("permeability tensor must be symmetric");
  if (!(kappa(0, 0) > 0.0) || !(kappa.determinant() > 0.0))
    throw std::invalid_argument("permeability tensor must be positive definite");
}

namespace {

// Per-direction shape values and derivatives at the quadrature points,
// cached by (degree, point count).
struct BasisTable {
  Eigen::MatrixXd val, der;  // (q, degree+1)
};

const BasisTable& basis_table(int degree, const QuadratureRule1D& rule) {
  static std::map<std::pair<int, int>, BasisTable> cache;
  auto key = std::pair(degree, static_cast<int>(rule.points.size()));
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  BasisTable table;
  const ShapeBasis& basis = shape_basis(degree);
  int q = static_cast<int>(rule.points.size());
  table.val.resize(q, degree + 1);
  table.der.resize(q, degree + 1);
  std::vector<double> v(degree + 1), d(degree + 1);
  for (int k = 0; k < q; ++k) {
    basis.eval(rule.points[k], v.data(), d.data());
    for (int i = 0; i <= degree; ++i) {
      table.val(k, i) = v[i];
      table.der(k, i) = d[i];
    }
  }
  return cache.emplace(key, std::move(table)).first->second;
}

const QuadratureRule1D& quad_rule(int q) {
  static std::map<int, QuadratureRule1D> cache;
  auto it = cache.find(q);
  if (it != cache.end()) return it->second;
  return cache.emplace(q, gauss_legendre(q)).first->second;
}

// Accumulates element contributions into a sparse matrix in batches, so large
// meshes never hold the full triplet list at once.
class SparseAccumulator {
 public:
  SparseAccumulator(int rows, int cols) : matrix_(rows, cols) {}

  void add(int row, int col, double value) { triplets_.emplace_back(row, col, value); }

  void maybe_flush() {
    if (triplets_.size() > kFlushLimit) flush();
  }

  Eigen::SparseMatrix<double> take() {
    flush();
    matrix_.makeCompressed();
    return std::move(matrix_);
  }

 private:
  static constexpr std::size_t kFlushLimit = 8u << 20;

  void flush() {
    if (triplets_.empty()) return;
    Eigen::SparseMatrix<double> batch(matrix_.rows(), matrix_.cols());
    batch.setFromTriplets(triplets_.begin(), triplets_.end());
    triplets_.clear();
    matrix_ += batch;
  }

  Eigen::SparseMatrix<double> matrix_;
  std::vector<Eigen::Triplet<double>> triplets_;
};

// Expansion of a local scalar slot into free dofs; a singleton buffer avoids
// allocating for the common unconstrained case.
struct SlotTerms {
  const LinearTerm* data = nullptr;
  int size = 0;
};

SlotTerms slot_terms(const ScalarLayout& layout, int slot, LinearTerm& singleton) {
  if (slot >= 0) {
    singleton = {slot, 1.0};
    return {&singleton, 1};
  }
  if (slot == kEliminatedSlot) return {nullptr, 0};
  const auto& combo = layout.combo(slot);
  return {combo.data(), static_cast<int>(combo.size())};
}

}  // namespace

SystemBlocks assemble(const Mesh& mesh, const DofMap& dofmap, const MaterialParams& mat,
                      const VectorField& load_e, const ScalarField& load_f, bool with_gram) {
  mat.validate();
  const int n_u = dofmap.n_u();
  const int n_p = dofmap.n_p();

  SystemBlocks blocks;
  blocks.fe = Eigen::VectorXd::Zero(n_u);
  blocks.ff = Eigen::VectorXd::Zero(n_p);

  SparseAccumulator A(n_u, n_u), B(n_p, n_u), C(n_p, n_p);
  SparseAccumulator GU(n_u, n_u), GP(n_p, n_p);

  const auto& leaves = mesh.leaves();
  for (std::size_t lp = 0; lp < leaves.size(); ++lp) {
    const int t = leaves[lp];
    const Element& el = mesh.element(t);
    const int ru = el.degree_u, sp = el.degree_p;
    const int q = std::max(ru, sp) + 1;
    const QuadratureRule1D& rule = quad_rule(q);
    const BasisTable& bu = basis_table(ru, rule);
    const BasisTable& bp = basis_table(sp, rule);
    const int nu = LocalNodes::count(ru);
    const int np = LocalNodes::count(sp);

    Eigen::MatrixXd Aloc = Eigen::MatrixXd::Zero(2 * nu, 2 * nu);
    Eigen::MatrixXd Bloc = Eigen::MatrixXd::Zero(np, 2 * nu);
    Eigen::MatrixXd Cloc = Eigen::MatrixXd::Zero(np, np);
    Eigen::MatrixXd Guloc, Gploc;
    if (with_gram) {
      Guloc = Eigen::MatrixXd::Zero(nu, nu);  // scalar; expanded per component
      Gploc = Eigen::MatrixXd::Zero(np, np);
    }
    Eigen::VectorXd feloc = Eigen::VectorXd::Zero(2 * nu);
    Eigen::VectorXd ffloc = Eigen::VectorXd::Zero(np);

    Eigen::Matrix2Xd grad_u(2, nu), grad_p(2, np);
    Eigen::VectorXd val_u(nu), val_p(np);

    for (int qy = 0; qy < q; ++qy)
      for (int qx = 0; qx < q; ++qx) {
        const Vec2 ref(rule.points[qx], rule.points[qy]);
        const Mat2 J = mesh.jacobian(t, ref);
        const double detJ = J.determinant();
        const Mat2 invJT = J.inverse().transpose();
        const double w = rule.weights[qx] * rule.weights[qy] * detJ;

        for (int j = 0; j <= ru; ++j)
          for (int i = 0; i <= ru; ++i) {
            const int n = LocalNodes::index(ru, i, j);
            val_u(n) = bu.val(qx, i) * bu.val(qy, j);
            grad_u.col(n) =
                invJT * Vec2(bu.der(qx, i) * bu.val(qy, j), bu.val(qx, i) * bu.der(qy, j));
          }
        for (int j = 0; j <= sp; ++j)
          for (int i = 0; i <= sp; ++i) {
            const int n = LocalNodes::index(sp, i, j);
            val_p(n) = bp.val(qx, i) * bp.val(qy, j);
            grad_p.col(n) =
                invJT * Vec2(bp.der(qx, i) * bp.val(qy, j), bp.val(qx, i) * bp.der(qy, j));
          }

        const Vec2 x = mesh.map_to_physical(t, ref);
        const Vec2 fe_val = load_e(x);
        const double ff_val = load_f(x);

        for (int m = 0; m < nu; ++m) {
          const Vec2 gm = grad_u.col(m);
          for (int n = 0; n < nu; ++n) {
            const Vec2 gn = grad_u.col(n);
            const double gg = gm.dot(gn);
            for (int a = 0; a < 2; ++a)
              for (int b = 0; b < 2; ++b) {
                double v = mat.tau * (gm[b] * gn[a] + (a == b ? gg : 0.0)) +
                           mat.iota * gm[a] * gn[b];
                Aloc(2 * m + a, 2 * n + b) += w * v;
              }
          }
          for (int a = 0; a < 2; ++a) feloc(2 * m + a) += w * fe_val[a] * val_u(m);
        }
        for (int k = 0; k < np; ++k) {
          for (int n = 0; n < nu; ++n) {
            const Vec2 gn = grad_u.col(n);
            for (int b = 0; b < 2; ++b)
              Bloc(k, 2 * n + b) += w * mat.alpha * val_p(k) * gn[b];
          }
          const Vec2 kg = mat.kappa * grad_p.col(k);
          for (int l = 0; l < np; ++l)
            Cloc(k, l) += w * ((mat.alpha * mat.alpha / mat.iota) * val_p(k) * val_p(l) +
                               kg.dot(grad_p.col(l)));
          ffloc(k) += w * ff_val * val_p(k);
        }
        if (with_gram) {
          for (int m = 0; m < nu; ++m)
            for (int n = 0; n < nu; ++n)
              Guloc(m, n) += w * (val_u(m) * val_u(n) + grad_u.col(m).dot(grad_u.col(n)));
          for (int k = 0; k < np; ++k)
            for (int l = 0; l < np; ++l)
              Gploc(k, l) += w * (val_p(k) * val_p(l) + grad_p.col(k).dot(grad_p.col(l)));
        }
      }

    // Distribute through the slot expansions.
    const auto& su = dofmap.disp.slots[lp];
    const auto& spp = dofmap.pres.slots[lp];
    LinearTerm sing_m, sing_n, sing_k, sing_l;
    for (int m = 0; m < nu; ++m) {
      SlotTerms Tm = slot_terms(dofmap.disp, su[m], sing_m);
      if (Tm.size == 0) continue;
      for (int im = 0; im < Tm.size; ++im) {
        const LinearTerm& tm = Tm.data[im];
        for (int a = 0; a < 2; ++a)
          blocks.fe(DofMap::udof(tm.dof, a)) += tm.weight * feloc(2 * m + a);
      }
      for (int n = 0; n < nu; ++n) {
        SlotTerms Tn = slot_terms(dofmap.disp, su[n], sing_n);
        if (Tn.size == 0) continue;
        for (int im = 0; im < Tm.size; ++im)
          for (int in = 0; in < Tn.size; ++in) {
            const double ww = Tm.data[im].weight * Tn.data[in].weight;
            const int gm = Tm.data[im].dof, gn = Tn.data[in].dof;
            for (int a = 0; a < 2; ++a)
              for (int b = 0; b < 2; ++b)
                A.add(DofMap::udof(gm, a), DofMap::udof(gn, b),
                      ww * Aloc(2 * m + a, 2 * n + b));
            if (with_gram) {
              const double g = ww * Guloc(m, n);
              GU.add(DofMap::udof(gm, 0), DofMap::udof(gn, 0), g);
              GU.add(DofMap::udof(gm, 1), DofMap::udof(gn, 1), g);
            }
          }
      }
    }
    for (int k = 0; k < np; ++k) {
      SlotTerms Tk = slot_terms(dofmap.pres, spp[k], sing_k);
      if (Tk.size == 0) continue;
      for (int ik = 0; ik < Tk.size; ++ik)
        blocks.ff(Tk.data[ik].dof) += Tk.data[ik].weight * ffloc(k);
      for (int n = 0; n < nu; ++n) {
        SlotTerms Tn = slot_terms(dofmap.disp, su[n], sing_n);
        for (int ik = 0; ik < Tk.size; ++ik)
          for (int in = 0; in < Tn.size; ++in)
            for (int b = 0; b < 2; ++b)
              B.add(Tk.data[ik].dof, DofMap::udof(Tn.data[in].dof, b),
                    Tk.data[ik].weight * Tn.data[in].weight * Bloc(k, 2 * n + b));
      }
      for (int l = 0; l < np; ++l) {
        SlotTerms Tl = slot_terms(dofmap.pres, spp[l], sing_l);
        for (int ik = 0; ik < Tk.size; ++ik)
          for (int il = 0; il < Tl.size; ++il) {
            const double ww = Tk.data[ik].weight * Tl.data[il].weight;
            C.add(Tk.data[ik].dof, Tl.data[il].dof, ww * Cloc(k, l));
            if (with_gram) GP.add(Tk.data[ik].dof, Tl.data[il].dof, ww * Gploc(k, l));
          }
      }
    }
    A.maybe_flush();
    B.maybe_flush();
    C.maybe_flush();
    if (with_gram) {
      GU.maybe_flush();
      GP.maybe_flush();
    }
  }

  blocks.A = A.take();
  blocks.B = B.take();
  blocks.C = C.take();
  if (with_gram) {
    blocks.gram_u = GU.take();
    blocks.gram_p = GP.take();
  }
  return blocks;
}

std::pair<double, double> energy_norms(const SystemBlocks& blocks, const Eigen::VectorXd& u,
                                       const Eigen::VectorXd& p) {
  if (u.size() != blocks.A.rows() || p.size() != blocks.C.rows())
    throw std::invalid_argument("energy_norms: vector sizes do not match the blocks");
  double au = u.dot(blocks.A * u);
  double cp = p.dot(blocks.C * p);
  return {std::sqrt(std::max(0.0, au)), std::sqrt(std::max(0.0, cp))};
}

namespace {

double dual_norm(const Eigen::SparseMatrix<double>& K, const Eigen::VectorXd& f,
                 const char* what) {
  if (f.size() != K.rows()) throw std::invalid_argument("dual_norm: size mismatch");
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(K);
  if (solver.info() != Eigen::Success)
    throw SolverError(std::string("dual_norm: factorization of ") + what + " failed");
  Eigen::VectorXd x = solver.solve(f);
  return std::sqrt(std::max(0.0, f.dot(x)));
}

}  // namespace

double dual_norm_u(const SystemBlocks& blocks, const Eigen::VectorXd& f) {
  return dual_norm(blocks.A, f, "A");
}

double dual_norm_p(const SystemBlocks& blocks, const Eigen::VectorXd& f) {
  return dual_norm(blocks.C, f, "C");
}

}  // namespace biotsig
