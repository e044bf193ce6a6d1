// Degrees of freedom for the tensor-product Lagrange spaces on a quad mesh.
//
// Every shared edge owns a single set of edge nodes at the minimum of the
// adjacent element degrees; element-side nodes that exceed the edge degree,
// nodes on the fine side of a hanging edge, and the hanging vertex itself
// become affine combinations of free dofs so that the discrete fields stay
// continuous. Dirichlet nodes are eliminated (homogeneous data).
#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "biotsig/mesh.hpp"

namespace biotsig {

struct LinearTerm {
  int dof = -1;
  double weight = 0.0;
};

// Local slot encoding in ScalarLayout::slots:
//   >= 0   free dof id
//   -1     eliminated (Dirichlet)
//   <= -2  constrained: combo index -(slot + 2)
inline constexpr int kEliminatedSlot = -1;
inline int encode_combo(int idx) { return -(idx + 2); }
inline int decode_combo(int slot) { return -(slot + 2); }

struct ScalarLayout {
  int num_free = 0;
  int node_count = 0;         // geometric nodes including eliminated/constrained
  int constrained_count = 0;  // nodes tied to free dofs by a combination
  std::vector<std::vector<int>> slots;           // [leaf position][local node]
  std::vector<std::vector<LinearTerm>> combos;   // over free dofs
  std::vector<Vec2> free_position;

  const std::vector<LinearTerm>& combo(int slot) const { return combos[decode_combo(slot)]; }
};

struct DofMap {
  ScalarLayout disp;  // scalar layout shared by both displacement components
  ScalarLayout pres;
  std::vector<int> leaf_elems;
  std::unordered_map<int, int> leaf_pos;

  int n_u() const { return 2 * disp.num_free; }
  int n_p() const { return pres.num_free; }
  int n_total() const { return n_u() + n_p(); }
  // Global displacement dof of a scalar dof and component.
  static int udof(int scalar_dof, int comp) { return 2 * scalar_dof + comp; }
};

DofMap build_dof_map(const Mesh& mesh);

// Tensor-product local node enumeration for one element of degree d;
// local node (i, j) sits at (gl_i, gl_j) and has index j*(d+1)+i.
struct LocalNodes {
  static int count(int d) { return (d + 1) * (d + 1); }
  static int index(int d, int i, int j) { return j * (d + 1) + i; }
  // Tensor indices of corner c (0..3, counter-clockwise).
  static std::pair<int, int> corner_ij(int d, int c);
  // Tensor indices of the k-th node (k = 0..d) along the traversal of local
  // edge l; the traversal parameter of that node is the k-th Gauss-Lobatto
  // node of degree d.
  static std::pair<int, int> edge_node_ij(int d, int l, int k);
};

// One pointwise non-penetration condition coeff * u[dof] <= bound collocated
// at a Gauss-Lobatto node of a contact edge. The nodal basis plus an
// axis-aligned contact normal make the normal trace a single-dof functional.
struct ContactConstraint {
  int dof = -1;       // displacement dof index
  double coeff = 0.0;
  double bound = 0.0;
  Vec2 point{0, 0};
  int iface = -1;     // boundary interface the node belongs to
};

std::vector<ContactConstraint> contact_constraints(const Mesh& mesh, const DofMap& dofmap,
                                                   const std::function<double(const Vec2&)>& gap);

}  // namespace biotsig
