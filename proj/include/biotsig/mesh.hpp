// Quadrilateral meshes with quartering refinement, hanging-node bookkeeping
// and per-element polynomial degrees.
//
// Refinement is append-only: an element id stays valid in every mesh derived
// from it, so solutions stored on a coarse snapshot can later be evaluated on
// a refined one by walking the element tree.
#pragma once

#include <Eigen/Dense>
#include <array>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace biotsig {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

// Boundary condition tags on element edges. Interior edges carry None.
enum class DispBC : unsigned char { None, Dirichlet, Traction, Contact };
enum class PresBC : unsigned char { None, Pressure, Flux };

struct EdgeTags {
  DispBC disp = DispBC::None;
  PresBC pres = PresBC::None;
  bool none() const { return disp == DispBC::None && pres == PresBC::None; }
};

struct Element {
  std::array<int, 4> vertex{};            // corners, counter-clockwise
  std::array<EdgeTags, 4> tag{};          // edge l runs corner l -> corner (l+1)%4
  int parent = -1;
  std::array<int, 4> child{-1, -1, -1, -1};
  int level = 0;
  int degree_u = 1;  // displacement polynomial degree r_T
  int degree_p = 1;  // pressure polynomial degree s_T
  bool leaf() const { return child[0] < 0; }
};

struct EdgeSide {
  int elem = -1;
  int edge = -1;
  bool operator==(const EdgeSide&) const = default;
};

// One topological interface between leaf elements (or a boundary edge).
// Canonical edge direction and parameter t in [-1, 1] follow side `a`
// (the master side for hanging interfaces).
struct EdgeInterface {
  enum class Kind { Interior, Boundary, Hanging };
  Kind kind = Kind::Boundary;
  EdgeSide a;                       // owner / master / boundary side
  EdgeSide b;                       // opposite side (Interior only)
  std::array<EdgeSide, 2> slave;    // Hanging: [0] covers t in [-1,0], [1] covers [0,1]
  int v0 = -1, v1 = -1;             // canonical endpoint vertices (direction of a)
  int hanging_vertex = -1;          // Hanging only
  EdgeTags tags;                    // Boundary only
};

class Mesh {
 public:
  // m-by-m grid on the unit square with the contact-problem tags:
  // top edge Dirichlet/Pressure, bottom Contact/Flux, sides Traction/Flux.
  static Mesh unit_square(int m);

  // General builder; cells list corner ids counter-clockwise, tags follow
  // the local edge convention.
  static Mesh from_data(std::vector<Vec2> vertices, std::vector<std::array<int, 4>> cells,
                        std::vector<std::array<EdgeTags, 4>> tags);

  // Quarters the marked leaves plus whatever closure keeps every edge at
  // most 1-irregular. Marked ids must be leaves.
  Mesh refined(const std::vector<int>& marked) const;

  // Sets r_T (and keeps s_T equal) on a leaf, then raises neighbor degrees
  // minimally so edge-adjacent degrees differ by at most one. Never lowers.
  Mesh with_degree(int elem, int degree) const;

  // Same, but with independent displacement/pressure degrees. The adaptive
  // driver always keeps them equal; this exists for exercising the mixed
  // degree bookkeeping.
  Mesh with_degrees(int elem, int degree_u, int degree_p) const;

  // Raises both degrees of every leaf by the same amount (delta >= 0). A
  // uniform shift preserves the degree-difference invariant, so this is a
  // plain bulk update; used for overrefined reference spaces.
  Mesh with_degrees_incremented(int delta) const;

  // Structural checks: positive Jacobians, tag coverage, 1-irregularity,
  // degree differences, tree consistency. Throws MeshError.
  void audit() const;

  // --- queries ------------------------------------------------------------
  int vertex_count() const { return static_cast<int>(vertices_.size()); }
  int element_count() const { return static_cast<int>(elements_.size()); }
  const Vec2& vertex(int v) const { return vertices_[v]; }
  const Element& element(int e) const { return elements_[e]; }
  const std::vector<int>& leaves() const;
  const std::vector<EdgeInterface>& interfaces() const;
  // Interface index for a leaf-local edge, any role.
  int interface_of(int leaf, int edge) const;

  // --- geometry (bilinear reference map from [-1,1]^2) ---------------------
  Vec2 map_to_physical(int elem, const Vec2& ref) const;
  Mat2 jacobian(int elem, const Vec2& ref) const;
  // d^2 F / (dxi deta); the only nonzero second derivative of the map.
  Vec2 twist(int elem) const;
  double diameter(int elem) const;
  double edge_length(int elem, int edge) const;
  // Outward unit normal of a local edge (edges of bilinear quads are straight).
  Vec2 edge_normal(int elem, int edge) const;

  // --- tree walking --------------------------------------------------------
  // Descends from an element to the leaf containing the given reference
  // point; returns the leaf id and writes the reference point within it.
  int descend(int elem, Vec2 ref, Vec2* leaf_ref) const;
  // Reference point in the parent corresponding to a point in child slot k.
  static Vec2 child_to_parent_ref(int k, const Vec2& ref);
  // The ancestor of `elem` that is a leaf in a snapshot with the given
  // element count (snapshots of the same tree share id prefixes).
  int ancestor_leaf_in_snapshot(int elem, int snapshot_element_count) const;

  static const std::array<std::array<int, 2>, 4>& edge_corners();

 private:
  friend class MeshBuilder;
  Mesh() = default;
  void invalidate_cache() const;
  void build_interfaces() const;
  int midpoint(int va, int vb);  // existing or newly created midpoint vertex
  void quarter(int elem, std::unordered_map<long long, std::vector<EdgeSide>>& leaf_edges);
  void refine_with_closure(int elem, int depth,
                           std::unordered_map<long long, std::vector<EdgeSide>>& leaf_edges);
  void degree_closure();

  std::vector<Vec2> vertices_;
  std::vector<Element> elements_;
  std::map<std::pair<int, int>, int> edge_midpoint_;
  std::unordered_map<int, std::vector<std::pair<int, int>>> midpoint_of_;

  mutable bool cache_valid_ = false;
  mutable std::vector<int> leaves_;
  mutable std::vector<EdgeInterface> interfaces_;
  mutable std::unordered_map<int, int> leaf_pos_;
  mutable std::vector<std::array<int, 4>> leaf_edge_iface_;
};

}  // namespace biotsig
