#include "biotsig/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "biotsig/errors.hpp"
#include "biotsig/lagrange.hpp"
#include "biotsig/quadrature.hpp"

namespace biotsig {

namespace {

long long edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<long long>(a) << 32) | static_cast<unsigned>(b);
}

void remove_side(std::vector<EdgeSide>& sides, int elem) {
  std::erase_if(sides, [elem](const EdgeSide& s) { return s.elem == elem; });
}

}  // namespace

const std::array<std::array<int, 2>, 4>& Mesh::edge_corners() {
  static const std::array<std::array<int, 2>, 4> table = {{{0, 1}, {1, 2}, {2, 3}, {3, 0}}};
  return table;
}

// --- builders ---------------------------------------------------------------

Mesh Mesh::unit_square(int m) {
  if (m < 1) throw MeshError("unit_square: need at least one cell per direction");
  std::vector<Vec2> vertices;
  vertices.reserve((m + 1) * (m + 1));
  double h = 1.0 / m;
  for (int j = 0; j <= m; ++j)
    for (int i = 0; i <= m; ++i) vertices.emplace_back(i * h, j * h);

  std::vector<std::array<int, 4>> cells;
  std::vector<std::array<EdgeTags, 4>> tags;
  auto vid = [m](int i, int j) { return j * (m + 1) + i; };
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i) {
      cells.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)});
      std::array<EdgeTags, 4> t{};
      if (j == 0) t[0] = {DispBC::Contact, PresBC::Flux};
      if (i == m - 1) t[1] = {DispBC::Traction, PresBC::Flux};
      if (j == m - 1) t[2] = {DispBC::Dirichlet, PresBC::Pressure};
      if (i == 0) t[3] = {DispBC::Traction, PresBC::Flux};
      tags.push_back(t);
    }
  return from_data(std::move(vertices), std::move(cells), std::move(tags));
}

Mesh Mesh::from_data(std::vector<Vec2> vertices, std::vector<std::array<int, 4>> cells,
                     std::vector<std::array<EdgeTags, 4>> tags) {
  if (cells.size() != tags.size()) throw MeshError("from_data: one tag set per cell required");
  Mesh mesh;
  mesh.vertices_ = std::move(vertices);
  mesh.elements_.reserve(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    Element el;
    el.vertex = cells[c];
    el.tag = tags[c];
    for (int v : el.vertex)
      if (v < 0 || v >= mesh.vertex_count()) throw MeshError("from_data: vertex id out of range");
    mesh.elements_.push_back(el);
  }
  return mesh;
}

// --- caching ----------------------------------------------------------------

void Mesh::invalidate_cache() const { cache_valid_ = false; }

const std::vector<int>& Mesh::leaves() const {
  if (!cache_valid_) build_interfaces();
  return leaves_;
}

const std::vector<EdgeInterface>& Mesh::interfaces() const {
  if (!cache_valid_) build_interfaces();
  return interfaces_;
}

int Mesh::interface_of(int leaf, int edge) const {
  if (!cache_valid_) build_interfaces();
  auto it = leaf_pos_.find(leaf);
  if (it == leaf_pos_.end()) throw MeshError("interface_of: element is not a leaf");
  return leaf_edge_iface_[it->second][edge];
}

void Mesh::build_interfaces() const {
  leaves_.clear();
  interfaces_.clear();
  leaf_pos_.clear();
  for (int e = 0; e < element_count(); ++e)
    if (elements_[e].leaf()) {
      leaf_pos_[e] = static_cast<int>(leaves_.size());
      leaves_.push_back(e);
    }
  leaf_edge_iface_.assign(leaves_.size(), {-1, -1, -1, -1});

  std::unordered_map<long long, std::vector<EdgeSide>> edge_map;
  for (int t : leaves_)
    for (int l = 0; l < 4; ++l) {
      auto [c0, c1] = std::pair(elements_[t].vertex[edge_corners()[l][0]],
                                elements_[t].vertex[edge_corners()[l][1]]);
      edge_map[edge_key(c0, c1)].push_back({t, l});
    }

  auto leaf_edge_of = [&](int va, int vb, int other_than) -> EdgeSide {
    auto it = edge_map.find(edge_key(va, vb));
    if (it == edge_map.end()) return {};
    for (const EdgeSide& s : it->second)
      if (s.elem != other_than) return s;
    return {};
  };

  auto set_iface = [&](const EdgeSide& s, int idx) {
    leaf_edge_iface_[leaf_pos_.at(s.elem)][s.edge] = idx;
  };

  for (int t : leaves_) {
    for (int l = 0; l < 4; ++l) {
      if (leaf_edge_iface_[leaf_pos_.at(t)][l] >= 0) continue;
      const Element& el = elements_[t];
      int va = el.vertex[edge_corners()[l][0]];
      int vb = el.vertex[edge_corners()[l][1]];

      EdgeSide mate = leaf_edge_of(va, vb, t);
      if (mate.elem >= 0) {
        // Conforming interior edge; let the smaller element id own it.
        EdgeInterface iface;
        iface.kind = EdgeInterface::Kind::Interior;
        iface.a = {t, l};
        iface.b = mate;
        if (mate.elem < t) std::swap(iface.a, iface.b);
        iface.v0 = elements_[iface.a.elem].vertex[edge_corners()[iface.a.edge][0]];
        iface.v1 = elements_[iface.a.elem].vertex[edge_corners()[iface.a.edge][1]];
        if (!el.tag[l].none() || !elements_[mate.elem].tag[mate.edge].none())
          throw MeshError("interior edge carries a boundary tag");
        int idx = static_cast<int>(interfaces_.size());
        interfaces_.push_back(iface);
        set_iface(iface.a, idx);
        set_iface(iface.b, idx);
        continue;
      }

      auto mid_it = edge_midpoint_.find({std::min(va, vb), std::max(va, vb)});
      if (mid_it != edge_midpoint_.end()) {
        // This leaf edge was bisected on the other side: t is the master.
        int m = mid_it->second;
        EdgeSide s0 = leaf_edge_of(va, m, -1);
        EdgeSide s1 = leaf_edge_of(m, vb, -1);
        if (s0.elem < 0 || s1.elem < 0)
          throw MeshError("edge with more than one hanging node (2-irregular mesh)");
        EdgeInterface iface;
        iface.kind = EdgeInterface::Kind::Hanging;
        iface.a = {t, l};
        iface.slave = {s0, s1};
        iface.v0 = va;
        iface.v1 = vb;
        iface.hanging_vertex = m;
        if (!el.tag[l].none()) throw MeshError("hanging edge carries a boundary tag");
        int idx = static_cast<int>(interfaces_.size());
        interfaces_.push_back(iface);
        set_iface(iface.a, idx);
        set_iface(s0, idx);
        set_iface(s1, idx);
        continue;
      }

      // Slave edges are handled when their master comes around; detect and
      // skip them here.
      bool is_slave = false;
      for (int end : {va, vb}) {
        auto par_it = midpoint_of_.find(end);
        if (par_it == midpoint_of_.end()) continue;
        for (auto [px, py] : par_it->second) {
          int other = (end == va) ? vb : va;
          if ((other == px || other == py) && leaf_edge_of(px, py, -1).elem >= 0) is_slave = true;
        }
      }
      if (is_slave) continue;

      if (el.tag[l].none())
        throw MeshError("unmatched interior edge of element " + std::to_string(t));
      EdgeInterface iface;
      iface.kind = EdgeInterface::Kind::Boundary;
      iface.a = {t, l};
      iface.v0 = va;
      iface.v1 = vb;
      iface.tags = el.tag[l];
      int idx = static_cast<int>(interfaces_.size());
      interfaces_.push_back(iface);
      set_iface(iface.a, idx);
    }
  }

  for (std::size_t i = 0; i < leaves_.size(); ++i)
    for (int l = 0; l < 4; ++l)
      if (leaf_edge_iface_[i][l] < 0)
        throw MeshError("leaf edge without interface (element " + std::to_string(leaves_[i]) +
                        ")");
  cache_valid_ = true;
}

// --- refinement ---------------------------------------------------------------

int Mesh::midpoint(int va, int vb) {
  auto key = std::pair(std::min(va, vb), std::max(va, vb));
  auto it = edge_midpoint_.find(key);
  if (it != edge_midpoint_.end()) return it->second;
  int id = vertex_count();
  vertices_.push_back(0.5 * (vertices_[va] + vertices_[vb]));
  edge_midpoint_.emplace(key, id);
  midpoint_of_[id].push_back(key);
  return id;
}

void Mesh::quarter(int elem, std::unordered_map<long long, std::vector<EdgeSide>>& leaf_edges) {
  // Copy: pushing children may reallocate the element vector.
  const Element el = elements_[elem];
  const auto v = el.vertex;
  int m01 = midpoint(v[0], v[1]);
  int m12 = midpoint(v[1], v[2]);
  int m23 = midpoint(v[2], v[3]);
  int m30 = midpoint(v[3], v[0]);
  int c = vertex_count();
  vertices_.push_back(0.25 * (vertices_[v[0]] + vertices_[v[1]] + vertices_[v[2]] +
                              vertices_[v[3]]));

  const std::array<std::array<int, 4>, 4> corners = {{{v[0], m01, c, m30},
                                                      {m01, v[1], m12, c},
                                                      {c, m12, v[2], m23},
                                                      {m30, c, m23, v[3]}}};
  for (int l = 0; l < 4; ++l) {
    auto [c0, c1] = std::pair(v[edge_corners()[l][0]], v[edge_corners()[l][1]]);
    remove_side(leaf_edges[edge_key(c0, c1)], elem);
  }
  for (int k = 0; k < 4; ++k) {
    Element child;
    child.vertex = corners[k];
    child.parent = elem;
    child.level = el.level + 1;
    child.degree_u = el.degree_u;
    child.degree_p = el.degree_p;
    // Child k touches parent edges k and (k+3)%4 and inherits their tags.
    child.tag[k] = el.tag[k];
    child.tag[(k + 3) % 4] = el.tag[(k + 3) % 4];
    int id = element_count();
    elements_[elem].child[k] = id;
    elements_.push_back(child);
    for (int l = 0; l < 4; ++l) {
      auto [c0, c1] = std::pair(corners[k][edge_corners()[l][0]], corners[k][edge_corners()[l][1]]);
      leaf_edges[edge_key(c0, c1)].push_back({id, l});
    }
  }
}

void Mesh::refine_with_closure(int elem, int depth,
                               std::unordered_map<long long, std::vector<EdgeSide>>& leaf_edges) {
  if (depth > 64) throw MeshError("refinement closure recursion ran away");
  if (!elements_[elem].leaf()) return;

  // Any edge of `elem` that is the finer half of a coarser leaf's edge forces
  // that neighbor to be quartered first, otherwise its edge would end up with
  // two hanging nodes.
  for (int pass = 0; pass < 8; ++pass) {
    std::vector<int> coarser;
    for (int l = 0; l < 4; ++l) {
      int va = elements_[elem].vertex[edge_corners()[l][0]];
      int vb = elements_[elem].vertex[edge_corners()[l][1]];
      auto it = leaf_edges.find(edge_key(va, vb));
      bool conforming = false;
      if (it != leaf_edges.end())
        for (const EdgeSide& s : it->second)
          if (s.elem != elem) conforming = true;
      if (conforming) continue;
      for (int end : {va, vb}) {
        auto par_it = midpoint_of_.find(end);
        if (par_it == midpoint_of_.end()) continue;
        for (auto [px, py] : par_it->second) {
          int other = (end == va) ? vb : va;
          if (other != px && other != py) continue;
          auto master_it = leaf_edges.find(edge_key(px, py));
          if (master_it == leaf_edges.end()) continue;
          for (const EdgeSide& s : master_it->second)
            if (s.elem != elem) coarser.push_back(s.elem);
        }
      }
    }
    if (coarser.empty()) break;
    for (int s : coarser) refine_with_closure(s, depth + 1, leaf_edges);
  }
  quarter(elem, leaf_edges);
}

Mesh Mesh::refined(const std::vector<int>& marked) const {
  Mesh out = *this;
  out.invalidate_cache();

  std::unordered_map<long long, std::vector<EdgeSide>> leaf_edges;
  for (int e = 0; e < out.element_count(); ++e)
    if (out.elements_[e].leaf())
      for (int l = 0; l < 4; ++l) {
        int c0 = out.elements_[e].vertex[edge_corners()[l][0]];
        int c1 = out.elements_[e].vertex[edge_corners()[l][1]];
        leaf_edges[edge_key(c0, c1)].push_back({e, l});
      }

  std::set<int> todo;
  for (int e : marked) {
    if (e < 0 || e >= element_count()) throw MeshError("refined: element id out of range");
    if (!element(e).leaf()) throw MeshError("refined: marked element is not a leaf");
    todo.insert(e);
  }
  for (int e : todo) out.refine_with_closure(e, 0, leaf_edges);
  return out;
}

// --- degrees -------------------------------------------------------------------

void Mesh::degree_closure() {
  // Raise degrees until edge-adjacent leaves differ by at most one. Each
  // sweep only raises, so termination is bounded by kMaxDegree sweeps.
  invalidate_cache();
  for (int sweep = 0; sweep <= kMaxDegree + 1; ++sweep) {
    bool changed = false;
    for (const EdgeInterface& iface : interfaces()) {
      std::vector<std::pair<int, int>> pairs;
      if (iface.kind == EdgeInterface::Kind::Interior)
        pairs.push_back({iface.a.elem, iface.b.elem});
      else if (iface.kind == EdgeInterface::Kind::Hanging) {
        pairs.push_back({iface.a.elem, iface.slave[0].elem});
        pairs.push_back({iface.a.elem, iface.slave[1].elem});
      }
      for (auto [x, y] : pairs) {
        for (auto field : {&Element::degree_u, &Element::degree_p}) {
          int& dx = elements_[x].*field;
          int& dy = elements_[y].*field;
          if (dx - dy > 1) {
            dy = dx - 1;
            changed = true;
          } else if (dy - dx > 1) {
            dx = dy - 1;
            changed = true;
          }
        }
      }
    }
    if (!changed) return;
  }
  throw MeshError("degree closure did not reach a fixpoint");
}

Mesh Mesh::with_degrees(int elem, int degree_u, int degree_p) const {
  if (degree_u < 1 || degree_u > kMaxDegree || degree_p < 1 || degree_p > kMaxDegree)
    throw DegreeError("with_degrees: degree outside 1.." + std::to_string(kMaxDegree));
  if (elem < 0 || elem >= element_count() || !element(elem).leaf())
    throw MeshError("with_degrees: not a leaf element");
  Mesh out = *this;
  out.elements_[elem].degree_u = degree_u;
  out.elements_[elem].degree_p = degree_p;
  out.degree_closure();
  return out;
}

Mesh Mesh::with_degree(int elem, int degree) const { return with_degrees(elem, degree, degree); }

Mesh Mesh::with_degrees_incremented(int delta) const {
  if (delta < 0) throw std::invalid_argument("with_degrees_incremented: delta must be >= 0");
  Mesh out = *this;
  for (Element& el : out.elements_) {
    if (!el.leaf()) continue;
    if (el.degree_u + delta > kMaxDegree || el.degree_p + delta > kMaxDegree)
      throw DegreeError("with_degrees_incremented: degree above " + std::to_string(kMaxDegree));
    el.degree_u += delta;
    el.degree_p += delta;
  }
  return out;
}

// --- geometry -------------------------------------------------------------------

Vec2 Mesh::map_to_physical(int elem, const Vec2& ref) const {
  const Element& el = elements_[elem];
  double xi = ref[0], eta = ref[1];
  return 0.25 * ((1 - xi) * (1 - eta) * vertices_[el.vertex[0]] +
                 (1 + xi) * (1 - eta) * vertices_[el.vertex[1]] +
                 (1 + xi) * (1 + eta) * vertices_[el.vertex[2]] +
                 (1 - xi) * (1 + eta) * vertices_[el.vertex[3]]);
}

Mat2 Mesh::jacobian(int elem, const Vec2& ref) const {
  const Element& el = elements_[elem];
  double xi = ref[0], eta = ref[1];
  Vec2 dxi = 0.25 * (-(1 - eta) * vertices_[el.vertex[0]] + (1 - eta) * vertices_[el.vertex[1]] +
                     (1 + eta) * vertices_[el.vertex[2]] - (1 + eta) * vertices_[el.vertex[3]]);
  Vec2 deta = 0.25 * (-(1 - xi) * vertices_[el.vertex[0]] - (1 + xi) * vertices_[el.vertex[1]] +
                      (1 + xi) * vertices_[el.vertex[2]] + (1 - xi) * vertices_[el.vertex[3]]);
  Mat2 J;
  J.col(0) = dxi;
  J.col(1) = deta;
  return J;
}

Vec2 Mesh::twist(int elem) const {
  const Element& el = elements_[elem];
  return 0.25 * (vertices_[el.vertex[0]] - vertices_[el.vertex[1]] + vertices_[el.vertex[2]] -
                 vertices_[el.vertex[3]]);
}

double Mesh::diameter(int elem) const {
  const Element& el = elements_[elem];
  double d1 = (vertices_[el.vertex[2]] - vertices_[el.vertex[0]]).norm();
  double d2 = (vertices_[el.vertex[3]] - vertices_[el.vertex[1]]).norm();
  return std::max(d1, d2);
}

double Mesh::edge_length(int elem, int edge) const {
  const Element& el = elements_[elem];
  return (vertices_[el.vertex[edge_corners()[edge][1]]] -
          vertices_[el.vertex[edge_corners()[edge][0]]])
      .norm();
}

Vec2 Mesh::edge_normal(int elem, int edge) const {
  const Element& el = elements_[elem];
  Vec2 d = vertices_[el.vertex[edge_corners()[edge][1]]] -
           vertices_[el.vertex[edge_corners()[edge][0]]];
  Vec2 n(d[1], -d[0]);
  return n.normalized();
}

// --- tree walking -----------------------------------------------------------------

Vec2 Mesh::child_to_parent_ref(int k, const Vec2& ref) {
  switch (k) {
    case 0: return {(ref[0] - 1) / 2, (ref[1] - 1) / 2};
    case 1: return {(ref[0] + 1) / 2, (ref[1] - 1) / 2};
    case 2: return {(ref[0] + 1) / 2, (ref[1] + 1) / 2};
    default: return {(ref[0] - 1) / 2, (ref[1] + 1) / 2};
  }
}

int Mesh::descend(int elem, Vec2 ref, Vec2* leaf_ref) const {
  while (!elements_[elem].leaf()) {
    int k;
    if (ref[1] <= 0)
      k = (ref[0] <= 0) ? 0 : 1;
    else
      k = (ref[0] <= 0) ? 3 : 2;
    // Parent-to-child maps are the inverses of child_to_parent_ref.
    switch (k) {
      case 0: ref = Vec2(2 * ref[0] + 1, 2 * ref[1] + 1); break;
      case 1: ref = Vec2(2 * ref[0] - 1, 2 * ref[1] + 1); break;
      case 2: ref = Vec2(2 * ref[0] - 1, 2 * ref[1] - 1); break;
      default: ref = Vec2(2 * ref[0] + 1, 2 * ref[1] - 1); break;
    }
    elem = elements_[elem].child[k];
  }
  if (leaf_ref) *leaf_ref = ref;
  return elem;
}

int Mesh::ancestor_leaf_in_snapshot(int elem, int snapshot_element_count) const {
  int e = elem;
  while (e >= 0) {
    bool in_snapshot = e < snapshot_element_count;
    bool leaf_there = in_snapshot && (elements_[e].child[0] < 0 ||
                                      elements_[e].child[0] >= snapshot_element_count);
    if (leaf_there) return e;
    e = elements_[e].parent;
  }
  throw MeshError("element has no ancestor leaf in the given snapshot");
}

// --- audit ----------------------------------------------------------------------

void Mesh::audit() const {
  if (elements_.empty()) throw MeshError("audit: empty mesh");
  for (const Vec2& v : vertices_)
    if (!v.allFinite()) throw MeshError("audit: non-finite vertex coordinates");

  for (int e = 0; e < element_count(); ++e) {
    const Element& el = elements_[e];
    if (el.degree_u < 1 || el.degree_u > kMaxDegree || el.degree_p < 1 ||
        el.degree_p > kMaxDegree)
      throw MeshError("audit: polynomial degree out of range");
    if (el.parent >= 0) {
      const Element& par = elements_[el.parent];
      if (std::find(par.child.begin(), par.child.end(), e) == par.child.end())
        throw MeshError("audit: broken parent/child link");
    }
    if (!el.leaf()) continue;
    // The Jacobian determinant of a bilinear map is affine in (xi, eta), so
    // positivity on a grid containing the corners is conclusive.
    auto pts = gauss_lobatto(3).points;
    for (double xi : pts)
      for (double eta : pts)
        if (jacobian(e, Vec2(xi, eta)).determinant() <= 0.0)
          throw MeshError("audit: non-positive Jacobian in element " + std::to_string(e));
  }

  bool has_dirichlet = false, has_pressure = false;
  std::set<int> dirichlet_vertices, contact_vertices;
  for (const EdgeInterface& iface : interfaces()) {
    std::vector<std::pair<int, int>> pairs;
    if (iface.kind == EdgeInterface::Kind::Interior)
      pairs.push_back({iface.a.elem, iface.b.elem});
    else if (iface.kind == EdgeInterface::Kind::Hanging) {
      pairs.push_back({iface.a.elem, iface.slave[0].elem});
      pairs.push_back({iface.a.elem, iface.slave[1].elem});
    } else {
      if (iface.tags.disp == DispBC::None || iface.tags.pres == PresBC::None)
        throw MeshError("audit: boundary edge missing displacement or pressure tag");
      if (iface.tags.disp == DispBC::Dirichlet) {
        has_dirichlet = true;
        dirichlet_vertices.insert(iface.v0);
        dirichlet_vertices.insert(iface.v1);
      }
      if (iface.tags.disp == DispBC::Contact) {
        contact_vertices.insert(iface.v0);
        contact_vertices.insert(iface.v1);
      }
      if (iface.tags.pres == PresBC::Pressure) has_pressure = true;
    }
    for (auto [x, y] : pairs) {
      if (std::abs(elements_[x].degree_u - elements_[y].degree_u) > 1 ||
          std::abs(elements_[x].degree_p - elements_[y].degree_p) > 1)
        throw MeshError("audit: edge-adjacent degrees differ by more than one");
    }
  }
  if (!has_dirichlet) throw MeshError("audit: no Dirichlet displacement edge");
  if (!has_pressure) throw MeshError("audit: no pressure Dirichlet edge");
  for (int v : contact_vertices)
    if (dirichlet_vertices.count(v))
      throw MeshError("audit: contact and Dirichlet closures intersect");
}

}  // namespace biotsig
