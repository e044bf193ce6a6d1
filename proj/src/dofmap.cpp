#include "biotsig/dofmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>

#include "biotsig/errors.hpp"
#include "biotsig/lagrange.hpp"

namespace biotsig {

std::pair<int, int> LocalNodes::corner_ij(int d, int c) {
  switch (c) {
    case 0: return {0, 0};
    case 1: return {d, 0};
    case 2: return {d, d};
    default: return {0, d};
  }
}

std::pair<int, int> LocalNodes::edge_node_ij(int d, int l, int k) {
  switch (l) {
    case 0: return {k, 0};
    case 1: return {d, k};
    case 2: return {d - k, d};
    default: return {0, d - k};
  }
}

namespace {

constexpr double kComboDropTol = 1e-14;

struct NodeInfo {
  enum class Status { Free, Dirichlet, Combo } status = Status::Free;
  std::vector<LinearTerm> combo;  // over node ids (resolved later)
  Vec2 pos{0, 0};
};

struct EntityNodes {
  int degree = 0;  // polynomial degree of the shared edge trace
  int base = -1;   // first of degree-1 interior nodes (ordered along v0 -> v1)
};

// Entity node id list [v0, interior..., v1] in canonical edge order.
std::vector<int> canonical_nodes(const EntityNodes& ent, int node_v0, int node_v1) {
  std::vector<int> ids;
  ids.reserve(ent.degree + 1);
  ids.push_back(node_v0);
  for (int k = 1; k < ent.degree; ++k) ids.push_back(ent.base + k - 1);
  ids.push_back(node_v1);
  return ids;
}

class LayoutBuilder {
 public:
  LayoutBuilder(const Mesh& mesh, bool pressure_field)
      : mesh_(mesh), pressure_(pressure_field) {}

  ScalarLayout build();

 private:
  int degree_of(int elem) const {
    const Element& el = mesh_.element(elem);
    return pressure_ ? el.degree_p : el.degree_u;
  }
  bool dirichlet(const EdgeTags& tags) const {
    return pressure_ ? tags.pres == PresBC::Pressure : tags.disp == DispBC::Dirichlet;
  }
  int entity_degree(const EdgeInterface& iface) const {
    switch (iface.kind) {
      case EdgeInterface::Kind::Boundary: return degree_of(iface.a.elem);
      case EdgeInterface::Kind::Interior:
        return std::min(degree_of(iface.a.elem), degree_of(iface.b.elem));
      default:
        return std::min({degree_of(iface.a.elem), degree_of(iface.slave[0].elem),
                         degree_of(iface.slave[1].elem)});
    }
  }

  // Canonical parameter of vertex v on the interface (v0 -> -1, v1 -> +1,
  // hanging vertex -> 0).
  static double end_param(const EdgeInterface& iface, int v) {
    if (v == iface.v0) return -1.0;
    if (v == iface.v1) return 1.0;
    if (v == iface.hanging_vertex) return 0.0;
    throw MeshError("vertex does not belong to the interface");
  }

  const std::vector<LinearTerm>& resolve(int node);

  const Mesh& mesh_;
  bool pressure_;
  std::vector<NodeInfo> nodes_;
  std::unordered_map<int, int> vertex_node_;
  std::vector<EntityNodes> entity_;           // per interface
  std::vector<int> node_free_id_;
  std::vector<std::vector<LinearTerm>> resolved_;  // memo, over free dofs
  std::vector<char> resolving_;
};

const std::vector<LinearTerm>& LayoutBuilder::resolve(int node) {
  if (!resolved_[node].empty() || nodes_[node].status == NodeInfo::Status::Dirichlet)
    return resolved_[node];
  if (nodes_[node].status == NodeInfo::Status::Free) {
    resolved_[node] = {{node_free_id_[node], 1.0}};
    return resolved_[node];
  }
  if (resolving_[node]) throw MeshError("cyclic node constraints");
  resolving_[node] = 1;
  std::map<int, double> acc;
  for (const LinearTerm& t : nodes_[node].combo)
    for (const LinearTerm& r : resolve(t.dof)) acc[r.dof] += t.weight * r.weight;
  resolving_[node] = 0;
  for (auto [dof, w] : acc)
    if (std::abs(w) > kComboDropTol) resolved_[node].push_back({dof, w});
  return resolved_[node];
}

ScalarLayout LayoutBuilder::build() {
  const auto& leaves = mesh_.leaves();
  const auto& interfaces = mesh_.interfaces();

  // Allocate geometric nodes: corner vertices, canonical edge interiors,
  // then element interiors, in deterministic mesh order.
  auto add_node = [this](const Vec2& pos) {
    nodes_.push_back({NodeInfo::Status::Free, {}, pos});
    return static_cast<int>(nodes_.size()) - 1;
  };
  for (int t : leaves)
    for (int v : mesh_.element(t).vertex)
      if (!vertex_node_.count(v)) vertex_node_[v] = add_node(mesh_.vertex(v));

  entity_.resize(interfaces.size());
  for (std::size_t i = 0; i < interfaces.size(); ++i) {
    const EdgeInterface& iface = interfaces[i];
    int pe = entity_degree(iface);
    entity_[i].degree = pe;
    entity_[i].base = static_cast<int>(nodes_.size());
    const auto& ref_nodes = shape_basis(pe).nodes();
    Vec2 x0 = mesh_.vertex(iface.v0), x1 = mesh_.vertex(iface.v1);
    for (int k = 1; k < pe; ++k) {
      double s = 0.5 * (1.0 + ref_nodes[k]);  // straight edges
      add_node((1.0 - s) * x0 + s * x1);
    }
  }

  std::vector<int> cell_base(leaves.size());
  for (std::size_t lp = 0; lp < leaves.size(); ++lp) {
    int t = leaves[lp];
    int d = degree_of(t);
    cell_base[lp] = static_cast<int>(nodes_.size());
    const auto& ref_nodes = shape_basis(d).nodes();
    for (int j = 1; j < d; ++j)
      for (int i = 1; i < d; ++i)
        add_node(mesh_.map_to_physical(t, Vec2(ref_nodes[i], ref_nodes[j])));
  }

  // Statuses: Dirichlet boundary data eliminates nodes, hanging vertices tie
  // to the master edge trace at its midpoint.
  for (std::size_t i = 0; i < interfaces.size(); ++i) {
    const EdgeInterface& iface = interfaces[i];
    if (iface.kind == EdgeInterface::Kind::Boundary && dirichlet(iface.tags)) {
      nodes_[vertex_node_.at(iface.v0)].status = NodeInfo::Status::Dirichlet;
      nodes_[vertex_node_.at(iface.v1)].status = NodeInfo::Status::Dirichlet;
      for (int k = 1; k < entity_[i].degree; ++k)
        nodes_[entity_[i].base + k - 1].status = NodeInfo::Status::Dirichlet;
    }
  }
  for (std::size_t i = 0; i < interfaces.size(); ++i) {
    const EdgeInterface& iface = interfaces[i];
    if (iface.kind != EdgeInterface::Kind::Hanging) continue;
    int hv = vertex_node_.at(iface.hanging_vertex);
    if (nodes_[hv].status == NodeInfo::Status::Dirichlet)
      throw MeshError("hanging vertex carries Dirichlet data");
    const ShapeBasis& basis = shape_basis(entity_[i].degree);
    std::vector<double> val(basis.size());
    basis.eval(0.0, val.data());
    auto ids = canonical_nodes(entity_[i], vertex_node_.at(iface.v0), vertex_node_.at(iface.v1));
    NodeInfo& info = nodes_[hv];
    info.status = NodeInfo::Status::Combo;
    for (int k = 0; k < basis.size(); ++k)
      if (std::abs(val[k]) > kComboDropTol) info.combo.push_back({ids[k], val[k]});
  }

  ScalarLayout layout;
  layout.node_count = static_cast<int>(nodes_.size());
  node_free_id_.assign(nodes_.size(), -1);
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    if (nodes_[n].status == NodeInfo::Status::Free) {
      node_free_id_[n] = layout.num_free++;
      layout.free_position.push_back(nodes_[n].pos);
    } else {
      ++layout.constrained_count;
    }
  }
  resolved_.resize(nodes_.size());
  resolving_.assign(nodes_.size(), 0);

  // Element tables. A local node either refers to its geometric node
  // directly or, on the deficient side of an edge, to the trace of the
  // canonical edge polynomial at its parameter.
  std::map<std::vector<std::pair<int, long long>>, int> combo_cache;
  auto register_combo = [&](std::vector<LinearTerm> terms) {
    if (terms.empty()) return kEliminatedSlot;
    std::sort(terms.begin(), terms.end(),
              [](const LinearTerm& a, const LinearTerm& b) { return a.dof < b.dof; });
    std::vector<std::pair<int, long long>> key;
    key.reserve(terms.size());
    for (const LinearTerm& t : terms) {
      long long bits;
      static_assert(sizeof(bits) == sizeof(t.weight));
      std::memcpy(&bits, &t.weight, sizeof(bits));
      key.push_back({t.dof, bits});
    }
    auto [it, inserted] = combo_cache.try_emplace(key, static_cast<int>(layout.combos.size()));
    if (inserted) layout.combos.push_back(std::move(terms));
    return encode_combo(it->second);
  };
  auto node_slot = [&](int node) {
    switch (nodes_[node].status) {
      case NodeInfo::Status::Free: return node_free_id_[node];
      case NodeInfo::Status::Dirichlet: return kEliminatedSlot;
      default: return register_combo(resolve(node));
    }
  };

  layout.slots.resize(leaves.size());
  for (std::size_t lp = 0; lp < leaves.size(); ++lp) {
    int t = leaves[lp];
    int d = degree_of(t);
    const Element& el = mesh_.element(t);
    auto& slots = layout.slots[lp];
    slots.assign(LocalNodes::count(d), kEliminatedSlot);

    for (int c = 0; c < 4; ++c) {
      auto [i, j] = LocalNodes::corner_ij(d, c);
      slots[LocalNodes::index(d, i, j)] = node_slot(vertex_node_.at(el.vertex[c]));
    }

    const auto& dn = shape_basis(d).nodes();
    for (int l = 0; l < 4; ++l) {
      int ifc = mesh_.interface_of(t, l);
      const EdgeInterface& iface = interfaces[ifc];
      const EntityNodes& ent = entity_[ifc];
      bool is_slave = iface.kind == EdgeInterface::Kind::Hanging &&
                      !(iface.a.elem == t && iface.a.edge == l);
      int start = el.vertex[Mesh::edge_corners()[l][0]];
      int end = el.vertex[Mesh::edge_corners()[l][1]];

      if (!is_slave && ent.degree == d) {
        // Direct identification with the canonical edge nodes; reversed
        // traversal flips the Gauss-Lobatto index (symmetric node set).
        bool forward = start == iface.v0;
        for (int k = 1; k < d; ++k) {
          auto [i, j] = LocalNodes::edge_node_ij(d, l, k);
          int m = forward ? k : d - k;
          slots[LocalNodes::index(d, i, j)] = node_slot(ent.base + m - 1);
        }
      } else {
        double a0 = end_param(iface, start);
        double a1 = end_param(iface, end);
        const ShapeBasis& ebasis = shape_basis(ent.degree);
        std::vector<double> val(ebasis.size());
        auto ids = canonical_nodes(ent, vertex_node_.at(iface.v0), vertex_node_.at(iface.v1));
        for (int k = 1; k < d; ++k) {
          double tc = 0.5 * ((1.0 - dn[k]) * a0 + (1.0 + dn[k]) * a1);
          ebasis.eval(tc, val.data());
          std::map<int, double> acc;
          for (int m = 0; m < ebasis.size(); ++m) {
            if (std::abs(val[m]) < kComboDropTol) continue;
            for (const LinearTerm& r : resolve(ids[m])) acc[r.dof] += val[m] * r.weight;
          }
          std::vector<LinearTerm> terms;
          for (auto [dof, w] : acc)
            if (std::abs(w) > kComboDropTol) terms.push_back({dof, w});
          auto [i, j] = LocalNodes::edge_node_ij(d, l, k);
          slots[LocalNodes::index(d, i, j)] = register_combo(std::move(terms));
          ++layout.constrained_count;
        }
      }
    }

    for (int j = 1; j < d; ++j)
      for (int i = 1; i < d; ++i)
        slots[LocalNodes::index(d, i, j)] =
            node_slot(cell_base[lp] + (j - 1) * (d - 1) + (i - 1));
  }
  return layout;
}

}  // namespace

DofMap build_dof_map(const Mesh& mesh) {
  DofMap dm;
  dm.disp = LayoutBuilder(mesh, false).build();
  dm.pres = LayoutBuilder(mesh, true).build();
  dm.leaf_elems = mesh.leaves();
  for (std::size_t i = 0; i < dm.leaf_elems.size(); ++i)
    dm.leaf_pos[dm.leaf_elems[i]] = static_cast<int>(i);
  return dm;
}

std::vector<ContactConstraint> contact_constraints(
    const Mesh& mesh, const DofMap& dofmap, const std::function<double(const Vec2&)>& gap) {
  std::vector<ContactConstraint> out;
  std::unordered_map<int, std::size_t> by_dof;
  const auto& interfaces = mesh.interfaces();
  for (std::size_t ifc = 0; ifc < interfaces.size(); ++ifc) {
    const EdgeInterface& iface = interfaces[ifc];
    if (iface.kind != EdgeInterface::Kind::Boundary || iface.tags.disp != DispBC::Contact)
      continue;
    int t = iface.a.elem;
    int l = iface.a.edge;
    int d = mesh.element(t).degree_u;
    int lp = dofmap.leaf_pos.at(t);
    Vec2 n = mesh.edge_normal(t, l);
    int comp = std::abs(n[1]) > std::abs(n[0]) ? 1 : 0;
    if (std::abs(n[1 - comp]) > 1e-12)
      throw MeshError("contact edge normal must be axis-aligned for nodal constraints");

    const auto& dn = shape_basis(d).nodes();
    for (int k = 0; k <= d; ++k) {
      auto [i, j] = LocalNodes::edge_node_ij(d, l, k);
      int slot = dofmap.disp.slots[lp][LocalNodes::index(d, i, j)];
      if (slot < 0) throw MeshError("contact node is not a free dof");
      Vec2 point;
      {
        double xi = dn[i], eta = dn[j];
        point = mesh.map_to_physical(t, Vec2(xi, eta));
      }
      double bound = gap(point);
      if (!(bound >= 0.0))
        throw std::invalid_argument("gap function must be nonnegative on the contact boundary");
      ContactConstraint c;
      c.dof = DofMap::udof(slot, comp);
      c.coeff = n[comp];
      c.bound = bound;
      c.point = point;
      c.iface = static_cast<int>(ifc);
      auto it = by_dof.find(c.dof);
      if (it != by_dof.end()) {
        const ContactConstraint& prev = out[it->second];
        if (std::abs(prev.coeff - c.coeff) > 1e-12 || std::abs(prev.bound - c.bound) > 1e-12)
          throw MeshError("conflicting contact constraints at a shared node");
        continue;  // same node shared by two contact edges
      }
      by_dof[c.dof] = out.size();
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace biotsig
