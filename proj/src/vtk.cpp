#include "biotsig/vtk.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace biotsig {

namespace {

// Reference coordinates of the four corners, counter-clockwise.
const Vec2 kCornerRef[4] = {Vec2(-1, -1), Vec2(1, -1), Vec2(1, 1), Vec2(-1, 1)};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void write_vtk(const std::string& path, const FieldEvaluator& fields,
               const Eigen::VectorXd& eta_sq) {
  const Mesh& mesh = fields.mesh();
  const std::vector<int>& leaves = mesh.leaves();
  const int n_cells = static_cast<int>(leaves.size());
  if (eta_sq.size() != 0 && eta_sq.size() != n_cells)
    throw std::invalid_argument("write_vtk: eta_sq size does not match the leaf count");

  // Compact the leaf corner vertices into a point list; every vertex keeps
  // the value sampled from the first leaf that touches it (the fields are
  // continuous, so the choice does not matter, but it must be deterministic).
  std::unordered_map<int, int> point_id;
  std::vector<int> point_vertex;
  std::vector<Vec2> point_u;
  std::vector<double> point_p;
  std::vector<std::array<int, 4>> cells(n_cells);
  for (int pos = 0; pos < n_cells; ++pos) {
    const Element& el = mesh.element(leaves[pos]);
    for (int c = 0; c < 4; ++c) {
      auto [it, fresh] = point_id.try_emplace(el.vertex[c], static_cast<int>(point_vertex.size()));
      if (fresh) {
        point_vertex.push_back(el.vertex[c]);
        FieldSample s = fields.eval(leaves[pos], kCornerRef[c]);
        point_u.push_back(s.u);
        point_p.push_back(s.p);
      }
      cells[pos][c] = it->second;
    }
  }

  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_vtk: cannot open " + path);
  const int n_points = static_cast<int>(point_vertex.size());

  out << "# vtk DataFile Version 3.0\n";
  out << "poroelastic contact solution\n";
  out << "ASCII\n";
  out << "DATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << n_points << " double\n";
  for (int i = 0; i < n_points; ++i) {
    const Vec2& x = mesh.vertex(point_vertex[i]);
    out << num(x[0]) << ' ' << num(x[1]) << " 0\n";
  }
  out << "CELLS " << n_cells << ' ' << 5 * n_cells << '\n';
  for (const auto& cell : cells)
    out << "4 " << cell[0] << ' ' << cell[1] << ' ' << cell[2] << ' ' << cell[3] << '\n';
  out << "CELL_TYPES " << n_cells << '\n';
  for (int i = 0; i < n_cells; ++i) out << "9\n";

  out << "POINT_DATA " << n_points << '\n';
  out << "VECTORS displacement double\n";
  for (int i = 0; i < n_points; ++i)
    out << num(point_u[i][0]) << ' ' << num(point_u[i][1]) << " 0\n";
  out << "SCALARS pressure double 1\nLOOKUP_TABLE default\n";
  for (int i = 0; i < n_points; ++i) out << num(point_p[i]) << '\n';

  out << "CELL_DATA " << n_cells << '\n';
  out << "SCALARS degree int 1\nLOOKUP_TABLE default\n";
  for (int leaf : leaves) out << mesh.element(leaf).degree_u << '\n';
  if (eta_sq.size() == n_cells) {
    out << "SCALARS eta_sq double 1\nLOOKUP_TABLE default\n";
    for (int pos = 0; pos < n_cells; ++pos) out << num(eta_sq[pos]) << '\n';
  }
  if (!out) throw std::runtime_error("write_vtk: write failed for " + path);
}

}  // namespace biotsig
