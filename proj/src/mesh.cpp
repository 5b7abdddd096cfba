#include "homlab/mesh.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <ostream>
#include <sstream>

#include "homlab/errors.hpp"

namespace homlab {

namespace {

bool aligned(double w, int n, int* m_out = nullptr) {
  const double cells = w * n;
  const long m = std::lround(cells);
  if (std::abs(cells - static_cast<double>(m)) > 1e-9) return false;
  if (m_out) *m_out = static_cast<int>(m);
  return true;
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

// Shared builder: N x N global grid, hole predicate per grid cell.
QuadMesh build_grid(int n_global,
                    const std::function<bool(int, int)>& is_hole_cell,
                    const std::function<int(int, int)>& cell_index) {
  QuadMesh m;
  m.nx = m.ny = n_global;
  m.hx = m.hy = 1.0 / n_global;
  const int np = n_global + 1;
  m.grid_node.assign(np * np, -1);

  // Activate nodes touched by at least one active element.
  std::vector<char> active(n_global * n_global, 0);
  for (int j = 0; j < n_global; ++j)
    for (int i = 0; i < n_global; ++i)
      active[j * n_global + i] = is_hole_cell(i, j) ? 0 : 1;

  for (int j = 0; j < np; ++j) {
    for (int i = 0; i < np; ++i) {
      bool used = false;
      for (int dj = -1; dj <= 0 && !used; ++dj)
        for (int di = -1; di <= 0 && !used; ++di) {
          const int ci = i + di, cj = j + dj;
          if (ci >= 0 && cj >= 0 && ci < n_global && cj < n_global &&
              active[cj * n_global + ci])
            used = true;
        }
      if (used) {
        m.grid_node[j * np + i] = m.n_nodes();
        m.xs.push_back(static_cast<double>(i) / n_global);
        m.ys.push_back(static_cast<double>(j) / n_global);
        m.node_grid.push_back({i, j});
      }
    }
  }

  for (int j = 0; j < n_global; ++j) {
    for (int i = 0; i < n_global; ++i) {
      if (!active[j * n_global + i]) continue;
      m.elems.push_back({m.grid_id(i, j), m.grid_id(i + 1, j),
                         m.grid_id(i + 1, j + 1), m.grid_id(i, j + 1)});
      m.elem_ij.push_back({i, j});
      m.elem_cell.push_back(cell_index(i, j));
    }
  }

  // Boundary faces: edge order bottom, right, top, left (CCW).
  const int di[4] = {0, 1, 0, -1};
  const int dj[4] = {-1, 0, 1, 0};
  const double nxs[4] = {0, 1, 0, -1};
  const double nys[4] = {-1, 0, 1, 0};
  for (int e = 0; e < m.n_elems(); ++e) {
    const auto [i, j] = m.elem_ij[e];
    const auto& nd = m.elems[e];
    const int edge_nodes[4][2] = {
        {nd[0], nd[1]}, {nd[1], nd[2]}, {nd[2], nd[3]}, {nd[3], nd[0]}};
    for (int s = 0; s < 4; ++s) {
      const int ci = i + di[s], cj = j + dj[s];
      const bool outside =
          ci < 0 || cj < 0 || ci >= n_global || cj >= n_global;
      if (!outside && active[cj * n_global + ci]) continue;
      m.faces.push_back({outside ? FaceTag::Outer : FaceTag::Hole,
                         edge_nodes[s][0], edge_nodes[s][1], e, nxs[s],
                         nys[s]});
    }
  }
  return m;
}

}  // namespace

void CellGeometry::validate() const {
  if (resolution < 4 || resolution % 2 != 0)
    throw ConfigError("cell resolution must be even and >= 4, got " +
                      std::to_string(resolution));
  if (hole_half_width < 0.0 || hole_half_width >= 0.5)
    throw ConfigError("hole_half_width must lie in [0, 1/2), got " +
                      std::to_string(hole_half_width));
  if (!has_hole()) return;
  int m = 0;
  if (!aligned(hole_half_width, resolution, &m) || m < 1) {
    int smallest = -1;
    for (int n = 4; n <= 1 << 16; n += 2) {
      int mm = 0;
      if (aligned(hole_half_width, n, &mm) && mm >= 1) {
        smallest = n;
        break;
      }
    }
    std::ostringstream msg;
    msg << "hole boundary must coincide with grid lines: hole_half_width * n = "
        << hole_half_width * resolution << " is not a positive integer";
    if (smallest > 0) msg << "; smallest valid n is " << smallest;
    throw ConfigError(msg.str());
  }
}

int CellGeometry::hole_cells() const {
  int m = 0;
  aligned(hole_half_width, resolution, &m);
  return m;
}

std::uint64_t QuadMesh::hash() const {
  std::uint64_t h = 14695981039346656037ULL;
  h = fnv1a(h, &nx, sizeof nx);
  h = fnv1a(h, &ny, sizeof ny);
  if (!xs.empty()) h = fnv1a(h, xs.data(), xs.size() * sizeof(double));
  if (!ys.empty()) h = fnv1a(h, ys.data(), ys.size() * sizeof(double));
  if (!elems.empty())
    h = fnv1a(h, elems.data(), elems.size() * sizeof(elems[0]));
  return h;
}

QuadMesh build_cell_mesh(const CellGeometry& geom) {
  geom.validate();
  const int n = geom.resolution;
  const int m = geom.has_hole() ? geom.hole_cells() : 0;
  const int lo = n / 2 - m, hi = n / 2 + m;
  auto hole = [&](int i, int j) {
    return m > 0 && i >= lo && i < hi && j >= lo && j < hi;
  };
  QuadMesh mesh = build_grid(n, hole, [](int, int) { return 0; });

  // Periodic pairing: right edge folds onto left, top onto bottom.
  for (int j = 0; j <= n; ++j)
    mesh.periodic_x.emplace_back(mesh.grid_id(0, j), mesh.grid_id(n, j));
  for (int i = 0; i <= n; ++i)
    mesh.periodic_y.emplace_back(mesh.grid_id(i, 0), mesh.grid_id(i, n));
  return mesh;
}

QuadMesh build_perforated_mesh(const CellGeometry& geom, int K,
                               int n_per_cell) {
  CellGeometry per_cell = geom;
  per_cell.resolution = n_per_cell;
  per_cell.validate();
  if (K < 2)
    throw ConfigError("eps = 1/K requires K >= 2, got K = " +
                      std::to_string(K));
  const int n = n_per_cell;
  const int m = per_cell.has_hole() ? per_cell.hole_cells() : 0;
  const int lo = n / 2 - m, hi = n / 2 + m;
  auto hole = [&](int gi, int gj) {
    if (m == 0) return false;
    const int i = gi % n, j = gj % n;
    return i >= lo && i < hi && j >= lo && j < hi;
  };
  auto cell = [&](int gi, int gj) { return (gj / n) * K + (gi / n); };
  return build_grid(K * n, hole, cell);
}

QuadMesh build_square_mesh(int n) {
  if (n < 1) throw ConfigError("square mesh needs n >= 1");
  return build_grid(
      n, [](int, int) { return false; }, [](int, int) { return 0; });
}

std::vector<int> micro_to_cell_map(const QuadMesh& pmesh,
                                   const QuadMesh& cmesh) {
  const int n = cmesh.nx;
  if (n <= 0 || pmesh.nx % n != 0)
    throw ConfigError("resolution mismatch: perforated grid " +
                      std::to_string(pmesh.nx) +
                      " is not a multiple of cell grid " + std::to_string(n));
  std::vector<int> map(pmesh.n_nodes(), -1);
  for (int p = 0; p < pmesh.n_nodes(); ++p) {
    const auto [I, J] = pmesh.node_grid[p];
    const int c = cmesh.grid_id(I % n, J % n);
    if (c < 0)
      throw ConfigError("perforated node maps into the cell hole; "
                        "hole layouts disagree");
    map[p] = c;
  }
  return map;
}

void dump_mesh(const QuadMesh& mesh, std::ostream& out) {
  char buf[128];
  out << "NODES " << mesh.n_nodes() << "\n";
  for (int i = 0; i < mesh.n_nodes(); ++i) {
    std::snprintf(buf, sizeof buf, "%d %.17g %.17g\n", i, mesh.xs[i],
                  mesh.ys[i]);
    out << buf;
  }
  out << "ELEMS " << mesh.n_elems() << "\n";
  for (int e = 0; e < mesh.n_elems(); ++e) {
    const auto& nd = mesh.elems[e];
    out << e << ' ' << nd[0] << ' ' << nd[1] << ' ' << nd[2] << ' ' << nd[3]
        << "\n";
  }
  out << "FACES " << mesh.faces.size() << "\n";
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& fc = mesh.faces[f];
    out << (fc.tag == FaceTag::Outer ? "outer" : "hole") << ' ' << f << ' '
        << fc.a << ' ' << fc.b << "\n";
  }
  out << "PERIODIC " << mesh.periodic_x.size() + mesh.periodic_y.size()
      << "\n";
  for (const auto& [a, b] : mesh.periodic_x) out << a << ' ' << b << "\n";
  for (const auto& [a, b] : mesh.periodic_y) out << a << ' ' << b << "\n";
}

}  // namespace homlab
