// Structured quadrilateral meshes of the perforated unit cell Y1 = Y \ Y0
// and of the eps-tiled perforated macro domain. Holes are centered
// axis-aligned squares aligned with grid lines, so the hole boundary is
// represented exactly and no cut cells arise.
#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

namespace homlab {

struct CellGeometry {
  double hole_half_width = 0.0;  // fraction of the cell edge, 0 = no hole
  int resolution = 4;            // cells per edge, even, >= 4

  bool has_hole() const { return hole_half_width > 0.0; }
  double porosity() const {
    const double s = 2.0 * hole_half_width;
    return 1.0 - s * s;
  }
  // Throws ConfigError on invalid parameters; the alignment message names
  // the smallest valid resolution.
  void validate() const;
  // Half-width in grid cells (exact integer after validate()).
  int hole_cells() const;
};

enum class FaceTag { Outer, Hole };

struct Face {
  FaceTag tag;
  int a, b;        // node ids, ordered CCW along the owning element
  int elem;        // owning element
  double nx, ny;   // outward unit normal
};

struct QuadMesh {
  int nx = 0, ny = 0;       // grid cells per edge over [0,1]^2
  double hx = 0.0, hy = 0.0;
  std::vector<double> xs, ys;                // node coordinates
  std::vector<std::array<int, 4>> elems;     // CCW corner node ids
  std::vector<std::array<int, 2>> elem_ij;   // element grid cell (i,j)
  std::vector<int> elem_cell;                // eps-cell index, 0 for cell meshes
  std::vector<int> grid_node;                // (nx+1)*(ny+1) -> node id or -1
  std::vector<std::array<int, 2>> node_grid; // node id -> (I,J)
  std::vector<Face> faces;                   // boundary faces only
  // Periodic pairs (master, slave), cell meshes only: left<-right, bottom<-top.
  std::vector<std::pair<int, int>> periodic_x, periodic_y;

  int n_nodes() const { return static_cast<int>(xs.size()); }
  int n_elems() const { return static_cast<int>(elems.size()); }
  int grid_id(int i, int j) const { return grid_node[j * (nx + 1) + i]; }
  double elem_area() const { return hx * hy; }
  // Sum of element areas (= porosity for cell meshes on [0,1]^2).
  double domain_area() const { return elem_area() * n_elems(); }
  // FNV-1a over the defining data; identifies the mesh in field dumps.
  std::uint64_t hash() const;
};

QuadMesh build_cell_mesh(const CellGeometry& geom);

// Perforated macro mesh: eps = 1/K, K >= 2; one hole per eps-cell.
// Outer faces are Gamma^ext, hole faces Gamma^eps.
QuadMesh build_perforated_mesh(const CellGeometry& geom, int K, int n_per_cell);

// Plain unperforated N x N grid of [0,1]^2 (macro mesh).
QuadMesh build_square_mesh(int n);

// Node correspondence y = x/eps mod 1, exact on grid indices.
// Requires pmesh.nx == K * cmesh.nx; returns cmesh node id per pmesh node.
std::vector<int> micro_to_cell_map(const QuadMesh& pmesh, const QuadMesh& cmesh);

// Plain-text dump: NODES / ELEMS / FACES / PERIODIC sections, 17 digits.
void dump_mesh(const QuadMesh& mesh, std::ostream& out);

}  // namespace homlab
