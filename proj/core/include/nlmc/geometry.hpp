#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace nlmc {

/// Error type thrown by all nlmc components.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Structured mesh of square cells on [0,Lx] x [0,Ly].
/// Nodes are numbered lexicographically, x fastest.
struct FineMesh {
  int nx = 0;
  int ny = 0;
  double lx = 0.0;
  double ly = 0.0;
  double h = 0.0;  // cell side, lx/nx == ly/ny

  int node_count() const { return (nx + 1) * (ny + 1); }
  int cell_count() const { return nx * ny; }
  int edge_count() const { return 2 * nx * ny + nx + ny; }

  int node_id(int ix, int iy) const { return iy * (nx + 1) + ix; }
  int node_ix(int id) const { return id % (nx + 1); }
  int node_iy(int id) const { return id / (nx + 1); }
  Eigen::Vector2d node_xy(int id) const {
    return {h * node_ix(id), h * node_iy(id)};
  }

  int cell_id(int cx, int cy) const { return cy * nx + cx; }
  int cell_cx(int id) const { return id % nx; }
  int cell_cy(int id) const { return id / nx; }

  /// Corner nodes of cell (cx,cy) in the order (0,0),(1,0),(1,1),(0,1).
  std::array<int, 4> cell_nodes(int cx, int cy) const {
    return {node_id(cx, cy), node_id(cx + 1, cy), node_id(cx + 1, cy + 1),
            node_id(cx, cy + 1)};
  }

  /// Edges are numbered horizontal-first: edge (ix,iy)-(ix+1,iy) has id
  /// iy*nx+ix; vertical edge (ix,iy)-(ix,iy+1) has id nx*(ny+1)+iy*(nx+1)+ix.
  std::pair<int, int> edge_nodes(int e) const;

  bool on_domain_boundary(int node) const {
    const int ix = node_ix(node), iy = node_iy(node);
    return ix == 0 || ix == nx || iy == 0 || iy == ny;
  }
};

/// Builds a structured mesh; rejects parameter sets whose cells are not
/// square within 1e-12 relative.
FineMesh build_fine_mesh(int nx, int ny, double lx, double ly);

/// A fracture embedded in the fine grid: a chain of node ids where each
/// consecutive pair is either an axis-aligned fine edge (length h) or the
/// 45-degree diagonal of one fine cell (length h*sqrt(2)).
struct FracturePolyline {
  int id = -1;
  std::vector<int> nodes;
  double conductivity = 0.0;  // effective conductivity (aperture x permeability)

  int segment_count() const { return static_cast<int>(nodes.size()) - 1; }
};

struct FractureNetwork {
  std::vector<FracturePolyline> fractures;

  bool empty() const { return fractures.empty(); }
};

/// Snaps a straight segment onto the fine grid. Endpoints move to the
/// nearest fine nodes; the snapped segment must be horizontal, vertical or
/// at 45 degrees to the axes.
FracturePolyline snap_fracture(const FineMesh& mesh, const Eigen::Vector2d& p0,
                               const Eigen::Vector2d& p1, double conductivity);

/// Conforming coarse partition: Nx x Ny blocks, each an integer number of
/// fine cells in every direction.
struct CoarseGrid {
  int nx_blocks = 0;
  int ny_blocks = 0;
  int cells_x = 0;  // fine cells per block in x
  int cells_y = 0;
  double hx = 0.0;  // block extent in x (the coarse mesh size H)
  double hy = 0.0;

  int block_count() const { return nx_blocks * ny_blocks; }
  int block_id(int bx, int by) const { return by * nx_blocks + bx; }
  int block_bx(int id) const { return id % nx_blocks; }
  int block_by(int id) const { return id / nx_blocks; }
  double block_area() const { return hx * hy; }

  /// Fine-node index ranges of the closed block: [ix0,ix1] x [iy0,iy1].
  std::array<int, 4> block_node_range(int b) const {
    const int bx = block_bx(b), by = block_by(b);
    return {bx * cells_x, (bx + 1) * cells_x, by * cells_y, (by + 1) * cells_y};
  }

  std::vector<int> block_cells(const FineMesh& mesh, int b) const;
  std::vector<int> block_nodes(const FineMesh& mesh, int b) const;
};

CoarseGrid build_coarse_grid(const FineMesh& mesh, int nx_blocks, int ny_blocks);

/// Oversampling width: a number of coarse layers or the whole domain.
struct Oversampling {
  int count = 0;
  bool whole_domain = false;

  static Oversampling layers(int n) { return {n, false}; }
  static Oversampling global() { return {0, true}; }

  bool operator==(const Oversampling&) const = default;
};

/// K_i^+ : the block rectangle grown by `layers` rings of node-neighboring
/// coarse blocks, clipped at the physical boundary.
struct OversampleRegion {
  int center_block = -1;
  Oversampling layers;
  int bx0 = 0, bx1 = 0, by0 = 0, by1 = 0;  // inclusive block rectangle
  int ix0 = 0, ix1 = 0, iy0 = 0, iy1 = 0;  // fine-node rectangle

  std::vector<int> blocks;          // member block ids, row-major order
  std::vector<int> interior_nodes;  // strictly inside the region rectangle
  std::vector<int> boundary_nodes;  // on the region rectangle boundary

  // Sides of the region rectangle that coincide with the domain boundary.
  bool on_left = false, on_right = false, on_bottom = false, on_top = false;

  /// True if the node sits on a rectangle side interior to the domain.
  bool is_artificial_boundary(const FineMesh& mesh, int node) const;

  bool contains_block(int bx, int by) const {
    return bx >= bx0 && bx <= bx1 && by >= by0 && by <= by1;
  }
  bool covers_domain(const CoarseGrid& g) const {
    return bx0 == 0 && by0 == 0 && bx1 == g.nx_blocks - 1 &&
           by1 == g.ny_blocks - 1;
  }
  /// Boundary nodes that are artificial (not part of the domain boundary).
  std::vector<int> artificial_boundary_nodes(const FineMesh& mesh) const;
};

OversampleRegion oversample(const FineMesh& mesh, const CoarseGrid& coarse,
                            int block, Oversampling layers);

/// One coarse unknown: the matrix of block `block` (m = 0) or one connected
/// fracture component clipped to it (m = 1..L).
struct Continuum {
  int block = -1;
  int m = 0;
  int flat_index = -1;
  double measure = 0.0;  // block area for m=0, clipped arclength otherwise
  std::vector<int> nodes;                      // support nodes, sorted
  std::vector<std::pair<int, int>> edges;      // fracture segments (m >= 1)
  std::vector<double> edge_lengths;
  std::vector<double> edge_weights;  // conductivity / length per segment

  bool is_matrix() const { return m == 0; }
};

struct ContinuumIndex {
  std::vector<Continuum> items;
  std::vector<int> block_first;  // items index of block b's m=0 entry
  std::vector<int> block_size;   // 1 + L_b

  int count() const { return static_cast<int>(items.size()); }
  int fracture_count(int block) const { return block_size[block] - 1; }
  int flat(int block, int m) const { return block_first[block] + m; }

  /// Pairs of fracture continua with identical clipped supports (fractures
  /// running along a block interface produce these). Basis problems whose
  /// region contains such a pair are rank-deficient and must be rejected.
  std::vector<std::pair<int, int>> duplicate_supports;

  Eigen::VectorXd measures() const;
};

/// Groups fracture edges clipped to each closed block into connected
/// components. Edges are assigned to blocks by midpoint, so a fracture on a
/// block interface belongs to both neighboring blocks.
ContinuumIndex enumerate_continua(const FineMesh& mesh, const CoarseGrid& coarse,
                                  const FractureNetwork& network);

}  // namespace nlmc
