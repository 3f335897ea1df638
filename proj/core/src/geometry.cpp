#include "nlmc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

namespace nlmc {

FineMesh build_fine_mesh(int nx, int ny, double lx, double ly) {
  if (nx < 1 || ny < 1) throw Error("build_fine_mesh: nx and ny must be >= 1");
  if (lx <= 0.0 || ly <= 0.0) throw Error("build_fine_mesh: domain must have positive extent");
  const double hx = lx / nx, hy = ly / ny;
  if (std::abs(hx - hy) > 1e-12 * std::max(hx, hy)) {
    throw Error("build_fine_mesh: cells must be square, got aspect ratio hx/hy = " +
                std::to_string(hx / hy));
  }
  FineMesh m;
  m.nx = nx;
  m.ny = ny;
  m.lx = lx;
  m.ly = ly;
  m.h = hx;
  return m;
}

std::pair<int, int> FineMesh::edge_nodes(int e) const {
  const int n_horizontal = nx * (ny + 1);
  if (e < n_horizontal) {
    const int iy = e / nx, ix = e % nx;
    return {node_id(ix, iy), node_id(ix + 1, iy)};
  }
  const int r = e - n_horizontal;
  const int iy = r / (nx + 1), ix = r % (nx + 1);
  return {node_id(ix, iy), node_id(ix, iy + 1)};
}

FracturePolyline snap_fracture(const FineMesh& mesh, const Eigen::Vector2d& p0,
                               const Eigen::Vector2d& p1, double conductivity) {
  const double h = mesh.h;
  auto inside = [&](const Eigen::Vector2d& p) {
    const double tol = 1e-9 * std::max(mesh.lx, mesh.ly);
    return p.x() >= -tol && p.x() <= mesh.lx + tol && p.y() >= -tol &&
           p.y() <= mesh.ly + tol;
  };
  if (!inside(p0) || !inside(p1))
    throw Error("snap_fracture: segment endpoint outside the domain");

  auto snap = [&](const Eigen::Vector2d& p) -> std::pair<int, int> {
    int ix = static_cast<int>(std::lround(p.x() / h));
    int iy = static_cast<int>(std::lround(p.y() / h));
    ix = std::clamp(ix, 0, mesh.nx);
    iy = std::clamp(iy, 0, mesh.ny);
    return {ix, iy};
  };
  auto [ix0, iy0] = snap(p0);
  auto [ix1, iy1] = snap(p1);
  const int dx = ix1 - ix0, dy = iy1 - iy0;

  if (dx == 0 && dy == 0)
    throw Error("snap_fracture: segment shorter than the mesh size h after snapping");
  if (!(dx == 0 || dy == 0 || std::abs(dx) == std::abs(dy)))
    throw Error(
        "snap_fracture: unsupported orientation; segments must be horizontal, "
        "vertical, or at 45 degrees to the grid");

  const int steps = std::max(std::abs(dx), std::abs(dy));
  const int sx = (dx > 0) - (dx < 0), sy = (dy > 0) - (dy < 0);
  FracturePolyline f;
  f.conductivity = conductivity;
  f.nodes.reserve(steps + 1);
  for (int k = 0; k <= steps; ++k)
    f.nodes.push_back(mesh.node_id(ix0 + k * sx, iy0 + k * sy));
  return f;
}

CoarseGrid build_coarse_grid(const FineMesh& mesh, int nx_blocks, int ny_blocks) {
  if (nx_blocks < 1 || ny_blocks < 1)
    throw Error("build_coarse_grid: block counts must be >= 1");
  if (mesh.nx % nx_blocks != 0 || mesh.ny % ny_blocks != 0)
    throw Error("build_coarse_grid: fine mesh (" + std::to_string(mesh.nx) + "x" +
                std::to_string(mesh.ny) + ") is not a conforming refinement of " +
                std::to_string(nx_blocks) + "x" + std::to_string(ny_blocks) +
                " blocks");
  CoarseGrid g;
  g.nx_blocks = nx_blocks;
  g.ny_blocks = ny_blocks;
  g.cells_x = mesh.nx / nx_blocks;
  g.cells_y = mesh.ny / ny_blocks;
  g.hx = mesh.lx / nx_blocks;
  g.hy = mesh.ly / ny_blocks;
  return g;
}

std::vector<int> CoarseGrid::block_cells(const FineMesh& mesh, int b) const {
  const int bx = block_bx(b), by = block_by(b);
  std::vector<int> cells;
  cells.reserve(cells_x * cells_y);
  for (int cy = by * cells_y; cy < (by + 1) * cells_y; ++cy)
    for (int cx = bx * cells_x; cx < (bx + 1) * cells_x; ++cx)
      cells.push_back(mesh.cell_id(cx, cy));
  return cells;
}

std::vector<int> CoarseGrid::block_nodes(const FineMesh& mesh, int b) const {
  const auto [ix0, ix1, iy0, iy1] = block_node_range(b);
  std::vector<int> nodes;
  nodes.reserve((ix1 - ix0 + 1) * (iy1 - iy0 + 1));
  for (int iy = iy0; iy <= iy1; ++iy)
    for (int ix = ix0; ix <= ix1; ++ix) nodes.push_back(mesh.node_id(ix, iy));
  return nodes;
}

OversampleRegion oversample(const FineMesh& mesh, const CoarseGrid& coarse,
                            int block, Oversampling layers) {
  if (block < 0 || block >= coarse.block_count())
    throw Error("oversample: invalid block id " + std::to_string(block));
  if (!layers.whole_domain && layers.count < 0)
    throw Error("oversample: layer count must be >= 0");

  OversampleRegion r;
  r.center_block = block;
  r.layers = layers;
  const int bx = coarse.block_bx(block), by = coarse.block_by(block);
  if (layers.whole_domain) {
    r.bx0 = 0;
    r.by0 = 0;
    r.bx1 = coarse.nx_blocks - 1;
    r.by1 = coarse.ny_blocks - 1;
  } else {
    r.bx0 = std::max(0, bx - layers.count);
    r.bx1 = std::min(coarse.nx_blocks - 1, bx + layers.count);
    r.by0 = std::max(0, by - layers.count);
    r.by1 = std::min(coarse.ny_blocks - 1, by + layers.count);
  }
  for (int j = r.by0; j <= r.by1; ++j)
    for (int i = r.bx0; i <= r.bx1; ++i) r.blocks.push_back(coarse.block_id(i, j));

  r.ix0 = r.bx0 * coarse.cells_x;
  r.ix1 = (r.bx1 + 1) * coarse.cells_x;
  r.iy0 = r.by0 * coarse.cells_y;
  r.iy1 = (r.by1 + 1) * coarse.cells_y;
  r.on_left = r.ix0 == 0;
  r.on_right = r.ix1 == mesh.nx;
  r.on_bottom = r.iy0 == 0;
  r.on_top = r.iy1 == mesh.ny;
  for (int iy = r.iy0; iy <= r.iy1; ++iy)
    for (int ix = r.ix0; ix <= r.ix1; ++ix) {
      const int id = mesh.node_id(ix, iy);
      if (ix == r.ix0 || ix == r.ix1 || iy == r.iy0 || iy == r.iy1)
        r.boundary_nodes.push_back(id);
      else
        r.interior_nodes.push_back(id);
    }
  return r;
}

bool OversampleRegion::is_artificial_boundary(const FineMesh& mesh, int node) const {
  const int ix = mesh.node_ix(node), iy = mesh.node_iy(node);
  return (ix == ix0 && ix0 > 0) || (ix == ix1 && ix1 < mesh.nx) ||
         (iy == iy0 && iy0 > 0) || (iy == iy1 && iy1 < mesh.ny);
}

std::vector<int> OversampleRegion::artificial_boundary_nodes(
    const FineMesh& mesh) const {
  std::vector<int> out;
  for (int id : boundary_nodes)
    if (is_artificial_boundary(mesh, id)) out.push_back(id);
  return out;
}

namespace {

struct UnionFind {
  std::unordered_map<int, int> parent;
  int find(int x) {
    auto it = parent.find(x);
    if (it == parent.end()) {
      parent[x] = x;
      return x;
    }
    while (it->second != x) {
      x = it->second;
      it = parent.find(x);
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

struct ClippedEdge {
  int a, b;
  double length;
  double conductivity;
};

}  // namespace

Eigen::VectorXd ContinuumIndex::measures() const {
  Eigen::VectorXd m(count());
  for (int i = 0; i < count(); ++i) m[i] = items[i].measure;
  return m;
}

ContinuumIndex enumerate_continua(const FineMesh& mesh, const CoarseGrid& coarse,
                                  const FractureNetwork& network) {
  const double diag = mesh.h * std::sqrt(2.0);

  // Fracture edges per block, assigned by midpoint in doubled node
  // coordinates so the test is exact. Midpoints on an interface land in both
  // neighboring blocks.
  std::vector<std::vector<ClippedEdge>> block_edges(coarse.block_count());
  std::set<int> fracture_nodes;
  for (const auto& f : network.fractures) {
    for (size_t k = 0; k + 1 < f.nodes.size(); ++k) {
      const int a = f.nodes[k], b = f.nodes[k + 1];
      fracture_nodes.insert(a);
      fracture_nodes.insert(b);
      const int ax = mesh.node_ix(a), ay = mesh.node_iy(a);
      const int bx = mesh.node_ix(b), by = mesh.node_iy(b);
      const int mx2 = ax + bx, my2 = ay + by;  // doubled midpoint coordinates
      const bool is_diag = (ax != bx) && (ay != by);
      const double len = is_diag ? diag : mesh.h;
      for (int block = 0; block < coarse.block_count(); ++block) {
        const auto [ix0, ix1, iy0, iy1] = coarse.block_node_range(block);
        if (mx2 >= 2 * ix0 && mx2 <= 2 * ix1 && my2 >= 2 * iy0 && my2 <= 2 * iy1)
          block_edges[block].push_back({a, b, len, f.conductivity});
      }
    }
  }

  ContinuumIndex index;
  index.block_first.resize(coarse.block_count());
  index.block_size.resize(coarse.block_count());

  for (int b = 0; b < coarse.block_count(); ++b) {
    // A block whose every node lies on a fracture leaves no matrix DOFs to
    // average over; reject the configuration.
    if (!fracture_nodes.empty()) {
      const auto nodes = coarse.block_nodes(mesh, b);
      const bool all_fracture = std::all_of(nodes.begin(), nodes.end(), [&](int n) {
        return fracture_nodes.count(n) > 0;
      });
      if (all_fracture)
        throw Error("enumerate_continua: block " + std::to_string(b) +
                    " is entirely covered by fracture nodes");
    }

    index.block_first[b] = index.count();
    Continuum matrix;
    matrix.block = b;
    matrix.m = 0;
    matrix.flat_index = index.count();
    matrix.measure = coarse.block_area();
    matrix.nodes = coarse.block_nodes(mesh, b);
    index.items.push_back(std::move(matrix));

    UnionFind uf;
    for (const auto& e : block_edges[b]) uf.unite(e.a, e.b);
    std::map<int, std::vector<ClippedEdge>> comps;  // keyed by root = smallest node
    for (const auto& e : block_edges[b]) comps[uf.find(e.a)].push_back(e);

    int m = 1;
    for (auto& [root, edges] : comps) {
      Continuum c;
      c.block = b;
      c.m = m++;
      c.flat_index = index.count();
      std::set<int> nodes;
      for (const auto& e : edges) {
        c.edges.emplace_back(e.a, e.b);
        c.edge_lengths.push_back(e.length);
        c.edge_weights.push_back(e.conductivity / e.length);
        c.measure += e.length;
        nodes.insert(e.a);
        nodes.insert(e.b);
      }
      c.nodes.assign(nodes.begin(), nodes.end());
      index.items.push_back(std::move(c));
    }
    index.block_size[b] = index.count() - index.block_first[b];
  }

  // Fracture continua with identical edge sets (interface fractures seen by
  // both neighboring blocks) make constraint sets rank-deficient; record them
  // so basis construction can fail with a precise message.
  std::map<std::vector<std::pair<int, int>>, int> support_seen;
  for (const auto& c : index.items) {
    if (c.is_matrix()) continue;
    auto key = c.edges;
    std::sort(key.begin(), key.end());
    auto [it, inserted] = support_seen.try_emplace(key, c.flat_index);
    if (!inserted) index.duplicate_supports.emplace_back(it->second, c.flat_index);
  }
  return index;
}

}  // namespace nlmc
